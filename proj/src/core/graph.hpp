#pragma once

#include <stdexcept>

#include "core/losses.hpp"
#include "core/model.hpp"
#include "core/trajectory.hpp"

namespace lstr {

// Raised when the composite loss stops being finite; the trainer reacts by
// falling back to its last good snapshot.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Audit rails for a training run; populated only when attached (every check
// is exact, so a single violation anywhere fails the run's report).
struct InvariantProbe {
  int max_k_eff = 0;
  double max_alive_ghost_grad = 0.0;  // should stay exactly 0
  long batches_audited = 0;
};

struct BatchResult {
  LossBreakdown loss;
  std::vector<SparseCode> codes;  // every latent transition, batch order
  Vector mean_hidden;             // over latent-transition inputs (mu EMA support)
  long latent_pairs = 0;
  long token_positions = 0;
};

struct BatchOptions {
  const std::vector<std::uint8_t>* dead_mask = nullptr;  // null: nothing dead
  ModelGrads* grads = nullptr;                           // null: forward/loss only
  // Tests may pin the ghost residuals so the loss stays a plain function of
  // the parameters under finite-difference probing.
  const std::vector<Vector>* frozen_ghost_residuals = nullptr;
  int threads = 1;
  InvariantProbe* probe = nullptr;
};

// Effective Top-k budget during training and default inference.
int model_k_budget(const Model& m);

// Teacher-forced pass over a batch of assembled sequences: composite loss,
// and (when requested) parameter gradients via backprop-through-time with the
// straight-through convention at the Top-k bottleneck. Latent inputs and
// targets are constants (no gradient into the embedding table through them).
BatchResult run_batch(const Model& m, const std::vector<TrainingSequence>& batch,
                      const BatchOptions& opt);

// Backbone-only teacher-forced pass collecting (hidden state, latent target)
// pairs at every latent-prediction position; feeds calibration.
void collect_calibration_samples(const BackboneParams& backbone,
                                 const std::vector<TrainingSequence>& sequences,
                                 std::vector<Vector>& hidden_out, std::vector<Vector>& target_out);

}  // namespace lstr
