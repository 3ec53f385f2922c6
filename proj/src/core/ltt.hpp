#pragma once

#include <cstdint>

#include "core/matrix.hpp"
#include "core/rng.hpp"

namespace lstr {

// Frozen statistics estimated once over a calibration pass: the empirical
// mean hidden state (mu), the mean latent target (b_dec seed) and the scalar
// embedding variance used to standardize targets.
struct CalibrationStats {
  Vector mean_hidden;
  Vector mean_target;
  double embed_variance = 1.0;
};

CalibrationStats estimate_calibration_stats(const std::vector<Vector>& hidden_samples,
                                            const std::vector<Vector>& target_samples);

// Hard-sparse activation vector: the retained Top-k of the rectified encoder
// output, plus the full pre-activations (kept for the ghost loss and for
// analysis).
struct SparseCode {
  std::vector<int> active_indices;    // ascending
  std::vector<double> active_values;  // strictly positive out of topk_relu
  Vector preacts;

  int k_eff() const { return static_cast<int>(active_indices.size()); }
  Vector dense(std::size_t d_feat) const;
  double value_of(int feature) const;  // 0 when inactive
};

enum class BdecInit { kTargetMean, kHiddenMean };

// Latent Transition Transcoder parameters. Decoder columns are unit-norm,
// the skip adapter is bias-free and zero at init, and mu recenters the
// encoder input.
struct LttParams {
  Matrix w_enc;   // d_feat x d_model
  Vector b_enc;   // d_feat
  Matrix w_dec;   // d_model x d_feat
  Vector b_dec;   // d_model
  Matrix w_skip;  // d_model x d_model
  Vector mu;      // d_model
  int d_model = 0;
  int d_feat = 0;
  int k = 0;
  double temperature = 1.0;  // stored per protocol; identity no-op at 1.0
};

LttParams init_ltt(int d_model, int expansion, int k, const CalibrationStats& calib, Rng& rng,
                   BdecInit bdec = BdecInit::kTargetMean);

// W_enc (h - mu) + b_enc
Vector encode_preacts(const LttParams& p, const Vector& h);

// ReLU then keep the k largest strictly-positive entries; ties break toward
// the lowest feature index. Entries at exactly zero are never selected, so
// k_eff can fall below k.
SparseCode topk_relu(const Vector& preacts, int k);

struct LttForward {
  Vector z_hat;
  SparseCode code;
};

// z_hat = W_skip h + W_dec s + b_dec for an explicit code. Interventions that
// edit a code and re-decode go through the same instruction sequence as the
// regular forward, so an identity edit reproduces it bit-exactly.
Vector decode_from_code(const LttParams& p, const Vector& h, const SparseCode& code);

// z_hat = W_skip h + W_dec s + b_dec. k_budget < 0 uses the trained k;
// k_budget may exceed it at inference time (capacity control).
LttForward ltt_forward(const LttParams& p, const Vector& h, int k_budget = -1);

struct LttGrads {
  Matrix w_enc;
  Vector b_enc;
  Matrix w_dec;
  Vector b_dec;
  Matrix w_skip;

  void init_like(const LttParams& p);
};

enum class SteMode { kMasked, kPassThrough };

// Backward for one transition with the Top-k selection treated as constant.
// kMasked passes gradient only through retained entries; kPassThrough lets it
// reach every positive pre-activation.
void ltt_backward(const LttParams& p, const Vector& h, const SparseCode& code,
                  const Vector& dz_hat, SteMode mode, Vector& dh_accum, LttGrads& g);

// Renormalizes every decoder column to unit norm; columns that collapsed
// below 1e-12 are redrawn from a Gaussian (and reported). Idempotent.
std::vector<int> project_decoder_columns(LttParams& p, Rng* reinit_rng = nullptr);

}  // namespace lstr
