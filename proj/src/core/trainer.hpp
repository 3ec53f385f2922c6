#pragma once

#include <functional>
#include <string>

#include "core/graph.hpp"
#include "core/model.hpp"

namespace lstr {

// Tracks how long each feature has gone without firing; a feature is dead
// once its counter reaches the threshold. Counters move once per optimizer
// step (batch).
struct DeadFeatureTracker {
  std::vector<long> steps_since_fire;
  long threshold = 200;

  DeadFeatureTracker() = default;
  DeadFeatureTracker(int d_feat, long threshold_steps);
  void update(const std::vector<SparseCode>& batch_codes);
  std::vector<std::uint8_t> dead_mask() const;
  long dead_count() const;
};

// Decoupled AdamW: theta <- theta * (1 - lr*wd), then the bias-corrected Adam
// delta with beta = (0.9, 0.999), eps = 1e-8. Throws on non-finite gradients.
void adamw_step(std::vector<double>& theta, const std::vector<double>& grad,
                std::vector<double>& m, std::vector<double>& v, long step, double lr, double wd);

// Scales every gradient by max_norm / N when the global l2 norm N exceeds
// max_norm; returns the pre-clip norm.
double clip_global_norm(const std::vector<std::vector<double>*>& grads, double max_norm);

struct OptState {
  std::vector<Vector> m, v;  // parallel to the trainable tensor list
  long step_count = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double mean_total = 0, mean_fvu = 0, mean_skip = 0, mean_ghost = 0, mean_token_ce = 0;
  double val_accuracy = 0, val_mean_latent_steps = 0;
  long dead_features = 0;
  bool diverged = false;
};

struct InvariantReport {
  double max_decoder_norm_dev = 0.0;
  int max_k_eff = 0;
  int k_budget = 0;
  double max_alive_ghost_grad = 0.0;
  bool w_skip_zero_at_init = false;
  bool w_skip_zero_throughout = true;  // meaningful under disable_skip
  double max_embed_row_norm = 0.0;
  long steps_audited = 0;
};

// One supervised fine-tuning session. Owns the model, optimizer state, dead
// tracker and the training RNG; checkpoints capture all of it so a resumed
// session continues bit-exactly.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<Problem> train_set, std::vector<Problem> val_set);
  static Trainer resume(const std::string& checkpoint_path, std::vector<Problem> train_set,
                        std::vector<Problem> val_set);

  EpochMetrics run_epoch();

  // Replaces the working parameters with the best-validation snapshot;
  // called once a run finishes and the model goes out for evaluation.
  void finalize_to_best() {
    if (has_best_) model_ = best_;
  }

  const Model& model() const { return model_; }
  const Model& best_model() const { return has_best_ ? best_ : model_; }
  int epochs_done() const { return epochs_done_; }
  int best_epoch() const { return best_epoch_; }
  double best_val_accuracy() const { return best_val_accuracy_; }
  bool diverged() const { return diverged_; }
  long dead_features() const { return tracker_.dead_count(); }

  void set_check_invariants(bool on) { check_invariants_ = on; }
  const InvariantReport& invariant_report() const { return invariants_; }

  void save_checkpoint(const std::string& path) const;

 private:
  Trainer() = default;
  void init_from_scratch(std::vector<Problem> train_set, std::vector<Problem> val_set);
  void attach_data(std::vector<Problem> train_set, std::vector<Problem> val_set);
  void apply_gradients(ModelGrads& grads);

  Model model_;
  Model best_;
  bool has_best_ = false;
  OptState opt_;
  DeadFeatureTracker tracker_;
  Rng train_rng_{0};
  std::vector<Problem> train_set_, val_set_;
  int epochs_done_ = 0;
  int best_epoch_ = -1;
  double best_val_accuracy_ = -1.0;
  bool diverged_ = false;
  bool check_invariants_ = false;
  InvariantReport invariants_;
  InvariantProbe probe_;

  friend struct CheckpointCodec;
};

struct TrainOptions {
  std::function<void(const EpochMetrics&)> on_epoch;
  double stop_at_val_accuracy = 1.1;  // > 1: never stop early
  bool check_invariants = false;
};

struct TrainResult {
  Model model;  // best-validation snapshot
  std::vector<EpochMetrics> history;
  int best_epoch = -1;
  double best_val_accuracy = -1.0;
  bool diverged = false;
  InvariantReport invariants;
};

TrainResult train_model(const TrainConfig& cfg, const std::vector<Problem>& train_set,
                        const std::vector<Problem>& val_set, const TrainOptions& opts = {});

// Splits a dataset into train/val deterministically (every ceil(1/f)-th
// problem goes to validation).
void split_validation(const std::vector<Problem>& all, double val_fraction,
                      std::vector<Problem>& train_out, std::vector<Problem>& val_out);

}  // namespace lstr
