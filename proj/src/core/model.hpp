#pragma once

#include <string>

#include "core/backbone.hpp"
#include "core/ltt.hpp"
#include "core/taskgen.hpp"

namespace lstr {

enum class ParamGroup { kBackbone, kSkip, kEncoder, kDecoder };

// Every knob of a training run. Defaults follow the reference protocol
// (hierarchical learning rates, clip 1.0, expansion 16, k 128); desk-scale
// experiments override the sizes and rates through config files.
struct TrainConfig {
  int d_model = 64;
  int expansion = 16;  // dictionary width multiplier (d_feat = expansion * d_model)
  int k = 128;
  int r = 2;

  double lambda_s = 0.1;
  double lambda_g = 0.1;
  double lambda_tok = 1.0;

  double lr_backbone = 1e-4, wd_backbone = 0.1;
  double lr_skip = 2e-4, wd_skip = 0.0;
  double lr_encoder = 2e-4, wd_encoder = 0.0;
  double lr_decoder = 2e-4, wd_decoder = 0.0;

  double clip_norm = 1.0;
  int epochs = 30;
  int batch_size = 32;
  int dead_threshold = 200;  // optimizer steps with no firing before a feature counts as dead
  std::uint64_t seed = 0;

  bool disable_skip = false;    // "w/o Skip": W_skip pinned at zero, skip loss off
  bool disable_sparse = false;  // "w/o Sparse": Top-k widened to the full dictionary

  SteMode ste = SteMode::kMasked;
  BdecInit bdec_init = BdecInit::kTargetMean;
  bool per_dim_standardize = false;
  bool per_dim_fvu = false;
  bool project_decoder_grads = true;  // remove each column-gradient's parallel component
  bool mu_running_mean = false;       // track mu as an EMA instead of freezing it

  double val_fraction = 0.1;
  int calib_problems = 256;
  int max_steps_factor = 4;  // rollout cap = factor * expected latent length
  int threads = 1;
};

void validate(const TrainConfig& cfg);  // throws std::invalid_argument

struct Model {
  Vocab vocab;
  BackboneParams backbone;
  LttParams ltt;
  CalibrationStats calib;
  TrainConfig cfg;
};

struct ModelGrads {
  BackboneGrads backbone;
  LttGrads ltt;

  void init_like(const Model& m);
  void zero();
  void add(const ModelGrads& other);  // fixed-order accumulation
};

struct NamedTensor {
  std::string name;
  std::vector<double>* data;
  ParamGroup group;
};

// Trainable tensors in a fixed declared order. Under disable_skip the skip
// adapter is excluded (it stays bit-zero).
std::vector<NamedTensor> trainable_tensors(Model& m);
std::vector<NamedTensor> trainable_tensors(ModelGrads& g, const TrainConfig& cfg);

// Full persistent state for checkpoints: trainable tensors plus the frozen
// calibration vectors, in a fixed declared order.
struct StateTensor {
  std::string name;
  std::vector<double>* data;
  std::size_t rows, cols;  // cols == 0 marks a plain vector
};
std::vector<StateTensor> state_tensors(Model& m);

}  // namespace lstr
