#pragma once

#include <optional>
#include <string>

#include "core/graph.hpp"
#include "core/model.hpp"

namespace lstr {

// One latent step of a rollout: the hidden state fed to the LTT, the code it
// produced, the predicted latent that was fed back, and the LM argmax at the
// decision point before the step was taken.
struct StepRecord {
  Vector h;
  Vector z_hat;
  SparseCode code;
  int lm_argmax = -1;
};

struct RolloutTrace {
  std::vector<StepRecord> steps;
  int n_latent_steps = 0;
  std::vector<int> answer_tokens;
  bool correct = false;
  bool stopped_by_think_close = false;
  bool hit_max_steps = false;
  bool diverged = false;
};

struct InterventionSpec {
  enum class Mode { kAmplify, kSetValue, kAblate };
  int step_index = 0;
  int feature_id = 0;
  Mode mode = Mode::kAblate;
  double value = 0.0;  // gamma for amplify (must be > 0), v for set
};

struct RolloutOptions {
  int k_override = -1;  // < 0: trained budget
  int max_steps = 1;
  const InterventionSpec* intervention = nullptr;
  int ablate_sparse_at_step = -1;  // zero the innovation path at this step
  bool ablate_full_step = false;   // also zero the transport path (toggle)
};

RolloutTrace latent_rollout(const Model& m, const std::vector<int>& question_tokens,
                            const RolloutOptions& opt);

int default_max_steps(const Model& m, const Problem& p);

struct EvalResult {
  double accuracy = 0.0;
  double mean_latent_steps = 0.0;
};

EvalResult evaluate(const Model& m, const std::vector<Problem>& dataset, int k_override = -1,
                    std::vector<RolloutTrace>* traces_out = nullptr, int threads = 1);

struct KSweepRow {
  int k;
  double accuracy;
  double mean_latent_steps;
};
std::vector<KSweepRow> run_k_sweep(const Model& m, const std::vector<Problem>& dataset,
                                   const std::vector<int>& k_grid, int threads = 1);
void write_k_sweep_csv(const std::string& path, const std::vector<KSweepRow>& rows);

struct RSweepRow {
  int r;
  double accuracy;
  double mean_latent_steps;
};
std::vector<RSweepRow> run_r_sweep(const std::vector<const Model*>& models_by_r,
                                   const std::vector<Problem>& dataset, int threads = 1);
void write_r_sweep_csv(const std::string& path, const std::vector<RSweepRow>& rows);

// One RolloutTrace per line.
std::string trace_to_json(const Model& m, const RolloutTrace& t);
void write_traces_jsonl(const std::string& path, const Model& m,
                        const std::vector<RolloutTrace>& traces);

}  // namespace lstr
