#pragma once

#include <string>
#include <utility>

#include "core/inference.hpp"

namespace lstr {

// Per-step count of retained features along a trace.
std::vector<int> effective_sparsity(const RolloutTrace& trace);

enum class PersistenceMetric { kJaccard, kOverlapOverK };

// Consecutive-step active-set overlap; Jaccard by default, |A n B| / k as the
// alternative. Both-empty pairs count as 0. Requires >= 2 steps.
std::vector<double> feature_persistence(const RolloutTrace& trace,
                                        PersistenceMetric metric = PersistenceMetric::kJaccard,
                                        int k_for_overlap = 0);

// G = sum_ij |c_i - c_j| / (2 n sum(c)); counts must be nonnegative with a
// positive total. Computed via the sorted form, O(n log n).
double gini(const std::vector<double>& counts);

struct FeatureStats {
  std::vector<long> activation_counts;  // per feature over a trace corpus
  double gini = 0.0;
  std::vector<long> rank_frequency;  // counts sorted descending
};

FeatureStats collect_feature_stats(const std::vector<RolloutTrace>& traces, int d_feat);

// M_ij = cosine(z_hat_i, z_hat_j); zero-norm latents give 0 entries and are
// flagged. Requires >= 2 latent steps.
Matrix cosine_trajectory_matrix(const RolloutTrace& trace,
                                std::vector<int>* zero_norm_steps = nullptr);

// Vocabulary tokens ranked by cosine similarity between a decoder column and
// each embedding row.
std::vector<std::pair<int, double>> decode_feature_tokens(const LttParams& ltt,
                                                          const Matrix& embed, int feature_id,
                                                          int top_m);

struct InterventionOutcome {
  RolloutTrace original;
  RolloutTrace intervened;
  bool answer_changed = false;
  int first_divergent_step = -1;  // first step whose active set differs; -1: none
};

InterventionOutcome intervene_feature(const Model& m, const Problem& p,
                                      const InterventionSpec& spec, int k_override = -1);

struct AblationRecord {
  double position = 0.0;  // t / L when normalized, else the raw step index
  bool flipped = false;
};

struct AblationOptions {
  bool normalize_positions = true;
  bool full_step = false;  // zero the transport path too
  std::size_t max_problems = 0;  // 0: no cap (counts correctly-solved problems)
  int k_override = -1;
  int threads = 1;
};

// For each correctly-solved problem, re-runs the rollout with the sparse
// innovation zeroed at each latent step in turn and records whether the
// answer flips to incorrect.
std::vector<AblationRecord> stepwise_ablation(const Model& m, const std::vector<Problem>& dataset,
                                              const AblationOptions& opts = {});

struct NecessityBin {
  double lo = 0.0, hi = 0.0;
  double flip_rate = 0.0;
  long count = 0;
};

std::vector<NecessityBin> necessity_profile(const std::vector<AblationRecord>& records,
                                            int n_bins);

// CSV exports (headers fixed by the interface contract).
void write_step_metrics_csv(const std::string& path, const std::vector<RolloutTrace>& traces);
void write_rank_frequency_csv(const std::string& path, const FeatureStats& stats);
void write_necessity_csv(const std::string& path, const std::vector<NecessityBin>& bins);
void write_ablation_records_csv(const std::string& path,
                                const std::vector<AblationRecord>& records);
void write_cosine_matrix_csv(const std::string& path, const Matrix& m);

}  // namespace lstr
