#include "core/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include "core/parallel.hpp"

namespace lstr {

std::vector<int> effective_sparsity(const RolloutTrace& trace) {
  if (trace.steps.empty()) throw std::invalid_argument("effective_sparsity: empty trace");
  std::vector<int> out;
  out.reserve(trace.steps.size());
  for (const auto& s : trace.steps) out.push_back(s.code.k_eff());
  return out;
}

std::vector<double> feature_persistence(const RolloutTrace& trace, PersistenceMetric metric,
                                        int k_for_overlap) {
  if (trace.steps.size() < 2) {
    throw std::invalid_argument("feature_persistence: needs at least 2 steps");
  }
  std::vector<double> out;
  out.reserve(trace.steps.size() - 1);
  for (std::size_t t = 0; t + 1 < trace.steps.size(); ++t) {
    const auto& a = trace.steps[t].code.active_indices;
    const auto& b = trace.steps[t + 1].code.active_indices;
    std::size_t inter = 0, ia = 0, ib = 0;
    while (ia < a.size() && ib < b.size()) {
      if (a[ia] == b[ib]) { ++inter; ++ia; ++ib; }
      else if (a[ia] < b[ib]) ++ia;
      else ++ib;
    }
    if (metric == PersistenceMetric::kJaccard) {
      const std::size_t uni = a.size() + b.size() - inter;
      out.push_back(uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni));
    } else {
      if (k_for_overlap < 1) throw std::invalid_argument("feature_persistence: k must be >= 1");
      out.push_back(static_cast<double>(inter) / static_cast<double>(k_for_overlap));
    }
  }
  return out;
}

double gini(const std::vector<double>& counts) {
  if (counts.empty()) throw std::invalid_argument("gini: empty counts");
  double total = 0.0;
  for (double c : counts) {
    if (c < 0.0) throw std::invalid_argument("gini: negative count");
    total += c;
  }
  if (!(total > 0.0)) throw std::invalid_argument("gini: all counts are zero");
  std::vector<double> sorted(counts);
  std::sort(sorted.begin(), sorted.end());
  // Equivalent sorted form of sum_ij |c_i - c_j| / (2 n total).
  const double n = static_cast<double>(sorted.size());
  double weighted = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * sorted[i];
  }
  return weighted / (n * total);
}

FeatureStats collect_feature_stats(const std::vector<RolloutTrace>& traces, int d_feat) {
  if (d_feat < 1) throw std::invalid_argument("collect_feature_stats: bad d_feat");
  FeatureStats stats;
  stats.activation_counts.assign(static_cast<std::size_t>(d_feat), 0);
  for (const auto& t : traces) {
    for (const auto& s : t.steps) {
      for (int i : s.code.active_indices) {
        stats.activation_counts[static_cast<std::size_t>(i)] += 1;
      }
    }
  }
  std::vector<double> as_double(stats.activation_counts.begin(), stats.activation_counts.end());
  stats.gini = gini(as_double);
  stats.rank_frequency = stats.activation_counts;
  std::sort(stats.rank_frequency.begin(), stats.rank_frequency.end(), std::greater<long>());
  return stats;
}

Matrix cosine_trajectory_matrix(const RolloutTrace& trace, std::vector<int>* zero_norm_steps) {
  const std::size_t n = trace.steps.size();
  if (n < 2) throw std::invalid_argument("cosine_trajectory_matrix: needs >= 2 latent steps");
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = l2_norm(trace.steps[i].z_hat);
    if (norms[i] == 0.0 && zero_norm_steps) zero_norm_steps->push_back(static_cast<int>(i));
  }
  Matrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) {
        m(i, j) = 1.0;
      } else if (norms[i] > 0.0 && norms[j] > 0.0) {
        m(i, j) = dot(trace.steps[i].z_hat, trace.steps[j].z_hat) / (norms[i] * norms[j]);
      }
    }
  }
  return m;
}

std::vector<std::pair<int, double>> decode_feature_tokens(const LttParams& ltt,
                                                          const Matrix& embed, int feature_id,
                                                          int top_m) {
  if (feature_id < 0 || feature_id >= ltt.d_feat) {
    throw std::out_of_range("decode_feature_tokens: feature out of range");
  }
  if (top_m < 1) throw std::invalid_argument("decode_feature_tokens: top_m must be >= 1");
  Vector col(static_cast<std::size_t>(ltt.d_model));
  for (std::size_t i = 0; i < col.size(); ++i) {
    col[i] = ltt.w_dec(i, static_cast<std::size_t>(feature_id));
  }
  const double cnorm = l2_norm(col);
  std::vector<std::pair<int, double>> scored;
  scored.reserve(embed.rows);
  for (std::size_t tok = 0; tok < embed.rows; ++tok) {
    const double* row = embed.row(tok);
    double d = 0.0, rn = 0.0;
    for (std::size_t i = 0; i < embed.cols; ++i) {
      d += row[i] * col[i];
      rn += row[i] * row[i];
    }
    rn = std::sqrt(rn);
    const double cos = (cnorm > 0.0 && rn > 0.0) ? d / (cnorm * rn) : 0.0;
    scored.emplace_back(static_cast<int>(tok), cos);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (static_cast<int>(scored.size()) > top_m) scored.resize(static_cast<std::size_t>(top_m));
  return scored;
}

InterventionOutcome intervene_feature(const Model& m, const Problem& p,
                                      const InterventionSpec& spec, int k_override) {
  InterventionOutcome out;
  RolloutOptions base;
  base.k_override = k_override;
  base.max_steps = default_max_steps(m, p);
  out.original = latent_rollout(m, p.question_tokens, base);
  out.original.correct = out.original.answer_tokens == oracle_answer(m.vocab, p);
  if (spec.step_index < 0 || spec.step_index >= out.original.n_latent_steps) {
    throw std::out_of_range("intervene_feature: step_index beyond trace length");
  }
  RolloutOptions mod = base;
  mod.intervention = &spec;
  out.intervened = latent_rollout(m, p.question_tokens, mod);
  out.intervened.correct = out.intervened.answer_tokens == oracle_answer(m.vocab, p);
  out.answer_changed = out.original.answer_tokens != out.intervened.answer_tokens;
  const int shared = std::min(out.original.n_latent_steps, out.intervened.n_latent_steps);
  for (int s = 0; s < shared; ++s) {
    if (out.original.steps[static_cast<std::size_t>(s)].code.active_indices !=
        out.intervened.steps[static_cast<std::size_t>(s)].code.active_indices) {
      out.first_divergent_step = s;
      break;
    }
  }
  if (out.first_divergent_step < 0 &&
      out.original.n_latent_steps != out.intervened.n_latent_steps) {
    out.first_divergent_step = shared;
  }
  return out;
}

std::vector<AblationRecord> stepwise_ablation(const Model& m, const std::vector<Problem>& dataset,
                                              const AblationOptions& opts) {
  // Collect correctly-solved problems first.
  std::vector<RolloutTrace> traces;
  evaluate(m, dataset, opts.k_override, &traces, opts.threads);
  std::vector<std::size_t> solved;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (traces[i].correct && traces[i].n_latent_steps > 0) solved.push_back(i);
    if (opts.max_problems > 0 && solved.size() >= opts.max_problems) break;
  }

  std::vector<std::vector<AblationRecord>> per_problem(solved.size());
  parallel_chunks(solved.size(), opts.threads, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t s = b; s < e; ++s) {
      const Problem& p = dataset[solved[s]];
      const RolloutTrace& base = traces[solved[s]];
      const std::vector<int> truth = oracle_answer(m.vocab, p);
      const int L = base.n_latent_steps;
      for (int t = 0; t < L; ++t) {
        RolloutOptions opt;
        opt.k_override = opts.k_override;
        opt.max_steps = default_max_steps(m, p);
        opt.ablate_sparse_at_step = t;
        opt.ablate_full_step = opts.full_step;
        const RolloutTrace ablated = latent_rollout(m, p.question_tokens, opt);
        AblationRecord rec;
        rec.position = opts.normalize_positions
                           ? static_cast<double>(t) / static_cast<double>(L)
                           : static_cast<double>(t);
        rec.flipped = ablated.answer_tokens != truth;
        per_problem[s].push_back(rec);
      }
    }
  });

  std::vector<AblationRecord> records;
  for (const auto& v : per_problem) records.insert(records.end(), v.begin(), v.end());
  return records;
}

std::vector<NecessityBin> necessity_profile(const std::vector<AblationRecord>& records,
                                            int n_bins) {
  if (records.empty()) throw std::invalid_argument("necessity_profile: no records");
  if (n_bins < 2) throw std::invalid_argument("necessity_profile: n_bins must be >= 2");
  std::vector<NecessityBin> bins(static_cast<std::size_t>(n_bins));
  std::vector<long> flips(static_cast<std::size_t>(n_bins), 0);
  for (int b = 0; b < n_bins; ++b) {
    bins[static_cast<std::size_t>(b)].lo = static_cast<double>(b) / n_bins;
    bins[static_cast<std::size_t>(b)].hi = static_cast<double>(b + 1) / n_bins;
  }
  for (const auto& r : records) {
    int b = static_cast<int>(r.position * n_bins);
    b = std::clamp(b, 0, n_bins - 1);
    bins[static_cast<std::size_t>(b)].count += 1;
    flips[static_cast<std::size_t>(b)] += r.flipped ? 1 : 0;
  }
  for (int b = 0; b < n_bins; ++b) {
    auto& bin = bins[static_cast<std::size_t>(b)];
    bin.flip_rate = bin.count > 0 ? static_cast<double>(flips[static_cast<std::size_t>(b)]) /
                                        static_cast<double>(bin.count)
                                  : 0.0;
  }
  return bins;
}

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

}  // namespace

void write_step_metrics_csv(const std::string& path, const std::vector<RolloutTrace>& traces) {
  // Mean k_eff and persistence per step index across traces; persistence at
  // step t covers the transition t -> t+1.
  std::map<int, std::pair<double, long>> keff_acc;
  std::map<int, std::pair<double, long>> pers_acc;
  for (const auto& t : traces) {
    if (t.steps.empty()) continue;
    const auto ks = effective_sparsity(t);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      auto& a = keff_acc[static_cast<int>(i)];
      a.first += ks[i];
      a.second += 1;
    }
    if (t.steps.size() >= 2) {
      const auto ps = feature_persistence(t);
      for (std::size_t i = 0; i < ps.size(); ++i) {
        auto& a = pers_acc[static_cast<int>(i)];
        a.first += ps[i];
        a.second += 1;
      }
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_step_metrics_csv: cannot open " + path);
  out << "step,k_eff,persistence\n";
  for (const auto& [step, acc] : keff_acc) {
    const double keff = acc.first / static_cast<double>(acc.second);
    double pers = 0.0;
    auto it = pers_acc.find(step);
    if (it != pers_acc.end()) pers = it->second.first / static_cast<double>(it->second.second);
    out << step << "," << fmt(keff) << "," << fmt(pers) << "\n";
  }
}

void write_rank_frequency_csv(const std::string& path, const FeatureStats& stats) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_rank_frequency_csv: cannot open " + path);
  out << "rank,count\n";
  for (std::size_t i = 0; i < stats.rank_frequency.size(); ++i) {
    out << (i + 1) << "," << stats.rank_frequency[i] << "\n";
  }
}

void write_necessity_csv(const std::string& path, const std::vector<NecessityBin>& bins) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_necessity_csv: cannot open " + path);
  out << "bin_lo,bin_hi,flip_rate\n";
  for (const auto& b : bins) {
    out << fmt(b.lo) << "," << fmt(b.hi) << "," << fmt(b.flip_rate) << "\n";
  }
}

void write_ablation_records_csv(const std::string& path,
                                const std::vector<AblationRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ablation_records_csv: cannot open " + path);
  out << "position,flipped\n";
  for (const auto& r : records) out << fmt(r.position) << "," << (r.flipped ? 1 : 0) << "\n";
}

void write_cosine_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_cosine_matrix_csv: cannot open " + path);
  out << "i,j,cosine\n";
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      out << i << "," << j << "," << fmt(m(i, j)) << "\n";
    }
  }
}

}  // namespace lstr
