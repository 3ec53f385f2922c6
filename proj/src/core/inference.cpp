#include "core/inference.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "core/parallel.hpp"
#include "json.hpp"

namespace lstr {

namespace {

constexpr double kHiddenNormGuard = 1e3;
constexpr int kAnswerCap = 8;

void apply_intervention(SparseCode& code, const InterventionSpec& spec) {
  auto it = std::lower_bound(code.active_indices.begin(), code.active_indices.end(),
                             spec.feature_id);
  const bool present = it != code.active_indices.end() && *it == spec.feature_id;
  const std::size_t at = static_cast<std::size_t>(it - code.active_indices.begin());
  switch (spec.mode) {
    case InterventionSpec::Mode::kAmplify:
      if (!(spec.value > 0.0)) throw std::invalid_argument("intervention: gamma must be > 0");
      if (present) code.active_values[at] *= spec.value;
      break;
    case InterventionSpec::Mode::kSetValue:
      if (present) {
        code.active_values[at] = spec.value;
      } else {
        code.active_indices.insert(it, spec.feature_id);
        code.active_values.insert(code.active_values.begin() + static_cast<std::ptrdiff_t>(at),
                                  spec.value);
      }
      break;
    case InterventionSpec::Mode::kAblate:
      if (present) {
        code.active_indices.erase(it);
        code.active_values.erase(code.active_values.begin() + static_cast<std::ptrdiff_t>(at));
      }
      break;
  }
}

}  // namespace

RolloutTrace latent_rollout(const Model& m, const std::vector<int>& question_tokens,
                            const RolloutOptions& opt) {
  if (opt.max_steps < 1) throw std::invalid_argument("latent_rollout: max_steps must be >= 1");
  if (opt.intervention) {
    if (opt.intervention->feature_id < 0 || opt.intervention->feature_id >= m.ltt.d_feat) {
      throw std::invalid_argument("latent_rollout: intervention feature out of range");
    }
  }
  const int k_budget = opt.k_override >= 0 ? opt.k_override : model_k_budget(m);
  const std::size_t d = static_cast<std::size_t>(m.backbone.d_model);

  RolloutTrace trace;
  Vector h(d, 0.0);
  for (int tok : question_tokens) h = backbone_step(m.backbone, h, embed_token(m.backbone, tok));
  h = backbone_step(m.backbone, h, embed_token(m.backbone, m.vocab.think_open));

  for (;;) {
    const int tok = argmax(lm_logits(m.backbone, h));
    if (tok == m.vocab.think_close) {
      trace.stopped_by_think_close = true;
      break;
    }
    if (trace.n_latent_steps >= opt.max_steps) {
      trace.hit_max_steps = true;
      break;
    }
    StepRecord rec;
    rec.h = h;
    rec.lm_argmax = tok;
    const int step = trace.n_latent_steps;
    if (opt.ablate_sparse_at_step == step) {
      SparseCode full = topk_relu(encode_preacts(m.ltt, h), k_budget);
      SparseCode empty;
      empty.preacts = full.preacts;
      if (opt.ablate_full_step) {
        // Full-step variant: transport zeroed too, only the output bias is left.
        rec.z_hat = m.ltt.b_dec;
      } else {
        rec.z_hat = decode_from_code(m.ltt, h, empty);
      }
      rec.code = std::move(empty);
    } else {
      LttForward f = ltt_forward(m.ltt, h, k_budget);
      rec.code = std::move(f.code);
      if (opt.intervention && opt.intervention->step_index == step) {
        apply_intervention(rec.code, *opt.intervention);
        rec.z_hat = decode_from_code(m.ltt, h, rec.code);
      } else {
        rec.z_hat = std::move(f.z_hat);
      }
    }
    h = backbone_step(m.backbone, h, rec.z_hat);
    trace.steps.push_back(std::move(rec));
    trace.n_latent_steps += 1;
    if (l2_norm(h) > kHiddenNormGuard) {
      // Unreachable with the gated cell (state is a convex blend with tanh),
      // kept as a rail for alternative backbones.
      trace.diverged = true;
      break;
    }
  }

  if (!trace.diverged) {
    h = backbone_step(m.backbone, h, embed_token(m.backbone, m.vocab.think_close));
    for (int i = 0; i < kAnswerCap; ++i) {
      const int tok = argmax(lm_logits(m.backbone, h));
      if (tok == m.vocab.eos) break;
      trace.answer_tokens.push_back(tok);
      h = backbone_step(m.backbone, h, embed_token(m.backbone, tok));
    }
  }
  return trace;
}

int default_max_steps(const Model& m, const Problem& p) {
  const int lr = static_cast<int>(p.reasoning_tokens.size());
  const int lc = (lr + m.cfg.r - 1) / m.cfg.r;
  return std::max(1, m.cfg.max_steps_factor * lc);
}

EvalResult evaluate(const Model& m, const std::vector<Problem>& dataset, int k_override,
                    std::vector<RolloutTrace>* traces_out, int threads) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<RolloutTrace> traces(dataset.size());
  parallel_chunks(dataset.size(), threads, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t i = b; i < e; ++i) {
      RolloutOptions opt;
      opt.k_override = k_override;
      opt.max_steps = default_max_steps(m, dataset[i]);
      traces[i] = latent_rollout(m, dataset[i].question_tokens, opt);
      traces[i].correct = traces[i].answer_tokens == oracle_answer(m.vocab, dataset[i]);
    }
  });
  EvalResult res;
  double steps = 0.0, correct = 0.0;
  for (const auto& t : traces) {
    steps += t.n_latent_steps;
    correct += t.correct ? 1.0 : 0.0;
  }
  res.accuracy = correct / static_cast<double>(dataset.size());
  res.mean_latent_steps = steps / static_cast<double>(dataset.size());
  if (traces_out) *traces_out = std::move(traces);
  return res;
}

std::vector<KSweepRow> run_k_sweep(const Model& m, const std::vector<Problem>& dataset,
                                   const std::vector<int>& k_grid, int threads) {
  if (k_grid.empty()) throw std::invalid_argument("run_k_sweep: empty grid");
  for (int k : k_grid) {
    if (k < 0 || k > m.ltt.d_feat) throw std::invalid_argument("run_k_sweep: k out of range");
  }
  std::vector<KSweepRow> rows;
  for (int k : k_grid) {
    const EvalResult r = evaluate(m, dataset, k, nullptr, threads);
    rows.push_back({k, r.accuracy, r.mean_latent_steps});
  }
  return rows;
}

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

}  // namespace

void write_k_sweep_csv(const std::string& path, const std::vector<KSweepRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_k_sweep_csv: cannot open " + path);
  out << "k,accuracy,mean_L\n";
  for (const auto& r : rows) {
    out << r.k << "," << fmt(r.accuracy) << "," << fmt(r.mean_latent_steps) << "\n";
  }
}

std::vector<RSweepRow> run_r_sweep(const std::vector<const Model*>& models_by_r,
                                   const std::vector<Problem>& dataset, int threads) {
  if (models_by_r.empty()) throw std::invalid_argument("run_r_sweep: no models");
  std::vector<RSweepRow> rows;
  for (const Model* m : models_by_r) {
    const EvalResult r = evaluate(*m, dataset, -1, nullptr, threads);
    rows.push_back({m->cfg.r, r.accuracy, r.mean_latent_steps});
  }
  return rows;
}

void write_r_sweep_csv(const std::string& path, const std::vector<RSweepRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_r_sweep_csv: cannot open " + path);
  out << "r,accuracy,mean_L\n";
  for (const auto& r : rows) {
    out << r.r << "," << fmt(r.accuracy) << "," << fmt(r.mean_latent_steps) << "\n";
  }
}

std::string trace_to_json(const Model& m, const RolloutTrace& t) {
  nlohmann::ordered_json j;
  j["n_latent_steps"] = t.n_latent_steps;
  j["answer_tokens"] = t.answer_tokens;
  std::string answer;
  for (int tok : t.answer_tokens) answer += m.vocab.token(tok);
  j["answer"] = answer;
  j["correct"] = t.correct;
  j["stopped_by_think_close"] = t.stopped_by_think_close;
  j["hit_max_steps"] = t.hit_max_steps;
  j["diverged"] = t.diverged;
  nlohmann::ordered_json steps = nlohmann::ordered_json::array();
  for (const auto& s : t.steps) {
    nlohmann::ordered_json js;
    js["lm_argmax"] = s.lm_argmax;
    js["k_eff"] = s.code.k_eff();
    js["active_indices"] = s.code.active_indices;
    js["active_values"] = s.code.active_values;
    js["h"] = s.h;
    js["z_hat"] = s.z_hat;
    steps.push_back(std::move(js));
  }
  j["steps"] = std::move(steps);
  return j.dump();
}

void write_traces_jsonl(const std::string& path, const Model& m,
                        const std::vector<RolloutTrace>& traces) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_traces_jsonl: cannot open " + path);
  for (const auto& t : traces) out << trace_to_json(m, t) << "\n";
}

}  // namespace lstr
