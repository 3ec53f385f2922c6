#include "lstr/lstr.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>

#include "core/analysis.hpp"
#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/inference.hpp"
#include "core/trainer.hpp"
#include "json.hpp"

struct lstr_config {
  lstr::RunConfig cfg;
};

struct lstr_dataset {
  lstr::Vocab vocab;
  std::vector<lstr::Problem> problems;
};

struct lstr_model {
  lstr::Trainer trainer;
  explicit lstr_model(lstr::Trainer t) : trainer(std::move(t)) {}
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

template <class Fn>
lstr_status guarded(Fn&& fn) {
  try {
    fn();
    return LSTR_OK;
  } catch (const lstr::CheckpointError& e) {
    set_error(e.what());
    return LSTR_ERR_FORMAT;
  } catch (const std::invalid_argument& e) {
    set_error(e.what());
    return LSTR_ERR_INVALID_ARGUMENT;
  } catch (const std::out_of_range& e) {
    set_error(e.what());
    return LSTR_ERR_INVALID_ARGUMENT;
  } catch (const lstr::ShapeError& e) {
    set_error(e.what());
    return LSTR_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    set_error(e.what());
    return LSTR_ERR_RUNTIME;
  } catch (...) {
    set_error("unknown error");
    return LSTR_ERR_RUNTIME;
  }
}

lstr_status require(bool ok, const char* msg) {
  if (ok) return LSTR_OK;
  set_error(msg);
  return LSTR_ERR_INVALID_ARGUMENT;
}

std::map<int, int> parse_steps_spec(const std::string& spec) {
  std::map<int, int> out;
  std::istringstream in(spec);
  std::string item;
  while (std::getline(in, item, ',')) {
    const std::size_t colon = item.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument("steps spec: expected steps:count in '" + item + "'");
    }
    const int steps = std::stoi(item.substr(0, colon));
    const int count = std::stoi(item.substr(colon + 1));
    out[steps] += count;
  }
  if (out.empty()) throw std::invalid_argument("steps spec: empty");
  return out;
}

void emit_epoch(lstr_epoch_callback cb, void* user, const lstr::EpochMetrics& m) {
  if (!cb) return;
  lstr_epoch_stats s;
  s.epoch = m.epoch;
  s.train_loss = m.mean_total;
  s.fvu = m.mean_fvu;
  s.token_ce = m.mean_token_ce;
  s.val_accuracy = m.val_accuracy;
  s.val_mean_latent_steps = m.val_mean_latent_steps;
  s.dead_features = m.dead_features;
  cb(&s, user);
}

lstr::Trainer run_training(const lstr::TrainConfig& cfg, const std::vector<lstr::Problem>& train,
                           const std::vector<lstr::Problem>* val, lstr_epoch_callback cb,
                           void* user) {
  std::vector<lstr::Problem> train_part, val_part;
  if (val) {
    train_part = train;
    val_part = *val;
  } else {
    lstr::split_validation(train, cfg.val_fraction, train_part, val_part);
  }
  lstr::Trainer trainer(cfg, std::move(train_part), std::move(val_part));
  for (int e = 0; e < cfg.epochs; ++e) {
    const lstr::EpochMetrics m = trainer.run_epoch();
    emit_epoch(cb, user, m);
    if (m.diverged) break;
  }
  trainer.finalize_to_best();
  return trainer;
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

}  // namespace

extern "C" {

const char* lstr_version(void) { return "1.0.0"; }

const char* lstr_status_name(lstr_status status) {
  switch (status) {
    case LSTR_OK: return "ok";
    case LSTR_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case LSTR_ERR_FORMAT: return "format_error";
    case LSTR_ERR_RUNTIME: return "runtime_error";
  }
  return "unknown";
}

const char* lstr_last_error(void) { return g_last_error.c_str(); }

/* ---- config ---- */

lstr_status lstr_config_create(lstr_config** out) {
  if (auto s = require(out != nullptr, "lstr_config_create: out is null")) return s;
  return guarded([&] { *out = new lstr_config(); });
}

lstr_status lstr_config_load(const char* path, lstr_config** out) {
  if (auto s = require(path && out, "lstr_config_load: null argument")) return s;
  return guarded([&] {
    auto cfg = std::make_unique<lstr_config>();
    cfg->cfg = lstr::load_run_config(path);
    *out = cfg.release();
  });
}

lstr_status lstr_config_set(lstr_config* cfg, const char* key, const char* value) {
  if (auto s = require(cfg && key && value, "lstr_config_set: null argument")) return s;
  return guarded([&] { lstr::apply_config_kv(cfg->cfg, key, value); });
}

lstr_status lstr_config_get(const lstr_config* cfg, const char* key, char* buf, size_t buf_size) {
  if (auto s = require(cfg && key && buf, "lstr_config_get: null argument")) return s;
  return guarded([&] {
    const std::string v = lstr::get_config_kv(cfg->cfg, key);
    if (v.size() + 1 > buf_size) throw std::invalid_argument("lstr_config_get: buffer too small");
    std::memcpy(buf, v.c_str(), v.size() + 1);
  });
}

lstr_status lstr_config_save(const lstr_config* cfg, const char* path) {
  if (auto s = require(cfg && path, "lstr_config_save: null argument")) return s;
  return guarded([&] { lstr::save_run_config(path, cfg->cfg); });
}

void lstr_config_free(lstr_config* cfg) { delete cfg; }

/* ---- datasets ---- */

lstr_status lstr_dataset_generate(const char* steps_spec, uint64_t seed, lstr_dataset** out) {
  if (auto s = require(steps_spec && out, "lstr_dataset_generate: null argument")) return s;
  return guarded([&] {
    auto ds = std::make_unique<lstr_dataset>();
    lstr::Rng rng(seed);
    ds->problems = lstr::generate_dataset(ds->vocab, parse_steps_spec(steps_spec), rng);
    *out = ds.release();
  });
}

lstr_status lstr_dataset_load(const char* jsonl_path, lstr_dataset** out) {
  if (auto s = require(jsonl_path && out, "lstr_dataset_load: null argument")) return s;
  return guarded([&] {
    auto ds = std::make_unique<lstr_dataset>();
    ds->problems = lstr::load_dataset_jsonl(jsonl_path, ds->vocab);
    *out = ds.release();
  });
}

lstr_status lstr_dataset_save(const lstr_dataset* ds, const char* jsonl_path) {
  if (auto s = require(ds && jsonl_path, "lstr_dataset_save: null argument")) return s;
  return guarded([&] { lstr::save_dataset_jsonl(jsonl_path, ds->problems); });
}

size_t lstr_dataset_size(const lstr_dataset* ds) { return ds ? ds->problems.size() : 0; }

void lstr_dataset_free(lstr_dataset* ds) { delete ds; }

/* ---- training ---- */

lstr_status lstr_train(const lstr_config* cfg, const lstr_dataset* train_set,
                       const lstr_dataset* val_set, lstr_epoch_callback cb, void* user_data,
                       lstr_model** out) {
  if (auto s = require(cfg && train_set && out, "lstr_train: null argument")) return s;
  return guarded([&] {
    *out = new lstr_model(run_training(cfg->cfg.train, train_set->problems,
                                       val_set ? &val_set->problems : nullptr, cb, user_data));
  });
}

/* ---- model io ---- */

lstr_status lstr_model_save(const lstr_model* model, const char* path) {
  if (auto s = require(model && path, "lstr_model_save: null argument")) return s;
  return guarded([&] { model->trainer.save_checkpoint(path); });
}

lstr_status lstr_model_load(const char* path, lstr_model** out) {
  if (auto s = require(path && out, "lstr_model_load: null argument")) return s;
  return guarded([&] { *out = new lstr_model(lstr::CheckpointCodec::load(path)); });
}

void lstr_model_free(lstr_model* model) { delete model; }

int lstr_model_sparsity_budget(const lstr_model* model) {
  return model ? model->trainer.model().ltt.k : -1;
}

int lstr_model_dict_size(const lstr_model* model) {
  return model ? model->trainer.model().ltt.d_feat : -1;
}

int lstr_model_compression_ratio(const lstr_model* model) {
  return model ? model->trainer.model().cfg.r : -1;
}

/* ---- evaluation and sweeps ---- */

lstr_status lstr_evaluate(const lstr_model* model, const lstr_dataset* ds, int k_override,
                          int threads, lstr_eval_result* out) {
  if (auto s = require(model && ds && out, "lstr_evaluate: null argument")) return s;
  return guarded([&] {
    const lstr::EvalResult r =
        lstr::evaluate(model->trainer.model(), ds->problems, k_override, nullptr,
                       std::max(1, threads));
    out->accuracy = r.accuracy;
    out->mean_latent_steps = r.mean_latent_steps;
  });
}

lstr_status lstr_sweep_k(const lstr_model* model, const lstr_dataset* ds, const int* ks,
                         size_t n_ks, int threads, const char* out_csv) {
  if (auto s = require(model && ds && ks && n_ks > 0 && out_csv, "lstr_sweep_k: null argument")) {
    return s;
  }
  return guarded([&] {
    const std::vector<int> grid(ks, ks + n_ks);
    const auto rows =
        lstr::run_k_sweep(model->trainer.model(), ds->problems, grid, std::max(1, threads));
    lstr::write_k_sweep_csv(out_csv, rows);
  });
}

lstr_status lstr_sweep_r(const lstr_config* base_cfg, const lstr_dataset* train_set,
                         const lstr_dataset* test_set, const int* rs, size_t n_rs,
                         lstr_epoch_callback cb, void* user_data, const char* out_csv) {
  if (auto s = require(base_cfg && train_set && test_set && rs && n_rs > 0 && out_csv,
                       "lstr_sweep_r: null argument")) {
    return s;
  }
  return guarded([&] {
    std::vector<lstr::Trainer> trainers;
    trainers.reserve(n_rs);
    for (size_t i = 0; i < n_rs; ++i) {
      lstr::TrainConfig cfg = base_cfg->cfg.train;
      cfg.r = rs[i];
      trainers.push_back(run_training(cfg, train_set->problems, nullptr, cb, user_data));
    }
    std::vector<const lstr::Model*> models;
    for (const auto& t : trainers) models.push_back(&t.model());
    const auto rows = lstr::run_r_sweep(models, test_set->problems,
                                        std::max(1, base_cfg->cfg.train.threads));
    lstr::write_r_sweep_csv(out_csv, rows);
  });
}

/* ---- analysis ---- */

lstr_status lstr_analyze(const lstr_model* model, const lstr_dataset* ds, int k_override,
                         int threads, const char* out_dir) {
  if (auto s = require(model && ds && out_dir, "lstr_analyze: null argument")) return s;
  return guarded([&] {
    namespace fs = std::filesystem;
    const lstr::Model& m = model->trainer.model();
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    std::vector<lstr::RolloutTrace> traces;
    const lstr::EvalResult ev =
        lstr::evaluate(m, ds->problems, k_override, &traces, std::max(1, threads));

    lstr::write_traces_jsonl((dir / "traces.jsonl").string(), m, traces);
    lstr::write_step_metrics_csv((dir / "step_metrics.csv").string(), traces);
    std::vector<lstr::RolloutTrace> correct, incorrect;
    for (const auto& t : traces) (t.correct ? correct : incorrect).push_back(t);
    lstr::write_step_metrics_csv((dir / "step_metrics_correct.csv").string(), correct);
    lstr::write_step_metrics_csv((dir / "step_metrics_incorrect.csv").string(), incorrect);

    const lstr::FeatureStats stats = lstr::collect_feature_stats(traces, m.ltt.d_feat);
    lstr::write_rank_frequency_csv((dir / "rank_frequency.csv").string(), stats);

    // Feature-token decoding for the most used features.
    {
      std::vector<int> order(stats.activation_counts.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return stats.activation_counts[static_cast<std::size_t>(a)] >
               stats.activation_counts[static_cast<std::size_t>(b)];
      });
      std::ofstream out(dir / "feature_tokens.csv", std::ios::binary);
      if (!out) throw std::runtime_error("lstr_analyze: cannot write feature_tokens.csv");
      out << "feature,count,rank,token,cosine\n";
      const int n_features = std::min<int>(32, m.ltt.d_feat);
      for (int f = 0; f < n_features; ++f) {
        const int feature = order[static_cast<std::size_t>(f)];
        const auto ranked = lstr::decode_feature_tokens(m.ltt, m.backbone.embed, feature, 5);
        for (std::size_t rank = 0; rank < ranked.size(); ++rank) {
          out << feature << "," << stats.activation_counts[static_cast<std::size_t>(feature)]
              << "," << (rank + 1) << "," << m.vocab.token(ranked[rank].first) << ","
              << fmt_double(ranked[rank].second) << "\n";
        }
      }
    }

    // Cosine trajectory matrix for the longest correct trace (fallback: the
    // longest overall) with at least two steps.
    {
      const lstr::RolloutTrace* pick = nullptr;
      for (const auto& t : traces) {
        if (t.steps.size() < 2) continue;
        const bool better = !pick || (t.correct && !pick->correct) ||
                            (t.correct == pick->correct && t.steps.size() > pick->steps.size());
        if (better) pick = &t;
      }
      if (pick) {
        lstr::write_cosine_matrix_csv((dir / "cosine_matrix.csv").string(),
                                      lstr::cosine_trajectory_matrix(*pick));
      }
    }

    nlohmann::ordered_json summary;
    summary["n_problems"] = ds->problems.size();
    summary["accuracy"] = ev.accuracy;
    summary["mean_L"] = ev.mean_latent_steps;
    summary["gini"] = stats.gini;
    summary["k_budget"] = k_override >= 0 ? k_override : lstr::model_k_budget(m);
    std::ofstream sum(dir / "summary.json", std::ios::binary);
    if (!sum) throw std::runtime_error("lstr_analyze: cannot write summary.json");
    sum << summary.dump(2) << "\n";
  });
}

lstr_status lstr_intervene(const lstr_model* model, const lstr_dataset* ds, size_t problem_index,
                           int step_index, int feature_id, const char* mode, double value,
                           const char* out_json_path) {
  if (auto s = require(model && ds && mode && out_json_path, "lstr_intervene: null argument")) {
    return s;
  }
  return guarded([&] {
    if (problem_index >= ds->problems.size()) {
      throw std::out_of_range("lstr_intervene: problem index out of range");
    }
    lstr::InterventionSpec spec;
    spec.step_index = step_index;
    spec.feature_id = feature_id;
    spec.value = value;
    const std::string mode_s(mode);
    if (mode_s == "amplify") spec.mode = lstr::InterventionSpec::Mode::kAmplify;
    else if (mode_s == "set") spec.mode = lstr::InterventionSpec::Mode::kSetValue;
    else if (mode_s == "ablate") spec.mode = lstr::InterventionSpec::Mode::kAblate;
    else throw std::invalid_argument("lstr_intervene: mode must be amplify|set|ablate");

    const lstr::Model& m = model->trainer.model();
    const lstr::InterventionOutcome out =
        lstr::intervene_feature(m, ds->problems[problem_index], spec);

    nlohmann::ordered_json j;
    j["problem_index"] = problem_index;
    j["step_index"] = step_index;
    j["feature_id"] = feature_id;
    j["mode"] = mode_s;
    j["value"] = value;
    j["answer_changed"] = out.answer_changed;
    j["first_divergent_step"] = out.first_divergent_step;
    j["original"] = nlohmann::ordered_json::parse(lstr::trace_to_json(m, out.original));
    j["intervened"] = nlohmann::ordered_json::parse(lstr::trace_to_json(m, out.intervened));
    std::ofstream f(out_json_path, std::ios::binary);
    if (!f) throw std::runtime_error("lstr_intervene: cannot open output file");
    f << j.dump() << "\n";
  });
}

lstr_status lstr_ablate_steps(const lstr_model* model, const lstr_dataset* ds, int n_bins,
                              size_t max_problems, int threads, const char* out_dir) {
  if (auto s = require(model && ds && out_dir, "lstr_ablate_steps: null argument")) return s;
  return guarded([&] {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    lstr::AblationOptions opts;
    opts.max_problems = max_problems;
    opts.threads = std::max(1, threads);
    const auto records = lstr::stepwise_ablation(model->trainer.model(), ds->problems, opts);
    lstr::write_ablation_records_csv((dir / "ablation_records.csv").string(), records);
    lstr::write_necessity_csv((dir / "necessity.csv").string(),
                              lstr::necessity_profile(records, n_bins));
  });
}

} /* extern "C" */
