// lstr command-line front end. Links only the public C API.
//
// Subcommands: gen-data, train, eval, sweep-k, sweep-r, analyze, intervene,
// ablate-steps. Exit codes: 0 success, 1 usage error, 2 runtime failure.
// Every randomized path is controlled by --seed (fallback: LSTR_SEED).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lstr/lstr.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Failure {
  std::string message;
};

void check(lstr_status status, const std::string& what) {
  if (status != LSTR_OK) {
    throw Failure{what + ": " + lstr_status_name(status) + ": " + lstr_last_error()};
  }
}

using ConfigPtr = std::unique_ptr<lstr_config, decltype(&lstr_config_free)>;
using DatasetPtr = std::unique_ptr<lstr_dataset, decltype(&lstr_dataset_free)>;
using ModelPtr = std::unique_ptr<lstr_model, decltype(&lstr_model_free)>;

ConfigPtr make_config(const std::string& path) {
  lstr_config* raw = nullptr;
  if (path.empty()) {
    check(lstr_config_create(&raw), "config");
  } else {
    check(lstr_config_load(path.c_str(), &raw), "config " + path);
  }
  return ConfigPtr(raw, &lstr_config_free);
}

DatasetPtr load_dataset(const std::string& path) {
  lstr_dataset* raw = nullptr;
  check(lstr_dataset_load(path.c_str(), &raw), "dataset " + path);
  return DatasetPtr(raw, &lstr_dataset_free);
}

ModelPtr load_model(const std::string& path) {
  lstr_model* raw = nullptr;
  check(lstr_model_load(path.c_str(), &raw), "checkpoint " + path);
  return ModelPtr(raw, &lstr_model_free);
}

std::string config_value(const lstr_config* cfg, const std::string& key) {
  char buf[512];
  check(lstr_config_get(cfg, key.c_str(), buf, sizeof(buf)), "config get " + key);
  return buf;
}

// Flags override file values; only flags the user actually passed are applied.
void apply_flag(lstr_config* cfg, const std::string& key, const std::string& value) {
  check(lstr_config_set(cfg, key.c_str(), value.c_str()), "config set " + key);
}

std::uint64_t env_seed_fallback() {
  if (const char* env = std::getenv("LSTR_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return 0;
}

std::string default_run_dir(std::uint64_t seed) {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  char stamp[64];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm_utc);
  return std::string("runs/") + stamp + "-seed" + std::to_string(seed);
}

void print_epoch(const lstr_epoch_stats* s, void*) {
  std::printf("epoch %d loss=%.6f fvu=%.4f token_ce=%.4f val_acc=%.4f val_L=%.2f dead=%ld\n",
              s->epoch, s->train_loss, s->fvu, s->token_ce, s->val_accuracy,
              s->val_mean_latent_steps, s->dead_features);
  std::fflush(stdout);
}

std::vector<int> parse_grid(const std::string& csv) {
  std::vector<int> out;
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  if (out.empty()) throw Failure{"empty grid '" + csv + "'"};
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lstr: sparse latent reasoning laboratory"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic arithmetic dataset");
  std::string gen_steps = "3";
  int gen_count = 1000;
  std::string gen_mix;
  std::uint64_t gen_seed = env_seed_fallback();
  std::string gen_out = "data.jsonl";
  gen->add_option("--steps", gen_steps, "chain lengths, comma separated (count split evenly)");
  gen->add_option("--count", gen_count, "total number of problems");
  gen->add_option("--mix", gen_mix, "explicit steps:count pairs, overrides --steps/--count");
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--out", gen_out, "output JSONL path")->required();

  // train
  auto* train = app.add_subcommand("train", "supervised fine-tuning run");
  std::string train_config, train_data, train_val_data, train_out;
  std::vector<std::pair<std::string, std::string>> train_overrides;
  train->add_option("--config", train_config, "run config file (key = value)");
  train->add_option("--data", train_data, "training dataset (JSONL)");
  train->add_option("--val-data", train_val_data, "validation dataset (default: split)");
  train->add_option("--out", train_out, "output directory");
  std::string train_seed, train_epochs, train_r, train_k, train_threads;
  train->add_option("--seed", train_seed, "override seed");
  train->add_option("--epochs", train_epochs, "override epochs");
  train->add_option("--r", train_r, "override compression ratio");
  train->add_option("--k", train_k, "override sparsity budget");
  train->add_option("--threads", train_threads, "worker cap (default 1, deterministic per config)");
  std::vector<std::string> train_set_kv;
  train->add_option("--set", train_set_kv, "extra key=value overrides")->take_all();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_csv;
  int eval_k = -1, eval_threads = 1;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--data", eval_data, "evaluation dataset")->required();
  eval->add_option("--k", eval_k, "sparsity override (default: trained k)");
  eval->add_option("--threads", eval_threads, "worker cap");
  eval->add_option("--csv", eval_csv, "also write accuracy,mean_L to this CSV");

  // sweep-k
  auto* sweepk = app.add_subcommand("sweep-k", "inference-time sparsity sweep");
  std::string sk_ckpt, sk_data, sk_grid = "1,2,4,8,16,32", sk_out = "sweep_k.csv";
  int sk_threads = 1;
  sweepk->add_option("--ckpt", sk_ckpt)->required();
  sweepk->add_option("--data", sk_data)->required();
  sweepk->add_option("--grid", sk_grid, "comma-separated k values");
  sweepk->add_option("--out", sk_out, "output CSV");
  sweepk->add_option("--threads", sk_threads);

  // sweep-r
  auto* sweepr = app.add_subcommand("sweep-r", "train and evaluate across compression ratios");
  std::string sr_config, sr_train, sr_test, sr_grid = "1,2,4", sr_out = "sweep_r.csv";
  bool sr_quiet = false;
  sweepr->add_option("--config", sr_config, "base run config");
  sweepr->add_option("--data", sr_train, "training dataset")->required();
  sweepr->add_option("--test-data", sr_test, "held-out evaluation dataset")->required();
  sweepr->add_option("--grid", sr_grid, "comma-separated r values");
  sweepr->add_option("--out", sr_out, "output CSV");
  sweepr->add_flag("--quiet", sr_quiet, "suppress per-epoch logs");
  std::string sr_seed, sr_epochs;
  sweepr->add_option("--seed", sr_seed, "override seed");
  sweepr->add_option("--epochs", sr_epochs, "override epochs");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "mechanistic metrics and trace dumps");
  std::string an_ckpt, an_data, an_out = "analysis";
  int an_k = -1, an_threads = 1;
  analyze->add_option("--ckpt", an_ckpt)->required();
  analyze->add_option("--data", an_data)->required();
  analyze->add_option("--out", an_out, "output directory");
  analyze->add_option("--k", an_k, "sparsity override");
  analyze->add_option("--threads", an_threads);

  // intervene
  auto* intervene = app.add_subcommand("intervene", "single-feature causal intervention");
  std::string iv_ckpt, iv_data, iv_mode = "ablate", iv_out = "intervention.json";
  std::size_t iv_problem = 0;
  int iv_step = 0, iv_feature = 0;
  double iv_value = 0.0;
  intervene->add_option("--ckpt", iv_ckpt)->required();
  intervene->add_option("--data", iv_data)->required();
  intervene->add_option("--problem", iv_problem, "problem index in the dataset");
  intervene->add_option("--step", iv_step, "latent step index");
  intervene->add_option("--feature", iv_feature, "feature id")->required();
  intervene->add_option("--mode", iv_mode, "amplify | set | ablate");
  intervene->add_option("--value", iv_value, "gamma for amplify / value for set");
  intervene->add_option("--out", iv_out, "output JSON path");

  // ablate-steps
  auto* ablate = app.add_subcommand("ablate-steps", "step-wise causal necessity profile");
  std::string ab_ckpt, ab_data, ab_out = "ablation";
  int ab_bins = 10, ab_threads = 1;
  std::size_t ab_max = 0;
  ablate->add_option("--ckpt", ab_ckpt)->required();
  ablate->add_option("--data", ab_data)->required();
  ablate->add_option("--bins", ab_bins, "histogram bins");
  ablate->add_option("--max-problems", ab_max, "cap on correctly-solved problems (0 = all)");
  ablate->add_option("--out", ab_out, "output directory");
  ablate->add_option("--threads", ab_threads);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return (e.get_exit_code() == 0) ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      std::string spec = gen_mix;
      if (spec.empty()) {
        const std::vector<int> lengths = parse_grid(gen_steps);
        if (gen_count < 1) throw Failure{"--count must be >= 1"};
        std::ostringstream ss;
        const int base = gen_count / static_cast<int>(lengths.size());
        int extra = gen_count % static_cast<int>(lengths.size());
        for (std::size_t i = 0; i < lengths.size(); ++i) {
          const int n = base + (extra-- > 0 ? 1 : 0);
          if (i) ss << ",";
          ss << lengths[i] << ":" << n;
        }
        spec = ss.str();
      }
      lstr_dataset* ds = nullptr;
      check(lstr_dataset_generate(spec.c_str(), gen_seed, &ds), "gen-data");
      DatasetPtr holder(ds, &lstr_dataset_free);
      check(lstr_dataset_save(ds, gen_out.c_str()), "gen-data save");
      std::printf("wrote %zu problems to %s (spec %s, seed %llu)\n", lstr_dataset_size(ds),
                  gen_out.c_str(), spec.c_str(),
                  static_cast<unsigned long long>(gen_seed));
    } else if (train->parsed()) {
      ConfigPtr cfg = make_config(train_config);
      if (!train_data.empty()) apply_flag(cfg.get(), "data", train_data);
      if (!train_val_data.empty()) apply_flag(cfg.get(), "val_data", train_val_data);
      if (!train_out.empty()) apply_flag(cfg.get(), "out", train_out);
      if (!train_seed.empty()) apply_flag(cfg.get(), "seed", train_seed);
      if (!train_epochs.empty()) apply_flag(cfg.get(), "epochs", train_epochs);
      if (!train_r.empty()) apply_flag(cfg.get(), "r", train_r);
      if (!train_k.empty()) apply_flag(cfg.get(), "k", train_k);
      if (!train_threads.empty()) apply_flag(cfg.get(), "threads", train_threads);
      for (const auto& kv : train_set_kv) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) throw Failure{"--set expects key=value, got '" + kv + "'"};
        apply_flag(cfg.get(), kv.substr(0, eq), kv.substr(eq + 1));
      }
      const std::string data_path = config_value(cfg.get(), "data");
      if (data_path.empty()) throw Failure{"no training data: pass --data or set data in config"};
      std::string out_dir = config_value(cfg.get(), "out");
      if (out_dir.empty()) {
        out_dir = default_run_dir(std::strtoull(config_value(cfg.get(), "seed").c_str(),
                                                nullptr, 10));
        apply_flag(cfg.get(), "out", out_dir);
      }
      std::filesystem::create_directories(out_dir);
      check(lstr_config_save(cfg.get(), (out_dir + "/resolved.cfg").c_str()), "resolved config");

      DatasetPtr train_ds = load_dataset(data_path);
      DatasetPtr val_ds(nullptr, &lstr_dataset_free);
      const std::string val_path = config_value(cfg.get(), "val_data");
      if (!val_path.empty()) val_ds = load_dataset(val_path);

      std::FILE* metrics = std::fopen((out_dir + "/train_metrics.csv").c_str(), "wb");
      if (!metrics) throw Failure{"cannot open " + out_dir + "/train_metrics.csv"};
      std::fprintf(metrics, "epoch,loss,fvu,token_ce,val_accuracy,val_mean_L,dead_features\n");
      struct Sink {
        std::FILE* f;
      } sink{metrics};
      auto cb = [](const lstr_epoch_stats* s, void* user) {
        print_epoch(s, nullptr);
        auto* si = static_cast<Sink*>(user);
        std::fprintf(si->f, "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%ld\n", s->epoch, s->train_loss,
                     s->fvu, s->token_ce, s->val_accuracy, s->val_mean_latent_steps,
                     s->dead_features);
      };
      lstr_model* model = nullptr;
      const lstr_status st =
          lstr_train(cfg.get(), train_ds.get(), val_ds.get(), cb, &sink, &model);
      std::fclose(metrics);
      check(st, "train");
      ModelPtr holder(model, &lstr_model_free);
      const std::string ckpt = out_dir + "/best.ckpt";
      check(lstr_model_save(model, ckpt.c_str()), "checkpoint save");
      std::printf("saved %s\n", ckpt.c_str());
    } else if (eval->parsed()) {
      ModelPtr model = load_model(eval_ckpt);
      DatasetPtr ds = load_dataset(eval_data);
      lstr_eval_result r{};
      check(lstr_evaluate(model.get(), ds.get(), eval_k, eval_threads, &r), "eval");
      std::printf("accuracy=%.6g mean_L=%.6g\n", r.accuracy, r.mean_latent_steps);
      if (!eval_csv.empty()) {
        std::FILE* f = std::fopen(eval_csv.c_str(), "wb");
        if (!f) throw Failure{"cannot open " + eval_csv};
        std::fprintf(f, "accuracy,mean_L\n%.10g,%.10g\n", r.accuracy, r.mean_latent_steps);
        std::fclose(f);
      }
    } else if (sweepk->parsed()) {
      ModelPtr model = load_model(sk_ckpt);
      DatasetPtr ds = load_dataset(sk_data);
      const std::vector<int> grid = parse_grid(sk_grid);
      check(lstr_sweep_k(model.get(), ds.get(), grid.data(), grid.size(), sk_threads,
                         sk_out.c_str()),
            "sweep-k");
      std::printf("wrote %s\n", sk_out.c_str());
    } else if (sweepr->parsed()) {
      ConfigPtr cfg = make_config(sr_config);
      if (!sr_seed.empty()) apply_flag(cfg.get(), "seed", sr_seed);
      if (!sr_epochs.empty()) apply_flag(cfg.get(), "epochs", sr_epochs);
      DatasetPtr train_ds = load_dataset(sr_train);
      DatasetPtr test_ds = load_dataset(sr_test);
      const std::vector<int> grid = parse_grid(sr_grid);
      check(lstr_sweep_r(cfg.get(), train_ds.get(), test_ds.get(), grid.data(), grid.size(),
                         sr_quiet ? nullptr : &print_epoch, nullptr, sr_out.c_str()),
            "sweep-r");
      std::printf("wrote %s\n", sr_out.c_str());
    } else if (analyze->parsed()) {
      ModelPtr model = load_model(an_ckpt);
      DatasetPtr ds = load_dataset(an_data);
      check(lstr_analyze(model.get(), ds.get(), an_k, an_threads, an_out.c_str()), "analyze");
      std::printf("wrote analysis to %s\n", an_out.c_str());
    } else if (intervene->parsed()) {
      ModelPtr model = load_model(iv_ckpt);
      DatasetPtr ds = load_dataset(iv_data);
      check(lstr_intervene(model.get(), ds.get(), iv_problem, iv_step, iv_feature,
                           iv_mode.c_str(), iv_value, iv_out.c_str()),
            "intervene");
      std::printf("wrote %s\n", iv_out.c_str());
    } else if (ablate->parsed()) {
      ModelPtr model = load_model(ab_ckpt);
      DatasetPtr ds = load_dataset(ab_data);
      check(lstr_ablate_steps(model.get(), ds.get(), ab_bins, ab_max, ab_threads,
                              ab_out.c_str()),
            "ablate-steps");
      std::printf("wrote ablation outputs to %s\n", ab_out.c_str());
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
