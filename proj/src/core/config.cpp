#include "core/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lstr {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: bad boolean '" + v + "'");
}

int parse_int(const std::string& v) {
  try {
    std::size_t used = 0;
    int x = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& v) {
  try {
    std::size_t used = 0;
    unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return static_cast<std::uint64_t>(x);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad unsigned integer '" + v + "'");
  }
}

double parse_double(const std::string& v) {
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad real '" + v + "'");
  }
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

const char* ste_name(SteMode m) { return m == SteMode::kMasked ? "masked" : "passthrough"; }
const char* bdec_name(BdecInit m) {
  return m == BdecInit::kTargetMean ? "target_mean" : "hidden_mean";
}
const char* bool_name(bool b) { return b ? "true" : "false"; }

}  // namespace

void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
  TrainConfig& t = cfg.train;
  if (key == "d_model") t.d_model = parse_int(value);
  else if (key == "expansion") t.expansion = parse_int(value);
  else if (key == "k") t.k = parse_int(value);
  else if (key == "r") t.r = parse_int(value);
  else if (key == "lambda_s") t.lambda_s = parse_double(value);
  else if (key == "lambda_g") t.lambda_g = parse_double(value);
  else if (key == "lambda_tok") t.lambda_tok = parse_double(value);
  else if (key == "lr_backbone") t.lr_backbone = parse_double(value);
  else if (key == "wd_backbone") t.wd_backbone = parse_double(value);
  else if (key == "lr_skip") t.lr_skip = parse_double(value);
  else if (key == "wd_skip") t.wd_skip = parse_double(value);
  else if (key == "lr_encoder") t.lr_encoder = parse_double(value);
  else if (key == "wd_encoder") t.wd_encoder = parse_double(value);
  else if (key == "lr_decoder") t.lr_decoder = parse_double(value);
  else if (key == "wd_decoder") t.wd_decoder = parse_double(value);
  else if (key == "clip_norm") t.clip_norm = parse_double(value);
  else if (key == "epochs") t.epochs = parse_int(value);
  else if (key == "batch_size") t.batch_size = parse_int(value);
  else if (key == "dead_threshold") t.dead_threshold = parse_int(value);
  else if (key == "seed") t.seed = parse_u64(value);
  else if (key == "disable_skip") t.disable_skip = parse_bool(value);
  else if (key == "disable_sparse") t.disable_sparse = parse_bool(value);
  else if (key == "ste") {
    if (value == "masked") t.ste = SteMode::kMasked;
    else if (value == "passthrough") t.ste = SteMode::kPassThrough;
    else throw std::invalid_argument("config: ste must be masked|passthrough");
  } else if (key == "bdec_init") {
    if (value == "target_mean") t.bdec_init = BdecInit::kTargetMean;
    else if (value == "hidden_mean") t.bdec_init = BdecInit::kHiddenMean;
    else throw std::invalid_argument("config: bdec_init must be target_mean|hidden_mean");
  } else if (key == "per_dim_standardize") t.per_dim_standardize = parse_bool(value);
  else if (key == "per_dim_fvu") t.per_dim_fvu = parse_bool(value);
  else if (key == "project_decoder_grads") t.project_decoder_grads = parse_bool(value);
  else if (key == "mu_running_mean") t.mu_running_mean = parse_bool(value);
  else if (key == "val_fraction") t.val_fraction = parse_double(value);
  else if (key == "calib_problems") t.calib_problems = parse_int(value);
  else if (key == "max_steps_factor") t.max_steps_factor = parse_int(value);
  else if (key == "threads") t.threads = parse_int(value);
  else if (key == "data") cfg.data_path = value;
  else if (key == "val_data") cfg.val_data_path = value;
  else if (key == "ckpt") cfg.ckpt_path = value;
  else if (key == "out") cfg.out_dir = value;
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

std::string get_config_kv(const RunConfig& cfg, const std::string& key) {
  const TrainConfig& t = cfg.train;
  if (key == "d_model") return std::to_string(t.d_model);
  if (key == "expansion") return std::to_string(t.expansion);
  if (key == "k") return std::to_string(t.k);
  if (key == "r") return std::to_string(t.r);
  if (key == "lambda_s") return fmt_double(t.lambda_s);
  if (key == "lambda_g") return fmt_double(t.lambda_g);
  if (key == "lambda_tok") return fmt_double(t.lambda_tok);
  if (key == "lr_backbone") return fmt_double(t.lr_backbone);
  if (key == "wd_backbone") return fmt_double(t.wd_backbone);
  if (key == "lr_skip") return fmt_double(t.lr_skip);
  if (key == "wd_skip") return fmt_double(t.wd_skip);
  if (key == "lr_encoder") return fmt_double(t.lr_encoder);
  if (key == "wd_encoder") return fmt_double(t.wd_encoder);
  if (key == "lr_decoder") return fmt_double(t.lr_decoder);
  if (key == "wd_decoder") return fmt_double(t.wd_decoder);
  if (key == "clip_norm") return fmt_double(t.clip_norm);
  if (key == "epochs") return std::to_string(t.epochs);
  if (key == "batch_size") return std::to_string(t.batch_size);
  if (key == "dead_threshold") return std::to_string(t.dead_threshold);
  if (key == "seed") return std::to_string(t.seed);
  if (key == "disable_skip") return bool_name(t.disable_skip);
  if (key == "disable_sparse") return bool_name(t.disable_sparse);
  if (key == "ste") return ste_name(t.ste);
  if (key == "bdec_init") return bdec_name(t.bdec_init);
  if (key == "per_dim_standardize") return bool_name(t.per_dim_standardize);
  if (key == "per_dim_fvu") return bool_name(t.per_dim_fvu);
  if (key == "project_decoder_grads") return bool_name(t.project_decoder_grads);
  if (key == "mu_running_mean") return bool_name(t.mu_running_mean);
  if (key == "val_fraction") return fmt_double(t.val_fraction);
  if (key == "calib_problems") return std::to_string(t.calib_problems);
  if (key == "max_steps_factor") return std::to_string(t.max_steps_factor);
  if (key == "threads") return std::to_string(t.threads);
  if (key == "data") return cfg.data_path;
  if (key == "val_data") return cfg.val_data_path;
  if (key == "ckpt") return cfg.ckpt_path;
  if (key == "out") return cfg.out_dir;
  throw std::invalid_argument("config: unknown key '" + key + "'");
}

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(line_no) + " is not key = value");
    }
    apply_config_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_run_config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config_text(ss.str());
}

std::string run_config_to_text(const RunConfig& cfg) {
  static const char* keys[] = {
      "d_model", "expansion", "k", "r",
      "lambda_s", "lambda_g", "lambda_tok",
      "lr_backbone", "wd_backbone", "lr_skip", "wd_skip",
      "lr_encoder", "wd_encoder", "lr_decoder", "wd_decoder",
      "clip_norm", "epochs", "batch_size", "dead_threshold", "seed",
      "disable_skip", "disable_sparse", "ste", "bdec_init",
      "per_dim_standardize", "per_dim_fvu", "project_decoder_grads", "mu_running_mean",
      "val_fraction", "calib_problems", "max_steps_factor", "threads",
      "data", "val_data", "ckpt", "out"};
  std::ostringstream out;
  for (const char* key : keys) {
    out << key << " = " << get_config_kv(cfg, key) << "\n";
  }
  return out.str();
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_run_config: cannot open " + path);
  out << run_config_to_text(cfg);
  if (!out) throw std::runtime_error("save_run_config: write failed for " + path);
}

}  // namespace lstr
