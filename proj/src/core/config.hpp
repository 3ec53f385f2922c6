#pragma once

#include <map>
#include <string>

#include "core/model.hpp"

namespace lstr {

// A run configuration: the training knobs plus file-system paths. On disk it
// is plain "key = value" lines; '#' starts a comment; unknown keys are
// rejected so typos fail loudly.
struct RunConfig {
  TrainConfig train;
  std::string data_path;
  std::string val_data_path;
  std::string ckpt_path;
  std::string out_dir;
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);
void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value);
std::string run_config_to_text(const RunConfig& cfg);
void save_run_config(const std::string& path, const RunConfig& cfg);
std::string get_config_kv(const RunConfig& cfg, const std::string& key);

}  // namespace lstr
