#include "core/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "core/config.hpp"
#include "core/trainer.hpp"
#include "json.hpp"

namespace lstr {

namespace {

constexpr char kMagic[8] = {'L', 'S', 'T', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw CheckpointError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw CheckpointError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64_block(std::ostream& out, const std::vector<double>& v) {
  for (double x : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    put_u64(out, bits);
  }
}

void get_f64_block(std::istream& in, std::vector<double>& v) {
  for (double& x : v) {
    const std::uint64_t bits = get_u64(in);
    std::memcpy(&x, &bits, sizeof(x));
  }
}

nlohmann::ordered_json rng_to_json(const Rng::State& st) {
  nlohmann::ordered_json j;
  j["s"] = st.s;
  j["seed"] = st.seed;
  j["has_spare"] = st.has_spare;
  j["spare_bits"] = [&] {
    std::uint64_t bits;
    std::memcpy(&bits, &st.spare, sizeof(bits));
    return bits;
  }();
  return j;
}

Rng::State rng_from_json(const nlohmann::json& j) {
  Rng::State st;
  const auto s = j.at("s").get<std::vector<std::uint64_t>>();
  if (s.size() != 4) throw CheckpointError("checkpoint: bad rng state");
  std::copy(s.begin(), s.end(), st.s.begin());
  st.seed = j.at("seed").get<std::uint64_t>();
  st.has_spare = j.at("has_spare").get<bool>();
  const std::uint64_t bits = j.at("spare_bits").get<std::uint64_t>();
  std::memcpy(&st.spare, &bits, sizeof(st.spare));
  return st;
}

nlohmann::ordered_json shape_table(std::vector<StateTensor>& tensors) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& t : tensors) {
    nlohmann::ordered_json e;
    e["name"] = t.name;
    e["rows"] = t.rows;
    e["cols"] = t.cols;
    arr.push_back(std::move(e));
  }
  return arr;
}

}  // namespace

void CheckpointCodec::save(const std::string& path, const Trainer& t) {
  // state_tensors needs mutable access to take data pointers; saving never
  // writes through them.
  Trainer& tr = const_cast<Trainer&>(t);
  auto cur = state_tensors(tr.model_);
  auto trainable = trainable_tensors(tr.model_);

  RunConfig rc;
  rc.train = tr.model_.cfg;

  nlohmann::ordered_json header;
  header["format_version"] = kVersion;
  header["config_text"] = run_config_to_text(rc);
  header["vocab_size"] = tr.model_.vocab.size();
  header["embed_variance"] = tr.model_.calib.embed_variance;
  header["tensors"] = shape_table(cur);
  header["has_best"] = tr.has_best_;
  header["opt_step_count"] = tr.opt_.step_count;
  nlohmann::ordered_json opt_shapes = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    nlohmann::ordered_json e;
    e["name"] = trainable[i].name;
    e["len"] = trainable[i].data->size();
    opt_shapes.push_back(std::move(e));
  }
  header["opt_tensors"] = std::move(opt_shapes);
  header["dead_counters"] = tr.tracker_.steps_since_fire;
  header["dead_threshold"] = tr.tracker_.threshold;
  header["train_rng"] = rng_to_json(tr.train_rng_.state());
  header["epochs_done"] = tr.epochs_done_;
  header["best_epoch"] = tr.best_epoch_;
  header["best_val_accuracy"] = tr.best_val_accuracy_;
  header["diverged"] = tr.diverged_;

  const std::string header_bytes = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u64(out, header_bytes.size());
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  for (const auto& ten : cur) put_f64_block(out, *ten.data);
  if (tr.has_best_) {
    auto best = state_tensors(tr.best_);
    for (const auto& ten : best) put_f64_block(out, *ten.data);
  }
  for (const auto& m : tr.opt_.m) put_f64_block(out, m);
  for (const auto& v : tr.opt_.v) put_f64_block(out, v);
  out.flush();
  if (!out) throw CheckpointError("checkpoint: write failed for " + path);
}

Trainer CheckpointCodec::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("checkpoint: bad magic (not a checkpoint file)");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint64_t hlen = get_u64(in);
  std::string header_bytes(hlen, '\0');
  if (!in.read(header_bytes.data(), static_cast<std::streamsize>(hlen))) {
    throw CheckpointError("checkpoint: truncated header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad header json: ") + e.what());
  }

  Trainer t;
  try {
    RunConfig rc = parse_run_config_text(header.at("config_text").get<std::string>());
    t.model_.cfg = rc.train;
    validate(t.model_.cfg);
    if (header.at("vocab_size").get<int>() != t.model_.vocab.size()) {
      throw CheckpointError("checkpoint: vocabulary size mismatch");
    }
    const TrainConfig& cfg = t.model_.cfg;
    const std::size_t d = static_cast<std::size_t>(cfg.d_model);
    const std::size_t v = static_cast<std::size_t>(t.model_.vocab.size());
    const std::size_t df = static_cast<std::size_t>(cfg.expansion * cfg.d_model);

    auto shape_model = [&](Model& m) {
      m.cfg = cfg;
      m.backbone.d_model = cfg.d_model;
      m.backbone.vocab_size = static_cast<int>(v);
      m.backbone.embed = Matrix(v, d);
      m.backbone.w_gate_x = Matrix(d, d);
      m.backbone.w_gate_h = Matrix(d, d);
      m.backbone.b_gate = Vector(d, 0.0);
      m.backbone.w_cand_x = Matrix(d, d);
      m.backbone.w_cand_h = Matrix(d, d);
      m.backbone.b_cand = Vector(d, 0.0);
      m.backbone.lm_head = Matrix(d, v);
      m.backbone.lm_bias = Vector(v, 0.0);
      m.ltt.d_model = cfg.d_model;
      m.ltt.d_feat = static_cast<int>(df);
      m.ltt.k = cfg.k;
      m.ltt.w_enc = Matrix(df, d);
      m.ltt.b_enc = Vector(df, 0.0);
      m.ltt.w_dec = Matrix(d, df);
      m.ltt.b_dec = Vector(d, 0.0);
      m.ltt.w_skip = Matrix(d, d);
      m.ltt.mu = Vector(d, 0.0);
      m.calib.mean_hidden = Vector(d, 0.0);
      m.calib.mean_target = Vector(d, 0.0);
      m.calib.embed_variance = header.at("embed_variance").get<double>();
    };
    shape_model(t.model_);

    auto tensors = state_tensors(t.model_);
    const auto& decl = header.at("tensors");
    if (decl.size() != tensors.size()) throw CheckpointError("checkpoint: tensor table mismatch");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (decl[i].at("name").get<std::string>() != tensors[i].name ||
          decl[i].at("rows").get<std::size_t>() != tensors[i].rows ||
          decl[i].at("cols").get<std::size_t>() != tensors[i].cols) {
        throw CheckpointError("checkpoint: tensor '" + tensors[i].name + "' shape mismatch");
      }
      get_f64_block(in, *tensors[i].data);
    }

    t.has_best_ = header.at("has_best").get<bool>();
    if (t.has_best_) {
      shape_model(t.best_);
      auto best_tensors = state_tensors(t.best_);
      for (auto& ten : best_tensors) get_f64_block(in, *ten.data);
      t.best_.calib.embed_variance = t.model_.calib.embed_variance;
    }

    auto trainable = trainable_tensors(t.model_);
    const auto& opt_decl = header.at("opt_tensors");
    if (opt_decl.size() != trainable.size()) {
      throw CheckpointError("checkpoint: optimizer table mismatch");
    }
    t.opt_.m.resize(trainable.size());
    t.opt_.v.resize(trainable.size());
    for (std::size_t i = 0; i < trainable.size(); ++i) {
      const std::size_t len = opt_decl[i].at("len").get<std::size_t>();
      if (opt_decl[i].at("name").get<std::string>() != trainable[i].name ||
          len != trainable[i].data->size()) {
        throw CheckpointError("checkpoint: optimizer tensor mismatch");
      }
      t.opt_.m[i].assign(len, 0.0);
      t.opt_.v[i].assign(len, 0.0);
    }
    for (auto& m : t.opt_.m) get_f64_block(in, m);
    for (auto& v2 : t.opt_.v) get_f64_block(in, v2);
    t.opt_.step_count = header.at("opt_step_count").get<long>();

    t.tracker_.steps_since_fire = header.at("dead_counters").get<std::vector<long>>();
    t.tracker_.threshold = header.at("dead_threshold").get<long>();
    if (t.tracker_.steps_since_fire.size() != df) {
      throw CheckpointError("checkpoint: dead counter length mismatch");
    }
    t.train_rng_.restore(rng_from_json(header.at("train_rng")));
    t.epochs_done_ = header.at("epochs_done").get<int>();
    t.best_epoch_ = header.at("best_epoch").get<int>();
    t.best_val_accuracy_ = header.at("best_val_accuracy").get<double>();
    t.diverged_ = header.at("diverged").get<bool>();
    t.invariants_.k_budget = model_k_budget(t.model_);
    t.invariants_.w_skip_zero_at_init = true;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad header field: ") + e.what());
  }

  // Confirm the payload ends exactly where the declaration says it should.
  char extra;
  if (in.read(&extra, 1)) throw CheckpointError("checkpoint: trailing bytes");
  if (!in.eof() && in.fail()) throw CheckpointError("checkpoint: read failure");
  return t;
}

}  // namespace lstr
