#include "core/model.hpp"

#include <stdexcept>

namespace lstr {

void validate(const TrainConfig& cfg) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("TrainConfig: ") + what);
  };
  require(cfg.d_model >= 1, "d_model must be >= 1");
  require(cfg.expansion >= 1, "expansion must be >= 1");
  require(cfg.k >= 0 && cfg.k <= cfg.expansion * cfg.d_model, "k out of range");
  require(cfg.r >= 1, "r must be >= 1");
  require(cfg.lambda_s >= 0 && cfg.lambda_g >= 0 && cfg.lambda_tok >= 0, "lambdas must be >= 0");
  require(cfg.lr_backbone > 0 && cfg.lr_skip > 0 && cfg.lr_encoder > 0 && cfg.lr_decoder > 0,
          "learning rates must be > 0");
  require(cfg.wd_backbone >= 0 && cfg.wd_skip >= 0 && cfg.wd_encoder >= 0 && cfg.wd_decoder >= 0,
          "weight decay must be >= 0");
  require(cfg.clip_norm > 0, "clip_norm must be > 0");
  require(cfg.epochs >= 1, "epochs must be >= 1");
  require(cfg.batch_size >= 1, "batch_size must be >= 1");
  require(cfg.dead_threshold >= 1, "dead_threshold must be >= 1");
  require(cfg.val_fraction >= 0 && cfg.val_fraction < 1, "val_fraction in [0,1)");
  require(cfg.calib_problems >= 1, "calib_problems must be >= 1");
  require(cfg.max_steps_factor >= 1, "max_steps_factor must be >= 1");
  require(cfg.threads >= 1, "threads must be >= 1");
}

void ModelGrads::init_like(const Model& m) {
  backbone.init_like(m.backbone);
  ltt.init_like(m.ltt);
}

std::vector<NamedTensor> trainable_tensors(Model& m) {
  std::vector<NamedTensor> t;
  t.push_back({"backbone.embed", &m.backbone.embed.data, ParamGroup::kBackbone});
  t.push_back({"backbone.w_gate_x", &m.backbone.w_gate_x.data, ParamGroup::kBackbone});
  t.push_back({"backbone.w_gate_h", &m.backbone.w_gate_h.data, ParamGroup::kBackbone});
  t.push_back({"backbone.b_gate", &m.backbone.b_gate, ParamGroup::kBackbone});
  t.push_back({"backbone.w_cand_x", &m.backbone.w_cand_x.data, ParamGroup::kBackbone});
  t.push_back({"backbone.w_cand_h", &m.backbone.w_cand_h.data, ParamGroup::kBackbone});
  t.push_back({"backbone.b_cand", &m.backbone.b_cand, ParamGroup::kBackbone});
  t.push_back({"backbone.lm_head", &m.backbone.lm_head.data, ParamGroup::kBackbone});
  t.push_back({"backbone.lm_bias", &m.backbone.lm_bias, ParamGroup::kBackbone});
  if (!m.cfg.disable_skip) {
    t.push_back({"ltt.w_skip", &m.ltt.w_skip.data, ParamGroup::kSkip});
  }
  t.push_back({"ltt.w_enc", &m.ltt.w_enc.data, ParamGroup::kEncoder});
  t.push_back({"ltt.b_enc", &m.ltt.b_enc, ParamGroup::kEncoder});
  t.push_back({"ltt.w_dec", &m.ltt.w_dec.data, ParamGroup::kDecoder});
  t.push_back({"ltt.b_dec", &m.ltt.b_dec, ParamGroup::kDecoder});
  return t;
}

std::vector<NamedTensor> trainable_tensors(ModelGrads& g, const TrainConfig& cfg) {
  std::vector<NamedTensor> t;
  t.push_back({"backbone.embed", &g.backbone.embed.data, ParamGroup::kBackbone});
  t.push_back({"backbone.w_gate_x", &g.backbone.w_gate_x.data, ParamGroup::kBackbone});
  t.push_back({"backbone.w_gate_h", &g.backbone.w_gate_h.data, ParamGroup::kBackbone});
  t.push_back({"backbone.b_gate", &g.backbone.b_gate, ParamGroup::kBackbone});
  t.push_back({"backbone.w_cand_x", &g.backbone.w_cand_x.data, ParamGroup::kBackbone});
  t.push_back({"backbone.w_cand_h", &g.backbone.w_cand_h.data, ParamGroup::kBackbone});
  t.push_back({"backbone.b_cand", &g.backbone.b_cand, ParamGroup::kBackbone});
  t.push_back({"backbone.lm_head", &g.backbone.lm_head.data, ParamGroup::kBackbone});
  t.push_back({"backbone.lm_bias", &g.backbone.lm_bias, ParamGroup::kBackbone});
  if (!cfg.disable_skip) {
    t.push_back({"ltt.w_skip", &g.ltt.w_skip.data, ParamGroup::kSkip});
  }
  t.push_back({"ltt.w_enc", &g.ltt.w_enc.data, ParamGroup::kEncoder});
  t.push_back({"ltt.b_enc", &g.ltt.b_enc, ParamGroup::kEncoder});
  t.push_back({"ltt.w_dec", &g.ltt.w_dec.data, ParamGroup::kDecoder});
  t.push_back({"ltt.b_dec", &g.ltt.b_dec, ParamGroup::kDecoder});
  return t;
}

void ModelGrads::zero() {
  auto zero_m = [](Matrix& m) { std::fill(m.data.begin(), m.data.end(), 0.0); };
  auto zero_v = [](Vector& v) { std::fill(v.begin(), v.end(), 0.0); };
  zero_m(backbone.embed);
  zero_m(backbone.w_gate_x);
  zero_m(backbone.w_gate_h);
  zero_v(backbone.b_gate);
  zero_m(backbone.w_cand_x);
  zero_m(backbone.w_cand_h);
  zero_v(backbone.b_cand);
  zero_m(backbone.lm_head);
  zero_v(backbone.lm_bias);
  zero_m(ltt.w_enc);
  zero_v(ltt.b_enc);
  zero_m(ltt.w_dec);
  zero_v(ltt.b_dec);
  zero_m(ltt.w_skip);
}

void ModelGrads::add(const ModelGrads& other) {
  auto add_m = [](Matrix& a, const Matrix& b) {
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
  };
  auto add_v = [](Vector& a, const Vector& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  add_m(backbone.embed, other.backbone.embed);
  add_m(backbone.w_gate_x, other.backbone.w_gate_x);
  add_m(backbone.w_gate_h, other.backbone.w_gate_h);
  add_v(backbone.b_gate, other.backbone.b_gate);
  add_m(backbone.w_cand_x, other.backbone.w_cand_x);
  add_m(backbone.w_cand_h, other.backbone.w_cand_h);
  add_v(backbone.b_cand, other.backbone.b_cand);
  add_m(backbone.lm_head, other.backbone.lm_head);
  add_v(backbone.lm_bias, other.backbone.lm_bias);
  add_m(ltt.w_enc, other.ltt.w_enc);
  add_v(ltt.b_enc, other.ltt.b_enc);
  add_m(ltt.w_dec, other.ltt.w_dec);
  add_v(ltt.b_dec, other.ltt.b_dec);
  add_m(ltt.w_skip, other.ltt.w_skip);
}

std::vector<StateTensor> state_tensors(Model& m) {
  std::vector<StateTensor> t;
  auto mat = [&](const char* name, Matrix& x) { t.push_back({name, &x.data, x.rows, x.cols}); };
  auto vec = [&](const char* name, Vector& x) { t.push_back({name, &x, x.size(), 0}); };
  mat("backbone.embed", m.backbone.embed);
  mat("backbone.w_gate_x", m.backbone.w_gate_x);
  mat("backbone.w_gate_h", m.backbone.w_gate_h);
  vec("backbone.b_gate", m.backbone.b_gate);
  mat("backbone.w_cand_x", m.backbone.w_cand_x);
  mat("backbone.w_cand_h", m.backbone.w_cand_h);
  vec("backbone.b_cand", m.backbone.b_cand);
  mat("backbone.lm_head", m.backbone.lm_head);
  vec("backbone.lm_bias", m.backbone.lm_bias);
  mat("ltt.w_enc", m.ltt.w_enc);
  vec("ltt.b_enc", m.ltt.b_enc);
  mat("ltt.w_dec", m.ltt.w_dec);
  vec("ltt.b_dec", m.ltt.b_dec);
  mat("ltt.w_skip", m.ltt.w_skip);
  vec("ltt.mu", m.ltt.mu);
  vec("calib.mean_hidden", m.calib.mean_hidden);
  vec("calib.mean_target", m.calib.mean_target);
  return t;
}

}  // namespace lstr
