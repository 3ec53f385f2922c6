#include "core/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace lstr {

void BackboneGrads::init_like(const BackboneParams& p) {
  embed = Matrix(p.embed.rows, p.embed.cols);
  w_gate_x = Matrix(p.w_gate_x.rows, p.w_gate_x.cols);
  w_gate_h = Matrix(p.w_gate_h.rows, p.w_gate_h.cols);
  b_gate = Vector(p.b_gate.size(), 0.0);
  w_cand_x = Matrix(p.w_cand_x.rows, p.w_cand_x.cols);
  w_cand_h = Matrix(p.w_cand_h.rows, p.w_cand_h.cols);
  b_cand = Vector(p.b_cand.size(), 0.0);
  lm_head = Matrix(p.lm_head.rows, p.lm_head.cols);
  lm_bias = Vector(p.lm_bias.size(), 0.0);
}

BackboneParams init_backbone(int vocab_size, int d_model, Rng& rng) {
  if (vocab_size < 1 || d_model < 1) {
    throw std::invalid_argument("init_backbone: bad dimensions");
  }
  BackboneParams p;
  p.d_model = d_model;
  p.vocab_size = vocab_size;
  const std::size_t d = static_cast<std::size_t>(d_model);
  const std::size_t v = static_cast<std::size_t>(vocab_size);
  // Orthonormal embedding rows keep distinct tokens well separated; recurrent
  // matrices start orthogonal, input matrices Gaussian at 1/sqrt(d).
  p.embed = orthogonal_init(v, d, rng);
  const double xs = 1.0 / std::sqrt(static_cast<double>(d_model));
  p.w_gate_x = gaussian_init(d, d, xs, rng);
  p.w_gate_h = orthogonal_init(d, d, rng);
  p.b_gate = Vector(d, 0.0);
  p.w_cand_x = gaussian_init(d, d, xs, rng);
  p.w_cand_h = orthogonal_init(d, d, rng);
  p.b_cand = Vector(d, 0.0);
  p.lm_head = gaussian_init(d, v, xs, rng);
  p.lm_bias = Vector(v, 0.0);
  return p;
}

Vector embed_token(const BackboneParams& p, int token_id) {
  if (token_id < 0 || token_id >= p.vocab_size) {
    throw std::out_of_range("embed_token: token id out of range");
  }
  const double* r = p.embed.row(static_cast<std::size_t>(token_id));
  return Vector(r, r + p.embed.cols);
}

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Vector backbone_step(const BackboneParams& p, const Vector& h_prev, const Vector& x,
                     StepCache* cache) {
  const std::size_t d = static_cast<std::size_t>(p.d_model);
  if (h_prev.size() != d || x.size() != d) throw ShapeError("backbone_step: dimension mismatch");
  Vector gate = matvec(p.w_gate_x, x);
  {
    Vector gh = matvec(p.w_gate_h, h_prev);
    for (std::size_t i = 0; i < d; ++i) gate[i] = sigmoid(gate[i] + gh[i] + p.b_gate[i]);
  }
  Vector cand = matvec(p.w_cand_x, x);
  {
    Vector ch = matvec(p.w_cand_h, h_prev);
    for (std::size_t i = 0; i < d; ++i) cand[i] = std::tanh(cand[i] + ch[i] + p.b_cand[i]);
  }
  Vector h(d);
  for (std::size_t i = 0; i < d; ++i) {
    h[i] = (1.0 - gate[i]) * h_prev[i] + gate[i] * cand[i];
  }
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->gate = std::move(gate);
    cache->cand = std::move(cand);
  }
  return h;
}

void backbone_step_backward(const BackboneParams& p, const StepCache& c, const Vector& dh_out,
                            Vector& dh_prev, Vector& dx, BackboneGrads& g) {
  const std::size_t d = static_cast<std::size_t>(p.d_model);
  Vector dgate_pre(d), dcand_pre(d);
  dh_prev.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const double z = c.gate[i];
    const double cd = c.cand[i];
    const double dz = dh_out[i] * (cd - c.h_prev[i]);
    dgate_pre[i] = dz * z * (1.0 - z);
    dcand_pre[i] = dh_out[i] * z * (1.0 - cd * cd);
    dh_prev[i] = dh_out[i] * (1.0 - z);
  }
  add_outer(g.w_gate_x, dgate_pre, c.x);
  add_outer(g.w_gate_h, dgate_pre, c.h_prev);
  axpy(1.0, dgate_pre, g.b_gate);
  add_outer(g.w_cand_x, dcand_pre, c.x);
  add_outer(g.w_cand_h, dcand_pre, c.h_prev);
  axpy(1.0, dcand_pre, g.b_cand);

  dx = matvec_t(p.w_gate_x, dgate_pre);
  {
    Vector t = matvec_t(p.w_cand_x, dcand_pre);
    axpy(1.0, t, dx);
  }
  {
    Vector t = matvec_t(p.w_gate_h, dgate_pre);
    axpy(1.0, t, dh_prev);
    t = matvec_t(p.w_cand_h, dcand_pre);
    axpy(1.0, t, dh_prev);
  }
}

Vector lm_logits(const BackboneParams& p, const Vector& h) {
  Vector logits = matvec_t(p.lm_head, h);
  for (std::size_t j = 0; j < logits.size(); ++j) logits[j] += p.lm_bias[j];
  return logits;
}

void lm_logits_backward(const BackboneParams& p, const Vector& h, const Vector& dlogits,
                        Vector& dh_accum, BackboneGrads& g) {
  add_outer(g.lm_head, h, dlogits);
  axpy(1.0, dlogits, g.lm_bias);
  Vector t = matvec(p.lm_head, dlogits);
  axpy(1.0, t, dh_accum);
}

int argmax(const Vector& v) {
  if (v.empty()) throw std::invalid_argument("argmax: empty vector");
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

}  // namespace lstr
