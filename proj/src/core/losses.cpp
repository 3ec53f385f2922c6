#include "core/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace lstr {

LossBreakdown composite_loss(double fvu, double skip, double ghost, double token_ce,
                             double lambda_s, double lambda_g, double lambda_tok) {
  if (lambda_s < 0.0 || lambda_g < 0.0 || lambda_tok < 0.0) {
    throw std::invalid_argument("composite_loss: negative weight");
  }
  LossBreakdown b;
  b.fvu = fvu;
  b.skip = skip;
  b.ghost = ghost;
  b.token_ce = token_ce;
  b.lambda_s = lambda_s;
  b.lambda_g = lambda_g;
  b.lambda_tok = lambda_tok;
  b.total = fvu + lambda_s * skip + lambda_g * ghost + lambda_tok * token_ce;
  return b;
}

namespace {

void check_batch(const std::vector<Vector>& z_hat, const std::vector<Vector>& z_star) {
  if (z_hat.size() != z_star.size()) throw ShapeError("fvu: batch size mismatch");
  if (z_hat.size() < 2) throw std::invalid_argument("fvu: batch must have >= 2 elements");
  for (std::size_t b = 0; b < z_hat.size(); ++b) {
    if (z_hat[b].size() != z_star[b].size() || z_hat[b].size() != z_hat[0].size()) {
      throw ShapeError("fvu: dimension mismatch");
    }
  }
}

// Per-dimension population variance of the targets.
Vector target_variance(const std::vector<Vector>& z_star) {
  const std::size_t n = z_star.size();
  const std::size_t d = z_star[0].size();
  Vector mean(d, 0.0);
  for (const auto& z : z_star) axpy(1.0, z, mean);
  scale_vec(mean, 1.0 / static_cast<double>(n));
  Vector var(d, 0.0);
  for (const auto& z : z_star) {
    for (std::size_t i = 0; i < d; ++i) {
      const double c = z[i] - mean[i];
      var[i] += c * c;
    }
  }
  scale_vec(var, 1.0 / static_cast<double>(n));
  return var;
}

}  // namespace

double fvu_loss(const std::vector<Vector>& z_hat, const std::vector<Vector>& z_star, bool per_dim) {
  check_batch(z_hat, z_star);
  const std::size_t n = z_hat.size();
  const std::size_t d = z_hat[0].size();
  const Vector var = target_variance(z_star);
  if (per_dim) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      if (!(var[i] > 0.0)) throw std::invalid_argument("fvu: zero target variance in dimension");
    }
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t i = 0; i < d; ++i) {
        const double r = z_hat[b][i] - z_star[b][i];
        acc += r * r / var[i];
      }
    }
    return acc / static_cast<double>(n * d);
  }
  double total_var = 0.0;
  for (std::size_t i = 0; i < d; ++i) total_var += var[i];
  total_var /= static_cast<double>(d);
  if (!(total_var > 0.0)) throw std::invalid_argument("fvu: zero target variance (degenerate batch)");
  double msr = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < d; ++i) {
      const double r = z_hat[b][i] - z_star[b][i];
      msr += r * r;
    }
  }
  msr /= static_cast<double>(n * d);
  return msr / total_var;
}

std::vector<Vector> fvu_backward(const std::vector<Vector>& z_hat,
                                 const std::vector<Vector>& z_star, bool per_dim) {
  check_batch(z_hat, z_star);
  const std::size_t n = z_hat.size();
  const std::size_t d = z_hat[0].size();
  const Vector var = target_variance(z_star);
  std::vector<Vector> grads(n, Vector(d, 0.0));
  if (per_dim) {
    for (std::size_t i = 0; i < d; ++i) {
      if (!(var[i] > 0.0)) throw std::invalid_argument("fvu: zero target variance in dimension");
    }
    const double c = 2.0 / static_cast<double>(n * d);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t i = 0; i < d; ++i) {
        grads[b][i] = c * (z_hat[b][i] - z_star[b][i]) / var[i];
      }
    }
    return grads;
  }
  double total_var = 0.0;
  for (std::size_t i = 0; i < d; ++i) total_var += var[i];
  total_var /= static_cast<double>(d);
  if (!(total_var > 0.0)) throw std::invalid_argument("fvu: zero target variance (degenerate batch)");
  const double c = 2.0 / (static_cast<double>(n * d) * total_var);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < d; ++i) {
      grads[b][i] = c * (z_hat[b][i] - z_star[b][i]);
    }
  }
  return grads;
}

double skip_loss(const std::vector<Vector>& h, const std::vector<Vector>& z_star,
                 const LttParams& p) {
  if (h.size() != z_star.size() || h.empty()) throw ShapeError("skip_loss: batch mismatch");
  double acc = 0.0;
  for (std::size_t b = 0; b < h.size(); ++b) {
    Vector pred = matvec(p.w_skip, h[b]);
    axpy(1.0, p.b_dec, pred);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double r = pred[i] - z_star[b][i];
      acc += r * r;
    }
  }
  return acc / static_cast<double>(h.size());
}

void skip_loss_backward(const std::vector<Vector>& h, const std::vector<Vector>& z_star,
                        const LttParams& p, double weight, std::vector<Vector>& dh_accum,
                        LttGrads& g) {
  if (h.size() != z_star.size() || h.size() != dh_accum.size()) {
    throw ShapeError("skip_loss_backward: batch mismatch");
  }
  const double c = 2.0 * weight / static_cast<double>(h.size());
  for (std::size_t b = 0; b < h.size(); ++b) {
    Vector res = matvec(p.w_skip, h[b]);
    axpy(1.0, p.b_dec, res);
    axpy(-1.0, z_star[b], res);  // res = W_skip h + b_dec - z*
    add_outer(g.w_skip, res, h[b], c);
    axpy(c, res, g.b_dec);
    Vector t = matvec_t(p.w_skip, res);
    axpy(c, t, dh_accum[b]);
  }
}

namespace {

// Ghost-path reconstruction: W_dec restricted to dead columns applied to the
// rectified pre-activations of dead features.
Vector ghost_recon(const Vector& preacts, const std::vector<std::uint8_t>& dead_mask,
                   const LttParams& p) {
  Vector out(static_cast<std::size_t>(p.d_model), 0.0);
  for (std::size_t j = 0; j < dead_mask.size(); ++j) {
    if (!dead_mask[j]) continue;
    const double v = preacts[j];
    if (v <= 0.0) continue;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += p.w_dec(i, j) * v;
  }
  return out;
}

}  // namespace

double ghost_loss(const std::vector<Vector>& preacts, const std::vector<std::uint8_t>& dead_mask,
                  const std::vector<Vector>& residuals, const LttParams& p) {
  if (dead_mask.size() != static_cast<std::size_t>(p.d_feat)) {
    throw std::invalid_argument("ghost_loss: dead mask length mismatch");
  }
  if (preacts.size() != residuals.size() || preacts.empty()) {
    throw ShapeError("ghost_loss: batch mismatch");
  }
  bool any_dead = false;
  for (auto m : dead_mask) any_dead |= (m != 0);
  if (!any_dead) return 0.0;
  double acc = 0.0;
  for (std::size_t b = 0; b < preacts.size(); ++b) {
    Vector rec = ghost_recon(preacts[b], dead_mask, p);
    for (std::size_t i = 0; i < rec.size(); ++i) {
      const double r = rec[i] - residuals[b][i];
      acc += r * r;
    }
  }
  return acc / static_cast<double>(preacts.size());
}

void ghost_loss_backward(const std::vector<Vector>& preacts,
                         const std::vector<std::uint8_t>& dead_mask,
                         const std::vector<Vector>& residuals, const std::vector<Vector>& h,
                         const LttParams& p, double weight, LttGrads& g) {
  if (dead_mask.size() != static_cast<std::size_t>(p.d_feat)) {
    throw std::invalid_argument("ghost_loss_backward: dead mask length mismatch");
  }
  if (preacts.size() != residuals.size() || preacts.size() != h.size()) {
    throw ShapeError("ghost_loss_backward: batch mismatch");
  }
  bool any_dead = false;
  for (auto m : dead_mask) any_dead |= (m != 0);
  if (!any_dead || preacts.empty()) return;
  const std::size_t dm = static_cast<std::size_t>(p.d_model);
  const double c = 2.0 * weight / static_cast<double>(preacts.size());
  for (std::size_t b = 0; b < preacts.size(); ++b) {
    Vector err = ghost_recon(preacts[b], dead_mask, p);
    axpy(-1.0, residuals[b], err);  // err = ghost_recon - r
    Vector centered(h[b]);
    for (std::size_t i = 0; i < dm; ++i) centered[i] -= p.mu[i];
    for (std::size_t j = 0; j < dead_mask.size(); ++j) {
      if (!dead_mask[j]) continue;
      const double v = preacts[b][j];
      double dpre = 0.0;
      if (v > 0.0) {
        // Decoder column gradient uses the rectified value; encoder row sees
        // the chain through the active ReLU.
        for (std::size_t i = 0; i < dm; ++i) {
          g.w_dec(i, j) += c * err[i] * v;
          dpre += p.w_dec(i, j) * err[i];
        }
        dpre *= c;
        double* grow = g.w_enc.row(j);
        for (std::size_t i = 0; i < dm; ++i) grow[i] += dpre * centered[i];
        g.b_enc[j] += dpre;
      }
    }
  }
}

double token_ce_loss(const Vector& logits, int target) {
  if (target < 0 || target >= static_cast<int>(logits.size())) {
    throw std::out_of_range("token_ce_loss: target out of range");
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double lse = 0.0;
  for (double v : logits) lse += std::exp(v - mx);
  lse = mx + std::log(lse);
  return lse - logits[static_cast<std::size_t>(target)];
}

Vector token_ce_backward(const Vector& logits, int target) {
  if (target < 0 || target >= static_cast<int>(logits.size())) {
    throw std::out_of_range("token_ce_backward: target out of range");
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  Vector g(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    g[i] = std::exp(logits[i] - mx);
    z += g[i];
  }
  for (double& v : g) v /= z;
  g[static_cast<std::size_t>(target)] -= 1.0;
  return g;
}

Vector backward_through_topk(const Vector& grad_wrt_s, const SparseCode& code) {
  if (grad_wrt_s.size() != code.preacts.size()) {
    throw ShapeError("backward_through_topk: dimension mismatch");
  }
  Vector out(grad_wrt_s.size(), 0.0);
  for (int i : code.active_indices) {
    out[static_cast<std::size_t>(i)] = grad_wrt_s[static_cast<std::size_t>(i)];
  }
  return out;
}

}  // namespace lstr
