#pragma once

#include <cstdint>

#include "core/ltt.hpp"

namespace lstr {

struct LossBreakdown {
  double fvu = 0.0;
  double skip = 0.0;
  double ghost = 0.0;
  double token_ce = 0.0;
  double total = 0.0;
  double lambda_s = 0.0;
  double lambda_g = 0.0;
  double lambda_tok = 0.0;
};

LossBreakdown composite_loss(double fvu, double skip, double ghost, double token_ce,
                             double lambda_s, double lambda_g, double lambda_tok);

// Fraction of variance unexplained: mean squared residual over batch and
// dimensions, normalized by the target variance. The scalar variant divides
// by the mean of per-dimension population variances, making the loss
// invariant to common rescaling of both batches. Batch size must be >= 2.
double fvu_loss(const std::vector<Vector>& z_hat, const std::vector<Vector>& z_star,
                bool per_dim = false);
// d fvu / d z_hat for each batch element (targets are constants).
std::vector<Vector> fvu_backward(const std::vector<Vector>& z_hat,
                                 const std::vector<Vector>& z_star, bool per_dim = false);

// mean_b || W_skip h_b + b_dec - z*_b ||^2
double skip_loss(const std::vector<Vector>& h, const std::vector<Vector>& z_star,
                 const LttParams& p);
// Adds weight * d(skip)/d{W_skip, b_dec, h_b}; dh_accum is indexed like h.
void skip_loss_backward(const std::vector<Vector>& h, const std::vector<Vector>& z_star,
                        const LttParams& p, double weight, std::vector<Vector>& dh_accum,
                        LttGrads& g);

// mean_b || W_dec . relu(preacts_b)|dead - r_b ||^2 where the rectified
// pre-activations bypass Top-k and only dead features participate. The
// residual r_b is a constant target: no gradient flows back into the main
// path through it, and alive features receive exactly zero gradient.
double ghost_loss(const std::vector<Vector>& preacts, const std::vector<std::uint8_t>& dead_mask,
                  const std::vector<Vector>& residuals, const LttParams& p);
// h is needed for the dead encoder-row gradients (recentered input).
void ghost_loss_backward(const std::vector<Vector>& preacts,
                         const std::vector<std::uint8_t>& dead_mask,
                         const std::vector<Vector>& residuals, const std::vector<Vector>& h,
                         const LttParams& p, double weight, LttGrads& g);

double token_ce_loss(const Vector& logits, int target);
Vector token_ce_backward(const Vector& logits, int target);  // softmax - onehot

// Straight-through estimator: gradient w.r.t. the sparse output passes
// unchanged through retained entries and is zeroed elsewhere.
Vector backward_through_topk(const Vector& grad_wrt_s, const SparseCode& code);

}  // namespace lstr
