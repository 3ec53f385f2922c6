#pragma once

#include "core/matrix.hpp"
#include "core/rng.hpp"

namespace lstr {

// Single-layer gated recurrent cell with a token embedding table and an LM
// head. The update is
//   z  = sigmoid(Wzx x + Wzh h + bz)
//   c  = tanh(Wcx x + Wch h + bc)
//   h' = (1 - z) o h + z o c
// so the state stays inside (-1, 1) component-wise. The input x is either an
// embedding row or an injected latent vector of the same width.
struct BackboneParams {
  Matrix embed;  // |V| x d_model
  Matrix w_gate_x, w_gate_h;  // d_model x d_model
  Vector b_gate;
  Matrix w_cand_x, w_cand_h;
  Vector b_cand;
  Matrix lm_head;  // d_model x |V|
  Vector lm_bias;  // |V|
  int d_model = 0;
  int vocab_size = 0;
};

struct BackboneGrads {
  Matrix embed;
  Matrix w_gate_x, w_gate_h;
  Vector b_gate;
  Matrix w_cand_x, w_cand_h;
  Vector b_cand;
  Matrix lm_head;
  Vector lm_bias;

  void init_like(const BackboneParams& p);
};

BackboneParams init_backbone(int vocab_size, int d_model, Rng& rng);

Vector embed_token(const BackboneParams& p, int token_id);  // throws on out-of-range id

// Values the backward pass needs from one forward step.
struct StepCache {
  Vector x, h_prev, gate, cand;
};

Vector backbone_step(const BackboneParams& p, const Vector& h_prev, const Vector& x,
                     StepCache* cache = nullptr);

// Propagates dh_out (gradient at the step output) to dh_prev and dx, and
// accumulates the cell parameter gradients.
void backbone_step_backward(const BackboneParams& p, const StepCache& c, const Vector& dh_out,
                            Vector& dh_prev, Vector& dx, BackboneGrads& g);

Vector lm_logits(const BackboneParams& p, const Vector& h);

void lm_logits_backward(const BackboneParams& p, const Vector& h, const Vector& dlogits,
                        Vector& dh_accum, BackboneGrads& g);

int argmax(const Vector& v);  // ties -> lowest index

}  // namespace lstr
