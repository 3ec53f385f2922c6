#include "core/graph.hpp"

#include <cmath>
#include <stdexcept>

#include "core/parallel.hpp"

namespace lstr {

int model_k_budget(const Model& m) {
  return m.cfg.disable_sparse ? m.ltt.d_feat : m.ltt.k;
}

namespace {

// Everything the backward pass needs from one sequence's forward pass.
struct SeqWork {
  std::vector<StepCache> caches;
  std::vector<Vector> h;  // state after consuming each position's input

  std::vector<int> latent_pos;            // positions carrying a latent target
  std::vector<const Vector*> latent_tgt;  // matching z* pointers
  std::vector<LttForward> ltt;

  std::vector<int> token_pos;
  std::vector<int> token_tgt;
  std::vector<Vector> logits;
  double ce_sum = 0.0;
};

void forward_sequence(const Model& m, const TrainingSequence& seq, int k_budget, SeqWork& w) {
  const std::size_t d = static_cast<std::size_t>(m.backbone.d_model);
  const std::size_t n = seq.positions.size();
  w.caches.resize(n);
  w.h.resize(n);
  Vector h(d, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    const SeqPosition& pos = seq.positions[p];
    const Vector x = pos.is_latent_input
                         ? seq.traj.targets[static_cast<std::size_t>(pos.input_latent)]
                         : embed_token(m.backbone, pos.input_token);
    h = backbone_step(m.backbone, h, x, &w.caches[p]);
    w.h[p] = h;
    if (pos.latent_target >= 0) {
      w.latent_pos.push_back(static_cast<int>(p));
      w.latent_tgt.push_back(&seq.traj.targets[static_cast<std::size_t>(pos.latent_target)]);
      w.ltt.push_back(ltt_forward(m.ltt, h, k_budget));
    }
    if (pos.token_target >= 0) {
      w.token_pos.push_back(static_cast<int>(p));
      w.token_tgt.push_back(pos.token_target);
      w.logits.push_back(lm_logits(m.backbone, h));
      w.ce_sum += token_ce_loss(w.logits.back(), pos.token_target);
    }
  }
}

void backward_sequence(const Model& m, const TrainingSequence& seq, const SeqWork& w,
                       const std::vector<Vector>& dz_fvu, const std::vector<Vector>& dh_skip,
                       std::size_t pair_base, double tok_scale, ModelGrads& g) {
  const std::size_t d = static_cast<std::size_t>(m.backbone.d_model);
  const std::size_t n = seq.positions.size();
  std::vector<Vector> dh_at(n, Vector(d, 0.0));

  for (std::size_t j = 0; j < w.latent_pos.size(); ++j) {
    const std::size_t p = static_cast<std::size_t>(w.latent_pos[j]);
    const std::size_t pair = pair_base + j;
    if (!dh_skip.empty()) axpy(1.0, dh_skip[pair], dh_at[p]);
    ltt_backward(m.ltt, w.h[p], w.ltt[j].code, dz_fvu[pair], m.cfg.ste, dh_at[p], g.ltt);
  }
  for (std::size_t j = 0; j < w.token_pos.size(); ++j) {
    const std::size_t p = static_cast<std::size_t>(w.token_pos[j]);
    Vector dlogits = token_ce_backward(w.logits[j], w.token_tgt[j]);
    scale_vec(dlogits, tok_scale);
    lm_logits_backward(m.backbone, w.h[p], dlogits, dh_at[p], g.backbone);
  }

  // Backprop through time. Teacher-forced latent inputs are constants, so
  // their dx is dropped; token inputs route dx into the embedding rows.
  Vector carry(d, 0.0);
  Vector dh_prev(d), dx(d);
  for (std::size_t p = n; p-- > 0;) {
    Vector dh = std::move(dh_at[p]);
    axpy(1.0, carry, dh);
    backbone_step_backward(m.backbone, w.caches[p], dh, dh_prev, dx, g.backbone);
    carry = dh_prev;
    const SeqPosition& pos = seq.positions[p];
    if (!pos.is_latent_input) {
      double* row = g.backbone.embed.row(static_cast<std::size_t>(pos.input_token));
      for (std::size_t i = 0; i < d; ++i) row[i] += dx[i];
    }
  }
}

}  // namespace

BatchResult run_batch(const Model& m, const std::vector<TrainingSequence>& batch,
                      const BatchOptions& opt) {
  if (batch.empty()) throw std::invalid_argument("run_batch: empty batch");
  const int k_budget = model_k_budget(m);
  const std::size_t d = static_cast<std::size_t>(m.backbone.d_model);

  std::vector<SeqWork> work(batch.size());
  parallel_chunks(batch.size(), opt.threads, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t s = b; s < e; ++s) forward_sequence(m, batch[s], k_budget, work[s]);
  });

  // Flatten latent pairs in batch order.
  std::vector<Vector> z_hat, z_star, h_in, preacts;
  std::vector<std::size_t> pair_base(batch.size(), 0);
  long token_positions = 0;
  double ce_sum = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    pair_base[s] = z_hat.size();
    const SeqWork& w = work[s];
    for (std::size_t j = 0; j < w.latent_pos.size(); ++j) {
      z_hat.push_back(w.ltt[j].z_hat);
      z_star.push_back(*w.latent_tgt[j]);
      h_in.push_back(w.h[static_cast<std::size_t>(w.latent_pos[j])]);
      preacts.push_back(w.ltt[j].code.preacts);
    }
    token_positions += static_cast<long>(w.token_pos.size());
    ce_sum += w.ce_sum;
  }
  const std::size_t pairs = z_hat.size();

  BatchResult res;
  res.latent_pairs = static_cast<long>(pairs);
  res.token_positions = token_positions;
  res.codes.reserve(pairs);
  for (const auto& w : work) {
    for (const auto& f : w.ltt) res.codes.push_back(f.code);
  }
  res.mean_hidden.assign(d, 0.0);
  for (const auto& h : h_in) axpy(1.0, h, res.mean_hidden);
  if (!h_in.empty()) scale_vec(res.mean_hidden, 1.0 / static_cast<double>(h_in.size()));

  if (opt.probe) {
    for (const auto& c : res.codes) {
      opt.probe->max_k_eff = std::max(opt.probe->max_k_eff, c.k_eff());
    }
    opt.probe->batches_audited += 1;
  }

  const double fvu = fvu_loss(z_hat, z_star, m.cfg.per_dim_fvu);
  const double skip = m.cfg.disable_skip ? 0.0 : skip_loss(h_in, z_star, m.ltt);

  std::vector<std::uint8_t> no_dead;
  const std::vector<std::uint8_t>* dead = opt.dead_mask;
  if (!dead) {
    no_dead.assign(static_cast<std::size_t>(m.ltt.d_feat), 0);
    dead = &no_dead;
  }
  std::vector<Vector> residuals;
  const std::vector<Vector>* resid = opt.frozen_ghost_residuals;
  if (!resid) {
    residuals.resize(pairs);
    for (std::size_t i = 0; i < pairs; ++i) {
      residuals[i] = z_star[i];
      axpy(-1.0, z_hat[i], residuals[i]);
    }
    resid = &residuals;
  }
  const double ghost = ghost_loss(preacts, *dead, *resid, m.ltt);
  const double token_ce = token_positions > 0 ? ce_sum / static_cast<double>(token_positions) : 0.0;

  const double lambda_s_eff = m.cfg.disable_skip ? 0.0 : m.cfg.lambda_s;
  res.loss = composite_loss(fvu, skip, ghost, token_ce, lambda_s_eff, m.cfg.lambda_g,
                            m.cfg.lambda_tok);
  if (!std::isfinite(res.loss.total)) {
    throw DivergenceError("run_batch: non-finite loss");
  }
  if (!opt.grads) return res;

  // Per-pair gradient staging (serial; batch-level denominators).
  std::vector<Vector> dz_fvu = fvu_backward(z_hat, z_star, m.cfg.per_dim_fvu);
  std::vector<Vector> dh_skip;
  if (!m.cfg.disable_skip && m.cfg.lambda_s > 0.0) {
    dh_skip.assign(pairs, Vector(d, 0.0));
    skip_loss_backward(h_in, z_star, m.ltt, m.cfg.lambda_s, dh_skip, opt.grads->ltt);
  }
  if (m.cfg.lambda_g > 0.0) {
    if (opt.probe) {
      // Route ghost grads through a scratch buffer so alive-feature isolation
      // can be asserted exactly.
      ModelGrads scratch;
      scratch.init_like(m);
      ghost_loss_backward(preacts, *dead, *resid, h_in, m.ltt, m.cfg.lambda_g, scratch.ltt);
      double worst = 0.0;
      for (std::size_t f = 0; f < dead->size(); ++f) {
        if ((*dead)[f]) continue;
        const double* row = scratch.ltt.w_enc.row(f);
        for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, std::fabs(row[i]));
        worst = std::max(worst, std::fabs(scratch.ltt.b_enc[f]));
        for (std::size_t i = 0; i < d; ++i) {
          worst = std::max(worst, std::fabs(scratch.ltt.w_dec(i, f)));
        }
      }
      opt.probe->max_alive_ghost_grad = std::max(opt.probe->max_alive_ghost_grad, worst);
      opt.grads->add(scratch);
    } else {
      ghost_loss_backward(preacts, *dead, *resid, h_in, m.ltt, m.cfg.lambda_g, opt.grads->ltt);
    }
  }
  const double tok_scale =
      token_positions > 0 ? m.cfg.lambda_tok / static_cast<double>(token_positions) : 0.0;

  const std::size_t chunks = chunk_count(batch.size(), opt.threads);
  if (chunks <= 1) {
    for (std::size_t s = 0; s < batch.size(); ++s) {
      backward_sequence(m, batch[s], work[s], dz_fvu, dh_skip, pair_base[s], tok_scale, *opt.grads);
    }
  } else {
    std::vector<ModelGrads> partial(chunks);
    for (auto& p : partial) p.init_like(m);
    parallel_chunks(batch.size(), opt.threads, [&](std::size_t b, std::size_t e, std::size_t wid) {
      for (std::size_t s = b; s < e; ++s) {
        backward_sequence(m, batch[s], work[s], dz_fvu, dh_skip, pair_base[s], tok_scale,
                          partial[wid]);
      }
    });
    for (const auto& p : partial) opt.grads->add(p);
  }
  return res;
}

void collect_calibration_samples(const BackboneParams& backbone,
                                 const std::vector<TrainingSequence>& sequences,
                                 std::vector<Vector>& hidden_out, std::vector<Vector>& target_out) {
  const std::size_t d = static_cast<std::size_t>(backbone.d_model);
  for (const auto& seq : sequences) {
    Vector h(d, 0.0);
    for (const auto& pos : seq.positions) {
      const Vector x = pos.is_latent_input
                           ? seq.traj.targets[static_cast<std::size_t>(pos.input_latent)]
                           : embed_token(backbone, pos.input_token);
      h = backbone_step(backbone, h, x);
      if (pos.latent_target >= 0) {
        hidden_out.push_back(h);
        target_out.push_back(seq.traj.targets[static_cast<std::size_t>(pos.latent_target)]);
      }
    }
  }
}

}  // namespace lstr
