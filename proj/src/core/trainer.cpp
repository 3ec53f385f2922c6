#include "core/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "core/checkpoint.hpp"
#include "core/inference.hpp"
#include "core/trajectory.hpp"

namespace lstr {

DeadFeatureTracker::DeadFeatureTracker(int d_feat, long threshold_steps)
    : steps_since_fire(static_cast<std::size_t>(d_feat), 0), threshold(threshold_steps) {
  if (threshold_steps < 1) throw std::invalid_argument("DeadFeatureTracker: threshold must be >= 1");
}

void DeadFeatureTracker::update(const std::vector<SparseCode>& batch_codes) {
  std::vector<std::uint8_t> fired(steps_since_fire.size(), 0);
  for (const auto& code : batch_codes) {
    for (int i : code.active_indices) fired[static_cast<std::size_t>(i)] = 1;
  }
  for (std::size_t i = 0; i < steps_since_fire.size(); ++i) {
    steps_since_fire[i] = fired[i] ? 0 : steps_since_fire[i] + 1;
  }
}

std::vector<std::uint8_t> DeadFeatureTracker::dead_mask() const {
  std::vector<std::uint8_t> mask(steps_since_fire.size(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = steps_since_fire[i] >= threshold;
  return mask;
}

long DeadFeatureTracker::dead_count() const {
  long n = 0;
  for (long c : steps_since_fire) n += (c >= threshold);
  return n;
}

void adamw_step(std::vector<double>& theta, const std::vector<double>& grad,
                std::vector<double>& m, std::vector<double>& v, long step, double lr, double wd) {
  if (theta.size() != grad.size() || theta.size() != m.size() || theta.size() != v.size()) {
    throw ShapeError("adamw_step: size mismatch");
  }
  if (step < 1) throw std::invalid_argument("adamw_step: step must be >= 1");
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  const double decay = 1.0 - lr * wd;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    if (!std::isfinite(g)) {
      throw std::runtime_error("adamw_step: non-finite gradient at index " + std::to_string(i));
    }
    theta[i] *= decay;
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

double clip_global_norm(const std::vector<std::vector<double>*>& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
  double sq = 0.0;
  for (const auto* g : grads) {
    for (double x : *g) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto* g : grads) {
      for (double& x : *g) x *= s;
    }
  }
  return norm;
}

void split_validation(const std::vector<Problem>& all, double val_fraction,
                      std::vector<Problem>& train_out, std::vector<Problem>& val_out) {
  train_out.clear();
  val_out.clear();
  if (val_fraction <= 0.0 || all.size() < 2) {
    train_out = all;
    return;
  }
  const std::size_t stride = std::max<std::size_t>(2, static_cast<std::size_t>(1.0 / val_fraction));
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i % stride == stride - 1) val_out.push_back(all[i]);
    else train_out.push_back(all[i]);
  }
  if (val_out.empty() && all.size() >= 2) {
    val_out.push_back(train_out.back());
    train_out.pop_back();
  }
}

Trainer::Trainer(const TrainConfig& cfg, std::vector<Problem> train_set,
                 std::vector<Problem> val_set) {
  validate(cfg);
  model_.cfg = cfg;
  init_from_scratch(std::move(train_set), std::move(val_set));
}

void Trainer::attach_data(std::vector<Problem> train_set, std::vector<Problem> val_set) {
  if (train_set.empty()) throw std::invalid_argument("Trainer: empty training set");
  train_set_ = std::move(train_set);
  val_set_ = std::move(val_set);
}

void Trainer::init_from_scratch(std::vector<Problem> train_set, std::vector<Problem> val_set) {
  attach_data(std::move(train_set), std::move(val_set));
  const TrainConfig& cfg = model_.cfg;

  Rng init_rng(derive_seed(cfg.seed, 1));
  model_.backbone = init_backbone(model_.vocab.size(), cfg.d_model, init_rng);

  // Calibration pass: embedding variance from the freshly initialized table,
  // mean hidden state and mean latent target from a teacher-forced pass over
  // a leading slice of the training set. All three are then frozen.
  const double embed_var = scalar_variance(model_.backbone.embed);
  Rng calib_rng(derive_seed(cfg.seed, 2));
  const std::size_t n_calib = std::min<std::size_t>(train_set_.size(),
                                                    static_cast<std::size_t>(cfg.calib_problems));
  std::vector<TrainingSequence> calib_seqs;
  calib_seqs.reserve(n_calib);
  for (std::size_t i = 0; i < n_calib; ++i) {
    LatentTrajectory traj = build_trajectory(train_set_[i], model_.backbone.embed, cfg.r);
    traj = standardize_targets(std::move(traj), embed_var);
    calib_seqs.push_back(
        build_training_sequence(model_.vocab, train_set_[i], std::move(traj), calib_rng));
  }
  std::vector<Vector> hidden, targets;
  collect_calibration_samples(model_.backbone, calib_seqs, hidden, targets);
  model_.calib = estimate_calibration_stats(hidden, targets);
  model_.calib.embed_variance = embed_var;

  model_.ltt = init_ltt(cfg.d_model, cfg.expansion, cfg.k, model_.calib, init_rng, cfg.bdec_init);

  tracker_ = DeadFeatureTracker(model_.ltt.d_feat, cfg.dead_threshold);
  auto tensors = trainable_tensors(model_);
  opt_.m.clear();
  opt_.v.clear();
  for (const auto& t : tensors) {
    opt_.m.emplace_back(t.data->size(), 0.0);
    opt_.v.emplace_back(t.data->size(), 0.0);
  }
  opt_.step_count = 0;
  train_rng_ = Rng(derive_seed(cfg.seed, 3));

  invariants_.k_budget = model_k_budget(model_);
  bool skip_zero = true;
  for (double x : model_.ltt.w_skip.data) skip_zero &= (x == 0.0);
  invariants_.w_skip_zero_at_init = skip_zero;
}

Trainer Trainer::resume(const std::string& checkpoint_path, std::vector<Problem> train_set,
                        std::vector<Problem> val_set) {
  Trainer t = CheckpointCodec::load(checkpoint_path);
  t.attach_data(std::move(train_set), std::move(val_set));
  return t;
}

void Trainer::save_checkpoint(const std::string& path) const { CheckpointCodec::save(path, *this); }

void Trainer::apply_gradients(ModelGrads& grads) {
  const TrainConfig& cfg = model_.cfg;

  // Remove the component of each decoder-column gradient parallel to the
  // column so the update cannot fight the unit-norm projection.
  if (cfg.project_decoder_grads) {
    const Matrix& w = model_.ltt.w_dec;
    Matrix& g = grads.ltt.w_dec;
    for (std::size_t j = 0; j < w.cols; ++j) {
      double p = 0.0;
      for (std::size_t i = 0; i < w.rows; ++i) p += g(i, j) * w(i, j);
      for (std::size_t i = 0; i < w.rows; ++i) g(i, j) -= p * w(i, j);
    }
  }

  auto params = trainable_tensors(model_);
  auto gtensors = trainable_tensors(grads, cfg);
  std::vector<std::vector<double>*> all;
  all.reserve(gtensors.size());
  for (auto& t : gtensors) all.push_back(t.data);
  clip_global_norm(all, cfg.clip_norm);

  opt_.step_count += 1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double lr = 0.0, wd = 0.0;
    switch (params[i].group) {
      case ParamGroup::kBackbone: lr = cfg.lr_backbone; wd = cfg.wd_backbone; break;
      case ParamGroup::kSkip: lr = cfg.lr_skip; wd = cfg.wd_skip; break;
      case ParamGroup::kEncoder: lr = cfg.lr_encoder; wd = cfg.wd_encoder; break;
      case ParamGroup::kDecoder: lr = cfg.lr_decoder; wd = cfg.wd_decoder; break;
    }
    adamw_step(*params[i].data, *gtensors[i].data, opt_.m[i], opt_.v[i], opt_.step_count, lr, wd);
  }
  project_decoder_columns(model_.ltt, &train_rng_);
}

EpochMetrics Trainer::run_epoch() {
  const TrainConfig& cfg = model_.cfg;
  EpochMetrics metrics;
  metrics.epoch = epochs_done_ + 1;
  if (diverged_) {
    metrics.diverged = true;
    return metrics;
  }

  std::vector<std::size_t> order(train_set_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  train_rng_.shuffle(order);

  ModelGrads grads;
  grads.init_like(model_);
  long batches = 0;
  double sum_total = 0, sum_fvu = 0, sum_skip = 0, sum_ghost = 0, sum_ce = 0;

  for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
    std::vector<TrainingSequence> batch;
    batch.reserve(end - at);
    for (std::size_t i = at; i < end; ++i) {
      const Problem& p = train_set_[order[i]];
      LatentTrajectory traj = build_trajectory(p, model_.backbone.embed, cfg.r);
      traj = standardize_targets(std::move(traj), model_.calib.embed_variance);
      batch.push_back(build_training_sequence(model_.vocab, p, std::move(traj), train_rng_));
    }

    grads.zero();
    const std::vector<std::uint8_t> dead = tracker_.dead_mask();
    BatchOptions opt;
    opt.dead_mask = &dead;
    opt.grads = &grads;
    opt.threads = cfg.threads;
    opt.probe = check_invariants_ ? &probe_ : nullptr;

    BatchResult res;
    try {
      res = run_batch(model_, batch, opt);
    } catch (const DivergenceError&) {
      // Divergence rail: drop back to the last good snapshot and stop.
      diverged_ = true;
      if (has_best_) model_ = best_;
      metrics.diverged = true;
      return metrics;
    }

    apply_gradients(grads);
    tracker_.update(res.codes);
    if (cfg.mu_running_mean && !res.mean_hidden.empty()) {
      constexpr double tau = 0.01;
      for (std::size_t i = 0; i < model_.ltt.mu.size(); ++i) {
        model_.ltt.mu[i] = (1.0 - tau) * model_.ltt.mu[i] + tau * res.mean_hidden[i];
      }
    }

    if (check_invariants_) {
      const Matrix& w = model_.ltt.w_dec;
      double worst = 0.0;
      for (std::size_t j = 0; j < w.cols; ++j) {
        double n = 0.0;
        for (std::size_t i = 0; i < w.rows; ++i) n += w(i, j) * w(i, j);
        worst = std::max(worst, std::fabs(std::sqrt(n) - 1.0));
      }
      invariants_.max_decoder_norm_dev = std::max(invariants_.max_decoder_norm_dev, worst);
      invariants_.max_k_eff = std::max(invariants_.max_k_eff, probe_.max_k_eff);
      invariants_.max_alive_ghost_grad =
          std::max(invariants_.max_alive_ghost_grad, probe_.max_alive_ghost_grad);
      if (cfg.disable_skip) {
        for (double x : model_.ltt.w_skip.data) {
          if (x != 0.0) invariants_.w_skip_zero_throughout = false;
        }
      }
      for (std::size_t row = 0; row < model_.backbone.embed.rows; ++row) {
        double n = 0.0;
        for (std::size_t i = 0; i < model_.backbone.embed.cols; ++i) {
          n += model_.backbone.embed(row, i) * model_.backbone.embed(row, i);
        }
        invariants_.max_embed_row_norm = std::max(invariants_.max_embed_row_norm, std::sqrt(n));
      }
      invariants_.steps_audited += 1;
    }

    sum_total += res.loss.total;
    sum_fvu += res.loss.fvu;
    sum_skip += res.loss.skip;
    sum_ghost += res.loss.ghost;
    sum_ce += res.loss.token_ce;
    batches += 1;
  }

  epochs_done_ += 1;
  metrics.mean_total = sum_total / static_cast<double>(batches);
  metrics.mean_fvu = sum_fvu / static_cast<double>(batches);
  metrics.mean_skip = sum_skip / static_cast<double>(batches);
  metrics.mean_ghost = sum_ghost / static_cast<double>(batches);
  metrics.mean_token_ce = sum_ce / static_cast<double>(batches);
  metrics.dead_features = tracker_.dead_count();

  if (!val_set_.empty()) {
    const EvalResult ev = evaluate(model_, val_set_, -1, nullptr, cfg.threads);
    metrics.val_accuracy = ev.accuracy;
    metrics.val_mean_latent_steps = ev.mean_latent_steps;
    if (ev.accuracy > best_val_accuracy_) {
      best_val_accuracy_ = ev.accuracy;
      best_epoch_ = epochs_done_;
      best_ = model_;
      has_best_ = true;
    }
  } else {
    best_ = model_;
    has_best_ = true;
    best_epoch_ = epochs_done_;
  }
  return metrics;
}

TrainResult train_model(const TrainConfig& cfg, const std::vector<Problem>& train_set,
                        const std::vector<Problem>& val_set, const TrainOptions& opts) {
  Trainer t(cfg, train_set, val_set);
  t.set_check_invariants(opts.check_invariants);
  TrainResult result;
  for (int e = 0; e < cfg.epochs; ++e) {
    EpochMetrics m = t.run_epoch();
    result.history.push_back(m);
    if (opts.on_epoch) opts.on_epoch(m);
    if (m.diverged) break;
    if (m.val_accuracy >= opts.stop_at_val_accuracy) break;
  }
  result.model = t.best_model();
  result.best_epoch = t.best_epoch();
  result.best_val_accuracy = t.best_val_accuracy();
  result.diverged = t.diverged();
  result.invariants = t.invariant_report();
  return result;
}

}  // namespace lstr
