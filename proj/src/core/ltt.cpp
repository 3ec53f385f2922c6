#include "core/ltt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lstr {

CalibrationStats estimate_calibration_stats(const std::vector<Vector>& hidden_samples,
                                            const std::vector<Vector>& target_samples) {
  if (hidden_samples.empty() || target_samples.empty()) {
    throw std::invalid_argument("estimate_calibration_stats: empty sample set");
  }
  CalibrationStats stats;
  stats.mean_hidden.assign(hidden_samples.front().size(), 0.0);
  for (const auto& h : hidden_samples) axpy(1.0, h, stats.mean_hidden);
  scale_vec(stats.mean_hidden, 1.0 / static_cast<double>(hidden_samples.size()));
  stats.mean_target.assign(target_samples.front().size(), 0.0);
  for (const auto& t : target_samples) axpy(1.0, t, stats.mean_target);
  scale_vec(stats.mean_target, 1.0 / static_cast<double>(target_samples.size()));
  return stats;
}

Vector SparseCode::dense(std::size_t d_feat) const {
  Vector s(d_feat, 0.0);
  for (std::size_t i = 0; i < active_indices.size(); ++i) {
    s[static_cast<std::size_t>(active_indices[i])] = active_values[i];
  }
  return s;
}

double SparseCode::value_of(int feature) const {
  auto it = std::lower_bound(active_indices.begin(), active_indices.end(), feature);
  if (it == active_indices.end() || *it != feature) return 0.0;
  return active_values[static_cast<std::size_t>(it - active_indices.begin())];
}

LttParams init_ltt(int d_model, int expansion, int k, const CalibrationStats& calib, Rng& rng,
                   BdecInit bdec) {
  if (d_model < 1 || expansion < 1) throw std::invalid_argument("init_ltt: bad dimensions");
  const int d_feat = expansion * d_model;
  if (k < 0 || k > d_feat) throw std::invalid_argument("init_ltt: k out of range");
  LttParams p;
  p.d_model = d_model;
  p.d_feat = d_feat;
  p.k = k;
  const std::size_t dm = static_cast<std::size_t>(d_model);
  const std::size_t df = static_cast<std::size_t>(d_feat);
  p.w_enc = orthogonal_init(df, dm, rng);
  p.b_enc = Vector(df, 0.0);
  p.w_dec = gaussian_init(dm, df, 1.0, rng);
  project_decoder_columns(p, &rng);
  p.b_dec = (bdec == BdecInit::kTargetMean) ? calib.mean_target : calib.mean_hidden;
  if (p.b_dec.size() != dm) throw ShapeError("init_ltt: calibration dimension mismatch");
  p.w_skip = Matrix(dm, dm, 0.0);
  p.mu = calib.mean_hidden;
  if (p.mu.size() != dm) throw ShapeError("init_ltt: calibration dimension mismatch");
  return p;
}

Vector encode_preacts(const LttParams& p, const Vector& h) {
  if (h.size() != static_cast<std::size_t>(p.d_model)) {
    throw ShapeError("encode_preacts: dimension mismatch");
  }
  Vector centered(h);
  for (std::size_t i = 0; i < centered.size(); ++i) centered[i] -= p.mu[i];
  Vector pre = matvec(p.w_enc, centered);
  for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += p.b_enc[i];
  return pre;
}

SparseCode topk_relu(const Vector& preacts, int k) {
  if (k < 0) throw std::invalid_argument("topk_relu: k must be >= 0");
  SparseCode code;
  code.preacts = preacts;
  if (k == 0) return code;
  std::vector<int> positive;
  positive.reserve(preacts.size());
  for (int i = 0; i < static_cast<int>(preacts.size()); ++i) {
    if (preacts[static_cast<std::size_t>(i)] > 0.0) positive.push_back(i);
  }
  const int keep = std::min<int>(k, static_cast<int>(positive.size()));
  if (keep == 0) return code;
  auto better = [&](int a, int b) {
    const double va = preacts[static_cast<std::size_t>(a)];
    const double vb = preacts[static_cast<std::size_t>(b)];
    if (va != vb) return va > vb;
    return a < b;  // tie-break: lowest index wins
  };
  std::nth_element(positive.begin(), positive.begin() + (keep - 1), positive.end(), better);
  positive.resize(static_cast<std::size_t>(keep));
  std::sort(positive.begin(), positive.end());
  code.active_indices = std::move(positive);
  code.active_values.reserve(code.active_indices.size());
  for (int i : code.active_indices) {
    code.active_values.push_back(preacts[static_cast<std::size_t>(i)]);
  }
  return code;
}

Vector decode_from_code(const LttParams& p, const Vector& h, const SparseCode& code) {
  Vector z = matvec(p.w_skip, h);
  for (std::size_t a = 0; a < code.active_indices.size(); ++a) {
    const std::size_t col = static_cast<std::size_t>(code.active_indices[a]);
    const double val = code.active_values[a];
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += p.w_dec(i, col) * val;
  }
  axpy(1.0, p.b_dec, z);
  return z;
}

LttForward ltt_forward(const LttParams& p, const Vector& h, int k_budget) {
  const int k = (k_budget < 0) ? p.k : std::min(k_budget, p.d_feat);
  LttForward out;
  out.code = topk_relu(encode_preacts(p, h), k);
  out.z_hat = decode_from_code(p, h, out.code);
  return out;
}

void LttGrads::init_like(const LttParams& p) {
  w_enc = Matrix(p.w_enc.rows, p.w_enc.cols);
  b_enc = Vector(p.b_enc.size(), 0.0);
  w_dec = Matrix(p.w_dec.rows, p.w_dec.cols);
  b_dec = Vector(p.b_dec.size(), 0.0);
  w_skip = Matrix(p.w_skip.rows, p.w_skip.cols);
}

void ltt_backward(const LttParams& p, const Vector& h, const SparseCode& code,
                  const Vector& dz_hat, SteMode mode, Vector& dh_accum, LttGrads& g) {
  const std::size_t dm = static_cast<std::size_t>(p.d_model);
  if (h.size() != dm || dz_hat.size() != dm) throw ShapeError("ltt_backward: dimension mismatch");

  add_outer(g.w_skip, dz_hat, h);
  axpy(1.0, dz_hat, g.b_dec);
  {
    Vector t = matvec_t(p.w_skip, dz_hat);
    axpy(1.0, t, dh_accum);
  }

  // Innovation path. ds_i = w_dec_col_i . dz_hat; the STE treats the
  // selection mask as constant, so only retained (or, in pass-through mode,
  // positive) entries propagate into the encoder.
  Vector dpre;
  std::vector<int> enc_rows;
  if (mode == SteMode::kMasked) {
    enc_rows = code.active_indices;
    dpre.resize(enc_rows.size());
    for (std::size_t a = 0; a < enc_rows.size(); ++a) {
      const std::size_t col = static_cast<std::size_t>(enc_rows[a]);
      double ds = 0.0;
      for (std::size_t i = 0; i < dm; ++i) ds += p.w_dec(i, col) * dz_hat[i];
      dpre[a] = ds;
    }
  } else {
    for (int i = 0; i < p.d_feat; ++i) {
      if (code.preacts[static_cast<std::size_t>(i)] > 0.0) enc_rows.push_back(i);
    }
    dpre.resize(enc_rows.size());
    for (std::size_t a = 0; a < enc_rows.size(); ++a) {
      const std::size_t col = static_cast<std::size_t>(enc_rows[a]);
      double ds = 0.0;
      for (std::size_t i = 0; i < dm; ++i) ds += p.w_dec(i, col) * dz_hat[i];
      dpre[a] = ds;
    }
  }

  // Decoder gradient only sees the values actually used in the forward pass.
  for (std::size_t a = 0; a < code.active_indices.size(); ++a) {
    const std::size_t col = static_cast<std::size_t>(code.active_indices[a]);
    const double val = code.active_values[a];
    for (std::size_t i = 0; i < dm; ++i) g.w_dec(i, col) += dz_hat[i] * val;
  }

  if (!enc_rows.empty()) {
    Vector centered(h);
    for (std::size_t i = 0; i < dm; ++i) centered[i] -= p.mu[i];
    for (std::size_t a = 0; a < enc_rows.size(); ++a) {
      const std::size_t row = static_cast<std::size_t>(enc_rows[a]);
      const double d = dpre[a];
      if (d == 0.0) continue;
      double* grow = g.w_enc.row(row);
      const double* prow = p.w_enc.row(row);
      for (std::size_t i = 0; i < dm; ++i) {
        grow[i] += d * centered[i];
        dh_accum[i] += d * prow[i];
      }
      g.b_enc[row] += d;
    }
  }
}

std::vector<int> project_decoder_columns(LttParams& p, Rng* reinit_rng) {
  std::vector<int> reinitialized;
  const std::size_t dm = p.w_dec.rows;
  for (std::size_t j = 0; j < p.w_dec.cols; ++j) {
    double norm = 0.0;
    for (std::size_t i = 0; i < dm; ++i) norm += p.w_dec(i, j) * p.w_dec(i, j);
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      if (!reinit_rng) {
        throw std::runtime_error("project_decoder_columns: collapsed column " + std::to_string(j) +
                                 " and no rng to redraw it");
      }
      do {
        norm = 0.0;
        for (std::size_t i = 0; i < dm; ++i) {
          p.w_dec(i, j) = reinit_rng->next_gaussian();
          norm += p.w_dec(i, j) * p.w_dec(i, j);
        }
        norm = std::sqrt(norm);
      } while (norm < 1e-12);
      reinitialized.push_back(static_cast<int>(j));
    }
    for (std::size_t i = 0; i < dm; ++i) p.w_dec(i, j) /= norm;
  }
  return reinitialized;
}

}  // namespace lstr
