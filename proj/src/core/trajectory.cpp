#include "core/trajectory.hpp"

#include <cmath>
#include <stdexcept>

namespace lstr {

Vector sqrt_pool(const std::vector<Vector>& block_embeddings, int r) {
  if (block_embeddings.empty()) throw std::invalid_argument("sqrt_pool: empty block");
  if (r < 1 || static_cast<int>(block_embeddings.size()) > r) {
    throw std::invalid_argument("sqrt_pool: block larger than ratio");
  }
  Vector out(block_embeddings.front().size(), 0.0);
  for (const auto& e : block_embeddings) axpy(1.0, e, out);
  scale_vec(out, 1.0 / std::sqrt(static_cast<double>(r)));
  return out;
}

LatentTrajectory build_trajectory(const Problem& p, const Matrix& embed, int r) {
  if (r < 1) throw std::invalid_argument("build_trajectory: r must be >= 1");
  if (p.reasoning_tokens.empty()) throw std::invalid_argument("build_trajectory: empty reasoning");
  LatentTrajectory traj;
  traj.r = r;
  const int lr = static_cast<int>(p.reasoning_tokens.size());
  const int lc = (lr + r - 1) / r;
  traj.targets.reserve(static_cast<std::size_t>(lc));
  traj.blocks.reserve(static_cast<std::size_t>(lc));
  for (int t = 0; t < lc; ++t) {
    std::vector<int> block;
    std::vector<Vector> embs;
    for (int j = t * r; j < std::min((t + 1) * r, lr); ++j) {
      block.push_back(j);
      const int tok = p.reasoning_tokens[static_cast<std::size_t>(j)];
      const double* row = embed.row(static_cast<std::size_t>(tok));
      embs.emplace_back(row, row + embed.cols);
    }
    traj.targets.push_back(sqrt_pool(embs, r));
    traj.blocks.push_back(std::move(block));
  }
  return traj;
}

LatentTrajectory standardize_targets(LatentTrajectory traj, double embed_variance) {
  if (!(embed_variance > 0.0)) {
    throw std::invalid_argument("standardize_targets: variance must be > 0");
  }
  const double divisor = std::sqrt(embed_variance);
  for (auto& z : traj.targets) scale_vec(z, 1.0 / divisor);
  traj.scale *= divisor;
  return traj;
}

LatentTrajectory standardize_targets_per_dim(LatentTrajectory traj, const Vector& per_dim_variance) {
  for (double v : per_dim_variance) {
    if (!(v > 0.0)) throw std::invalid_argument("standardize_targets_per_dim: variance must be > 0");
  }
  Vector divisor(per_dim_variance.size());
  for (std::size_t i = 0; i < divisor.size(); ++i) divisor[i] = std::sqrt(per_dim_variance[i]);
  for (auto& z : traj.targets) {
    if (z.size() != divisor.size()) {
      throw ShapeError("standardize_targets_per_dim: dimension mismatch");
    }
    for (std::size_t i = 0; i < z.size(); ++i) z[i] /= divisor[i];
  }
  traj.per_dim_scale = std::move(divisor);
  return traj;
}

int sample_block_token(const std::vector<int>& block_token_ids, Rng& rng) {
  if (block_token_ids.empty()) throw std::invalid_argument("sample_block_token: empty block");
  return block_token_ids[rng.next_below(block_token_ids.size())];
}

TrainingSequence build_training_sequence(const Vocab& v, const Problem& p, LatentTrajectory traj,
                                         Rng& rng) {
  const int lr = static_cast<int>(p.reasoning_tokens.size());
  const int lc = static_cast<int>(traj.targets.size());
  if (lc != (lr + traj.r - 1) / traj.r) {
    throw std::invalid_argument("build_training_sequence: trajectory/ratio mismatch");
  }

  auto block_ids = [&](int t) {
    std::vector<int> ids;
    for (int j : traj.blocks[static_cast<std::size_t>(t)]) {
      ids.push_back(p.reasoning_tokens[static_cast<std::size_t>(j)]);
    }
    return ids;
  };

  TrainingSequence seq;
  for (int tok : p.question_tokens) {
    SeqPosition pos;
    pos.input_token = tok;
    seq.positions.push_back(pos);
  }
  {
    SeqPosition pos;
    pos.input_token = v.think_open;
    pos.token_target = sample_block_token(block_ids(0), rng);
    pos.latent_target = 0;
    seq.positions.push_back(pos);
  }
  for (int t = 0; t < lc; ++t) {
    SeqPosition pos;
    pos.is_latent_input = true;
    pos.input_latent = t;
    if (t + 1 < lc) {
      pos.token_target = sample_block_token(block_ids(t + 1), rng);
      pos.latent_target = t + 1;
    } else {
      pos.token_target = v.think_close;
    }
    seq.positions.push_back(pos);
  }
  {
    SeqPosition pos;
    pos.input_token = v.think_close;
    pos.token_target = p.answer_tokens.empty() ? v.eos : p.answer_tokens.front();
    seq.positions.push_back(pos);
  }
  for (std::size_t i = 0; i < p.answer_tokens.size(); ++i) {
    SeqPosition pos;
    pos.input_token = p.answer_tokens[i];
    pos.token_target = (i + 1 < p.answer_tokens.size()) ? p.answer_tokens[i + 1] : v.eos;
    seq.positions.push_back(pos);
  }
  {
    SeqPosition pos;
    pos.input_token = v.eos;
    seq.positions.push_back(pos);
  }
  seq.traj = std::move(traj);
  return seq;
}

}  // namespace lstr
