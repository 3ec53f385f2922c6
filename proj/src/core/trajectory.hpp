#pragma once

#include "core/backbone.hpp"
#include "core/taskgen.hpp"

namespace lstr {

// Compressed latent target sequence for one problem. Targets are sqrt-pooled
// blocks of reasoning-token embeddings, optionally standardized; blocks hold
// the source token indices (into reasoning_tokens) each target covers.
struct LatentTrajectory {
  std::vector<Vector> targets;  // z*_1 .. z*_Lc
  int r = 1;
  std::vector<std::vector<int>> blocks;
  double scale = 1.0;       // divisor already applied to targets
  Vector per_dim_scale;     // nonempty only under per-dimension standardization
};

// (1 / sqrt(r)) * sum of the block embeddings. The divisor uses the nominal r
// even when the final block is partial.
Vector sqrt_pool(const std::vector<Vector>& block_embeddings, int r);

LatentTrajectory build_trajectory(const Problem& p, const Matrix& embed, int r);

LatentTrajectory standardize_targets(LatentTrajectory traj, double embed_variance);
LatentTrajectory standardize_targets_per_dim(LatentTrajectory traj, const Vector& per_dim_variance);

int sample_block_token(const std::vector<int>& block_token_ids, Rng& rng);

// One position of the assembled supervised sequence. Targets attached to a
// position are predictions made from the hidden state after consuming that
// position's input.
struct SeqPosition {
  bool is_latent_input = false;
  int input_token = -1;   // valid when !is_latent_input
  int input_latent = -1;  // index into traj.targets, valid when is_latent_input
  int token_target = -1;  // -1: position unsupervised by the LM head
  int latent_target = -1; // index into traj.targets; -1: no latent prediction here
};

struct TrainingSequence {
  std::vector<SeqPosition> positions;
  LatentTrajectory traj;
};

// Assembles [E_q, <think>, Z*, </think>, E_a, <eos>] with teacher-forced
// latent inputs. Latent supervision starts at the <think> position (it
// predicts z*_1) and each latent slot t predicts z*_{t+1}; token targets at
// latent positions are drawn uniformly from the upcoming block, with the last
// latent slot targeting </think>.
TrainingSequence build_training_sequence(const Vocab& v, const Problem& p, LatentTrajectory traj,
                                         Rng& rng);

}  // namespace lstr
