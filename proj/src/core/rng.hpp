#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace lstr {

// Deterministic project-wide generator: xoshiro256++ seeded through
// splitmix64. The algorithm is fixed here (not delegated to <random>) so that
// identical seeds produce identical streams on every platform. Gaussians come
// from the Marsaglia polar transform with a cached spare value.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double next_double();
  double next_gaussian(double mean = 0.0, double std = 1.0);
  // Uniform in [0, bound), bound >= 1, rejection-sampled (unbiased).
  std::uint64_t next_below(std::uint64_t bound);

  template <class T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }

  struct State {
    std::array<std::uint64_t, 4> s{};
    std::uint64_t seed = 0;
    bool has_spare = false;
    double spare = 0.0;
  };
  State state() const;
  void restore(const State& st);

 private:
  std::array<std::uint64_t, 4> s_{};
  std::uint64_t seed_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable derivation of per-stream seeds (splitmix64 mixing of base ^ stream).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace lstr
