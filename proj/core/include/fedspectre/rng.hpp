#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace fedspectre {

/**
 * Deterministic random source used everywhere in the library.
 *
 * xoshiro256++ seeded through splitmix64, with all floating-point
 * transformations done by hand so that streams are identical across
 * compilers and standard libraries (std::normal_distribution & friends
 * are not portable).
 *
 * Stream splitting: split(tag, index) derives a child generator from the
 * parent's base seed and the tag only, never from the parent's draw
 * position. Sub-streams for e.g. "participant 3, round 7" can therefore be
 * created in any order (or concurrently) without changing their output.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller (two uniforms per draw, no cache).
  double normal();
  double normal(double mean, double stddev);

  // Unbiased integer on [0, n); n must be positive.
  std::uint64_t uniform_below(std::uint64_t n);

  // Child stream derived from (base seed, tag, index); see class comment.
  Rng split(std::string_view tag, std::uint64_t index = 0) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  std::uint64_t base_seed() const { return base_seed_; }

 private:
  std::uint64_t base_seed_;
  std::array<std::uint64_t, 4> s_;
};

}  // namespace fedspectre
