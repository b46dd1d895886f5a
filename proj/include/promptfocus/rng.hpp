#pragma once

#include <cstdint>
#include <vector>

namespace pf {

/// Counter-based generator: sample k of a stream is a pure function of
/// (seed, k), so streams are identical across runs, compilers and platforms.
/// Does not use <random> distributions, whose output is implementation-defined.
class RngState {
 public:
  explicit RngState(std::uint64_t seed = 0, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double normal(double mean = 0.0, double stddev = 1.0);
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  /// Independent child stream; the parent advances by one draw.
  RngState fork();

  std::vector<double> normal_vector(std::size_t n, double stddev);

  friend bool operator==(const RngState&, const RngState&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace pf
