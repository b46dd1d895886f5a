#include "promptfocus/rng.hpp"

#include <cmath>
#include <numbers>

namespace pf {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t RngState::next_u64() {
  const std::uint64_t key = splitmix64(seed_);
  return splitmix64(key ^ (counter_++ * 0xD2B74407B1CE6E93ull));
}

double RngState::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngState::normal(double mean, double stddev) {
  // Box-Muller, one sample per pair; keeps the stream stateless.
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngState::below(std::uint64_t bound) {
  if (bound <= 1) return 0;
  // rejection sampling to avoid modulo bias
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % bound;
}

RngState RngState::fork() { return RngState(next_u64(), 0); }

std::vector<double> RngState::normal_vector(std::size_t n, double stddev) {
  std::vector<double> out(n);
  for (auto& v : out) v = normal(0.0, stddev);
  return out;
}

}  // namespace pf
