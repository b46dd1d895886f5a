#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "promptfocus/kernels.hpp"
#include "promptfocus/rng.hpp"

namespace k = pf::kernels;
using k::Trans;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
  pf::RngState rng(seed);
  return rng.normal_vector(n, 1.0);
}

}  // namespace

TEST(Gemm, MatchesTripleLoopOracle) {
  const auto a = randn(4 * 3, 1), b = randn(3 * 5, 2);
  std::vector<double> c(4 * 5);
  k::gemm(a, b, c, 4, 3, 5);
  oracle::Mat ma(4, 3), mb(3, 5);
  ma.v = a;
  mb.v = b;
  const auto ref = oracle::matmul(ma, mb);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], ref.v[i], 1e-12);
}

TEST(Gemm, HandCases) {
  std::vector<double> id{1, 0, 0, 1}, b{5, 6, 7, 8}, c(4);
  k::gemm(id, b, c, 2, 2, 2);
  EXPECT_EQ(c, b);
  std::vector<double> row{1, 2}, col{3, 4}, one(1);
  k::gemm(row, col, one, 1, 2, 1);
  EXPECT_EQ(one[0], 11.0);
}

// Every transpose/accumulate combination, across the serial/parallel size
// cutoff, must agree bit for bit with the serial reference.
TEST(Gemm, ParallelEqualsSerialBitwise) {
  const std::size_t shapes[][3] = {{1, 7, 3}, {5, 4, 6}, {40, 40, 40}, {97, 33, 65}};
  std::uint64_t seed = 10;
  for (const auto& s : shapes) {
    const std::size_t m = s[0], kk = s[1], n = s[2];
    for (auto ta : {Trans::No, Trans::Yes})
      for (auto tb : {Trans::No, Trans::Yes})
        for (bool acc : {false, true}) {
          const auto a = randn(m * kk, ++seed), b = randn(kk * n, ++seed), c0 = randn(m * n, ++seed);
          auto c1 = c0, c2 = c0;
          k::gemm(a, b, c1, m, kk, n, ta, tb, acc);
          k::serial::gemm(a, b, c2, m, kk, n, ta, tb, acc);
          ASSERT_EQ(c1, c2) << m << "x" << kk << "x" << n;
        }
  }
}

TEST(Gemm, RejectsMismatchedBuffers) {
  std::vector<double> a(6), b(6), c(3);
  EXPECT_THROW(k::gemm(a, b, c, 2, 3, 2), std::invalid_argument);
}

TEST(Softmax, SymmetricAndStable) {
  std::vector<double> x{0, 0, 0};
  k::softmax_rows(x, 1, 3);
  for (double v : x) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  std::vector<double> big{1000, 0};
  k::softmax_rows(big, 1, 2);
  EXPECT_EQ(big[0], 1.0);
  EXPECT_GE(big[1], 0.0);
  EXPECT_LT(big[1], 1e-300);
}

TEST(Softmax, MatchesExtendedPrecisionOracle) {
  std::vector<double> x{1, 2, 3};
  const auto ref = oracle::softmax(x);
  k::softmax_rows(x, 1, 3);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(x[i], ref[i], 1e-12);
}

TEST(Softmax, ParallelEqualsSerialBitwise) {
  for (std::size_t rows : {3u, 600u}) {
    auto x = randn(rows * 70, rows), y = x;
    k::softmax_rows(x, rows, 70);
    k::serial::softmax_rows(y, rows, 70);
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(x[i], y[i], 1e-15);
  }
}

TEST(PairwiseEuclidean, SymmetricAndMatchesSerial) {
  for (std::size_t n : {5u, 120u}) {
    const auto x = randn(n * 16, n);
    const auto d = k::pairwise_euclidean(x, n, 16);
    const auto s = k::serial::pairwise_euclidean(x, n, 16);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(d[i * n + i], 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        ASSERT_EQ(d[i * n + j], d[j * n + i]);
        ASSERT_NEAR(d[i * n + j], s[i * n + j], 1e-14);
        ASSERT_NEAR(d[i * n + j],
                    oracle::euclid(std::span(x).subspan(i * 16, 16), std::span(x).subspan(j * 16, 16)),
                    1e-12);
      }
    }
  }
}

TEST(ConfusionMatrix, ParallelEqualsSerialAndOracle) {
  pf::RngState rng(4);
  for (std::size_t n : {100u, 200000u}) {
    std::vector<int> p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.below(7));
      t[i] = static_cast<int>(rng.below(7));
    }
    const auto a = k::confusion_matrix(p, t, 7);
    EXPECT_EQ(a, k::serial::confusion_matrix(p, t, 7));
    EXPECT_EQ(a, oracle::confusion(p, t, 7));
  }
}

TEST(Kernels, ReportsThreads) { EXPECT_GE(k::max_threads(), 1); }
