#include "promptfocus/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pf::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 4;

// Rows [i0, i0+rows) of the product, rows <= kRowBlock. b is k×n row-major
// here (callers transpose it first). A 4×4 tile of c stays in registers for
// the whole reduction. Each element is summed over p in order from zero and
// then added to c, exactly like the serial loop.
inline void gemm_rows(std::span<const double> a, const double* b, double* c,
                      std::size_t i0, std::size_t rows, std::size_t m, std::size_t k,
                      std::size_t n, Trans ta, bool accumulate) {
  auto a_at = [&](std::size_t r, std::size_t p) {
    return ta == Trans::No ? a[(i0 + r) * k + p] : a[p * m + i0 + r];
  };
  auto store = [&](std::size_t r, std::size_t j, double v) {
    double& dst = c[(i0 + r) * n + j];
    dst = accumulate ? dst + v : v;
  };
  std::size_t j0 = 0;
  if (rows == kRowBlock) {
    for (; j0 + kColBlock <= n; j0 += kColBlock) {
      double t[kRowBlock][kColBlock] = {};
      for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * n + j0;
        const double a0 = a_at(0, p), a1 = a_at(1, p), a2 = a_at(2, p), a3 = a_at(3, p);
        for (std::size_t q = 0; q < kColBlock; ++q) {
          t[0][q] += a0 * bp[q];
          t[1][q] += a1 * bp[q];
          t[2][q] += a2 * bp[q];
          t[3][q] += a3 * bp[q];
        }
      }
      for (std::size_t r = 0; r < kRowBlock; ++r)
        for (std::size_t q = 0; q < kColBlock; ++q) store(r, j0 + q, t[r][q]);
    }
  }
  // Ragged edge: leftover columns, or a block of fewer than four rows.
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = j0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a_at(r, p) * b[p * n + j];
      store(r, j, s);
    }
  }
}

void check_gemm_extents(std::size_t as, std::size_t bs, std::size_t cs, std::size_t m,
                        std::size_t k, std::size_t n) {
  if (as != m * k || bs != k * n || cs != m * n) {
    throw std::invalid_argument("gemm: buffer sizes do not match extents");
  }
}

}  // namespace

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, Trans ta, Trans tb, bool accumulate) {
  check_gemm_extents(a.size(), b.size(), c.size(), m, k, n);
  std::vector<double> bt;
  const double* bp = b.data();
  if (tb == Trans::Yes) {
    bt.resize(k * n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    }
    bp = bt.data();
  }
  const std::size_t blocks = (m + kRowBlock - 1) / kRowBlock;
  const bool par = blocks > 1 && m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(blocks); ++bi) {
    const std::size_t i0 = static_cast<std::size_t>(bi) * kRowBlock;
    gemm_rows(a, bp, c.data(), i0, std::min(kRowBlock, m - i0), m, k, n, ta, accumulate);
  }
}

void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols) {
  const bool par = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r) {
    double* row = x.data() + static_cast<std::size_t>(r) * cols;
    const double mx = *std::max_element(row, row + cols);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < cols; ++j) row[j] *= inv;
  }
}

std::vector<double> pairwise_euclidean(std::span<const double> x, std::size_t n,
                                       std::size_t d) {
  std::vector<double> out(n * n, 0.0);
  const bool par = n * n * d >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      // both (i,j) and (j,i) use the same loop order, so the matrix is exactly symmetric
      const std::size_t lo = std::min(i, j), hi = std::max(i, j);
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = x[lo * d + t] - x[hi * d + t];
        s += diff * diff;
      }
      out[i * n + j] = std::sqrt(s);
    }
  }
  return out;
}

std::vector<std::int64_t> confusion_matrix(std::span<const int> prediction,
                                           std::span<const int> truth, int num_classes) {
  if (prediction.size() != truth.size()) {
    throw std::invalid_argument("confusion_matrix: prediction/truth length mismatch");
  }
  const auto c = static_cast<std::size_t>(num_classes);
  std::vector<std::int64_t> total(c * c, 0);
  const bool par = prediction.size() >= kParallelWork;
#pragma omp parallel if (par)
  {
    std::vector<std::int64_t> local(c * c, 0);
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(truth.size()); ++i) {
      const int t = truth[static_cast<std::size_t>(i)];
      const int p = prediction[static_cast<std::size_t>(i)];
      if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) continue;
      ++local[static_cast<std::size_t>(t) * c + static_cast<std::size_t>(p)];
    }
#pragma omp critical
    for (std::size_t i = 0; i < local.size(); ++i) total[i] += local[i];
  }
  return total;
}

int max_threads() { return omp_get_max_threads(); }

namespace serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, Trans ta, Trans tb, bool accumulate) {
  check_gemm_extents(a.size(), b.size(), c.size(), m, k, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta == Trans::No ? a[i * k + p] : a[p * m + i];
        const double bv = tb == Trans::No ? b[p * n + j] : b[j * k + p];
        s += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = x[r * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[r * cols + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += std::exp(x[r * cols + j] - mx);
    for (std::size_t j = 0; j < cols; ++j) x[r * cols + j] = std::exp(x[r * cols + j] - mx) / sum;
  }
}

std::vector<double> pairwise_euclidean(std::span<const double> x, std::size_t n,
                                       std::size_t d) {
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) s += (x[i * d + t] - x[j * d + t]) * (x[i * d + t] - x[j * d + t]);
      out[i * n + j] = out[j * n + i] = std::sqrt(s);
    }
  }
  return out;
}

std::vector<std::int64_t> confusion_matrix(std::span<const int> prediction,
                                           std::span<const int> truth, int num_classes) {
  if (prediction.size() != truth.size()) {
    throw std::invalid_argument("confusion_matrix: prediction/truth length mismatch");
  }
  const auto c = static_cast<std::size_t>(num_classes);
  std::vector<std::int64_t> out(c * c, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || prediction[i] < 0 ||
        prediction[i] >= num_classes) {
      continue;
    }
    ++out[static_cast<std::size_t>(truth[i]) * c + static_cast<std::size_t>(prediction[i])];
  }
  return out;
}

}  // namespace serial

}  // namespace pf::kernels
