#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

// Dense numeric kernels. Each parallel kernel in pf::kernels has a plain
// loop counterpart in pf::kernels::serial that the tests use as reference.
// Parallel kernels split work by output row only, so results are bitwise
// independent of the thread count.
namespace pf::kernels {

enum class Trans { No, Yes };

/// c (m×n) = op(a) (m×k) · op(b) (k×n), optionally added to c.
/// op(a) = a when ta == No (a stored m×k), else aᵀ (a stored k×m).
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, Trans ta = Trans::No,
          Trans tb = Trans::No, bool accumulate = false);

/// In-place row softmax with per-row max subtraction.
void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols);

/// n×n Euclidean distance matrix between the rows of x (n×d).
std::vector<double> pairwise_euclidean(std::span<const double> x, std::size_t n,
                                       std::size_t d);

/// num_classes² counts, row = ground truth, column = prediction.
std::vector<std::int64_t> confusion_matrix(std::span<const int> prediction,
                                           std::span<const int> truth, int num_classes);

/// Maximum thread count OpenMP would use for a parallel region.
int max_threads();

namespace serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, Trans ta = Trans::No,
          Trans tb = Trans::No, bool accumulate = false);
void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols);
std::vector<double> pairwise_euclidean(std::span<const double> x, std::size_t n,
                                       std::size_t d);
std::vector<std::int64_t> confusion_matrix(std::span<const int> prediction,
                                           std::span<const int> truth, int num_classes);

}  // namespace serial

}  // namespace pf::kernels
