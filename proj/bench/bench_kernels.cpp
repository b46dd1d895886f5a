// Serial reference kernels against their OpenMP versions.
#include <benchmark/benchmark.h>

#include "promptfocus/kernels.hpp"
#include "promptfocus/rng.hpp"

namespace k = pf::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  pf::RngState rng(seed);
  return rng.normal_vector(n, 1.0);
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::gemm(a, b, c, n, n, n);
    } else {
      k::serial::gemm(a, b, c, n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = std::size_t{256};
  const auto x0 = random_values(rows * cols, 3);
  std::vector<double> x;
  for (auto _ : state) {
    x = x0;
    if constexpr (Parallel) {
      k::softmax_rows(x, rows, cols);
    } else {
      k::serial::softmax_rows(x, rows, cols);
    }
    benchmark::DoNotOptimize(x.data());
  }
}

template <bool Parallel>
void BM_Pairwise(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), d = std::size_t{64};
  const auto x = random_values(n * d, 4);
  for (auto _ : state) {
    auto out = Parallel ? k::pairwise_euclidean(x, n, d) : k::serial::pairwise_euclidean(x, n, d);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Confusion(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  pf::RngState rng(5);
  std::vector<int> pred(n), truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    pred[i] = static_cast<int>(rng.below(19));
    truth[i] = static_cast<int>(rng.below(19));
  }
  for (auto _ : state) {
    auto cm = Parallel ? k::confusion_matrix(pred, truth, 19) : k::serial::confusion_matrix(pred, truth, 19);
    benchmark::DoNotOptimize(cm.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_Gemm<true>)->Name("gemm/omp")->Arg(64)->Arg(256)->Arg(512)->UseRealTime();
BENCHMARK(BM_Softmax<false>)->Name("softmax_rows/serial")->Arg(256)->Arg(4096);
BENCHMARK(BM_Softmax<true>)->Name("softmax_rows/omp")->Arg(256)->Arg(4096)->UseRealTime();
BENCHMARK(BM_Pairwise<false>)->Name("pairwise_euclidean/serial")->Arg(100)->Arg(1000);
BENCHMARK(BM_Pairwise<true>)->Name("pairwise_euclidean/omp")->Arg(100)->Arg(1000)->UseRealTime();
BENCHMARK(BM_Confusion<false>)->Name("confusion_matrix/serial")->Arg(1 << 16)->Arg(1 << 22);
BENCHMARK(BM_Confusion<true>)->Name("confusion_matrix/omp")->Arg(1 << 16)->Arg(1 << 22)->UseRealTime();

BENCHMARK_MAIN();
