#include <benchmark/benchmark.h>

#include "kbf/stats.hpp"

namespace {

void BM_CpUpper(benchmark::State& state) {
    const long long n = state.range(0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kbf::stats::cp_upper(n / 20, n, 0.99));
    }
}
BENCHMARK(BM_CpUpper)->Arg(100)->Arg(1000);

void BM_BinomTail(benchmark::State& state) {
    const long long n = state.range(0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kbf::stats::binom_tail_pvalue(n / 10, n, 0.05));
    }
}
BENCHMARK(BM_BinomTail)->Arg(300)->Arg(1000);

void BM_TwoRoundNullBuild(benchmark::State& state) {
    const long long n = state.range(0);
    for (auto _ : state) {
        kbf::stats::TwoRoundNull null(n, 0.05);
        benchmark::DoNotOptimize(null.cutoff(0.05));
    }
}
BENCHMARK(BM_TwoRoundNullBuild)->Arg(300)->Arg(667);

void BM_EstimatePi(benchmark::State& state) {
    kbf::stats::MismatchTable table{486, 152, 8, 21};
    for (auto _ : state) {
        benchmark::DoNotOptimize(kbf::stats::estimate_pi_known(table, 90, 60));
    }
}
BENCHMARK(BM_EstimatePi);

}  // namespace

BENCHMARK_MAIN();
