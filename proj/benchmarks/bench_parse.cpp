#include <benchmark/benchmark.h>

#include "kbf/domains.hpp"
#include "kbf/parse.hpp"

namespace {

const kbf::DomainRegistry& registry() {
    static kbf::DomainRegistry r = kbf::DomainRegistry::builtin();
    return r;
}

void BM_ParseBatchNumbered(benchmark::State& state) {
    const auto& spec = registry().at("boiling_point");
    std::string text;
    for (int i = 1; i <= 10; ++i) {
        text += "(" + std::to_string(i) + ") " + std::to_string(100 + i) + "\n";
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(kbf::parse_batch(text, 10, spec));
    }
}
BENCHMARK(BM_ParseBatchNumbered);

void BM_ParseBatchMessy(benchmark::State& state) {
    const auto& spec = registry().at("boiling_point");
    const std::string text =
        "<think>long reasoning trace with numbers 1 2 3</think>\n"
        "| # | Answer |\n|---|---|\n| 1 | about 106 |\n| 2 | 80 \xC2\xB1 3 |\n";
    for (auto _ : state) {
        benchmark::DoNotOptimize(kbf::parse_batch(text, 2, spec));
    }
}
BENCHMARK(BM_ParseBatchMessy);

void BM_ParseCandidates(benchmark::State& state) {
    const auto& spec = registry().at("crypto_parameters");
    std::string text;
    for (int i = 0; i < 20; ++i) {
        text += std::to_string(i + 1) + ". cipher variant " + std::to_string(i) + " rounds | " +
                std::to_string(8 + i) + "\n";
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(kbf::parse_candidate_records(text, spec));
    }
}
BENCHMARK(BM_ParseCandidates);

}  // namespace
