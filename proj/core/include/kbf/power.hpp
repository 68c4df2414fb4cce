#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kbf/stats.hpp"

namespace kbf::power {

// Per-probe behavior profile for one reference-substitute pair, as a
// deterministic type table: n01 probes mismatch only when served by the
// substitute, n10 only when served by the reference, n11 always, n00 never.
struct PairProfile {
    std::string label;
    long long N = 0;
    stats::MismatchTable table;

    double pR() const { return table.reference_rate(); }
    double pS() const { return table.substitute_rate(); }
};

// Reconstruct a deterministic type table from aggregate rates:
// n11 = round(pS*N) - n01 clamped >= 0, n10 = round(pR*N) - n11 clamped
// >= 0, remainder n00.
PairProfile profile_from_rates(std::string label, long long N, long long n01,
                               double pS, double pR);

PairProfile load_profile(const std::string& path);
void save_profile(const PairProfile& profile, const std::string& path);

// Null bound used in simulation, mirroring enrollment:
// cp_upper(round(pR*N), N, gamma).
double simulation_p0(const PairProfile& profile, double gamma = 0.99);

// One simulated audit at routing fraction pi: every probe is independently
// routed to the substitute with probability pi; a probe mismatches iff it
// was served by the side its type mismatches on. Two-round mode re-draws
// routing independently for the round-one mismatches. Returns the verdict
// at significance alpha.
struct SimulatedAudit {
    long long W1 = 0;
    long long W2 = 0;
    long long T = 0;
    bool rejected = false;
};

SimulatedAudit simulate_audit(const PairProfile& profile, double pi, double p0,
                              bool two_round, double alpha, uint64_t seed);

struct PowerResult {
    std::vector<double> grid;
    std::vector<double> tpr;
    std::optional<double> mdr_65;
    std::optional<double> mdr_80;
    std::optional<double> mdr_95;
    int trials = 0;
    uint64_t seed = 0;
};

// TPR across a pi grid by probe-level Monte Carlo; MDR_X is the smallest
// grid pi with TPR >= X/100. Per-trial randomness derives from
// (seed, grid index, trial index): the parallel schedule never changes
// results.
PowerResult mdr_curve(const PairProfile& profile, double p0, std::vector<double> grid,
                      int trials, double alpha, bool two_round, uint64_t seed,
                      int max_in_flight = 0);

struct SweepPoint {
    double pi_true = 0.0;
    double bias = 0.0;          // mean(pi_hat) - pi_true, Scenario A
    double se = 0.0;            // sample sd of pi_hat
    double coverage = 0.0;      // Scenario B interval coverage of pi_true
    double excluded_rate = 0.0; // unidentifiable-estimate trials
};

// Candidate pool for Scenario B: per-candidate substitute rates on the
// enrolled probes; the interval uses [min, max].
struct CandidatePool {
    std::vector<double> substitute_rates;
    double min_rate() const;
    double max_rate() const;
};

// Scenario A: per trial, simulate the two-round audit at pi_true, estimate
// pi by the known-substitute quadratic, accumulate bias and SE.
// Scenario B: from the same trials' W1, compute the unknown-substitute
// interval over the pool and accumulate coverage of pi_true. The pool may
// be empty, which skips coverage.
std::vector<SweepPoint> estimator_sweep(const PairProfile& profile,
                                        const std::vector<double>& pi_grid, int trials,
                                        const CandidatePool& pool, uint64_t seed,
                                        int max_in_flight = 0);

// CSV emission for plotting: pi,tpr,bias,se,coverage. Rows align on the
// union of both grids; absent cells are empty.
std::string results_to_csv(const PowerResult& power, const std::vector<SweepPoint>& sweep);

}  // namespace kbf::power
