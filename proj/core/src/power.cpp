#include "kbf/power.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "kbf/errors.hpp"
#include "kbf/oracle.hpp"
#include "kbf/rng.hpp"
#include "kbf/text.hpp"

namespace kbf::power {

PairProfile profile_from_rates(std::string label, long long N, long long n01, double pS,
                               double pR) {
    if (N < 1) throw std::invalid_argument("profile_from_rates: N must be >= 1");
    if (n01 < 0 || n01 > N) throw std::invalid_argument("profile_from_rates: bad n01");
    if (pS < 0 || pS > 1 || pR < 0 || pR > 1) {
        throw std::invalid_argument("profile_from_rates: rates must be in [0,1]");
    }
    PairProfile p;
    p.label = std::move(label);
    p.N = N;
    const long long sub_total = std::llround(pS * static_cast<double>(N));
    const long long ref_total = std::llround(pR * static_cast<double>(N));
    p.table.n01 = n01;
    p.table.n11 = std::max(0LL, sub_total - n01);
    p.table.n10 = std::max(0LL, ref_total - p.table.n11);
    p.table.n00 = N - p.table.n01 - p.table.n10 - p.table.n11;
    if (p.table.n00 < 0) throw std::invalid_argument("profile_from_rates: counts exceed N");
    return p;
}

PairProfile load_profile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open profile: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("profile '" + path + "': " + e.what());
    }
    PairProfile p;
    try {
        p.label = j.value("label", std::string("profile"));
        if (j.contains("table")) {
            p.table.n00 = j["table"].at("n00").get<long long>();
            p.table.n01 = j["table"].at("n01").get<long long>();
            p.table.n10 = j["table"].at("n10").get<long long>();
            p.table.n11 = j["table"].at("n11").get<long long>();
            p.N = p.table.total();
        } else {
            p = profile_from_rates(p.label, j.at("N").get<long long>(),
                                   j.at("n01").get<long long>(), j.at("pS").get<double>(),
                                   j.at("pR").get<double>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("profile '" + path + "': " + e.what());
    }
    if (p.N < 1) throw ConfigError("profile '" + path + "': empty table");
    return p;
}

void save_profile(const PairProfile& profile, const std::string& path) {
    nlohmann::ordered_json j;
    j["label"] = profile.label;
    j["table"] = {{"n00", profile.table.n00},
                  {"n01", profile.table.n01},
                  {"n10", profile.table.n10},
                  {"n11", profile.table.n11}};
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write profile: " + path);
    out << j.dump(2) << '\n';
}

double simulation_p0(const PairProfile& profile, double gamma) {
    const long long k = std::llround(profile.pR() * static_cast<double>(profile.N));
    return stats::cp_upper(k, profile.N, gamma);
}

namespace {

// Routing + mismatch draw for one probe class; `mismatch_on_sub` says which
// serving side the class mismatches on.
long long round_mismatches(Rng& rng, long long count, double pi, bool mismatch_on_sub) {
    long long m = 0;
    for (long long i = 0; i < count; ++i) {
        const bool to_sub = rng.bernoulli(pi);
        if (to_sub == mismatch_on_sub) ++m;
    }
    return m;
}

}  // namespace

SimulatedAudit simulate_audit(const PairProfile& profile, double pi, double p0, bool two_round,
                              double alpha, uint64_t seed) {
    if (pi < 0.0 || pi > 1.0) throw std::invalid_argument("simulate_audit: pi must be in [0,1]");
    Rng rng(seed);

    // Round one: every probe independently routed; type 11 mismatches on
    // both sides, type 00 on neither.
    const long long x01 = round_mismatches(rng, profile.table.n01, pi, true);
    const long long x10 = round_mismatches(rng, profile.table.n10, pi, false);

    SimulatedAudit sim;
    sim.W1 = x01 + x10 + profile.table.n11;
    if (two_round) {
        // fresh routing draws for the re-queried mismatches
        sim.W2 = round_mismatches(rng, x01, pi, true) +
                 round_mismatches(rng, x10, pi, false) + profile.table.n11;
        sim.T = sim.W1 + sim.W2;
        sim.rejected = stats::two_round_null_pvalue(sim.T, profile.N, p0) < alpha;
    } else {
        sim.T = sim.W1;
        sim.rejected = stats::binom_tail_pvalue(sim.W1, profile.N, p0) < alpha;
    }
    return sim;
}

PowerResult mdr_curve(const PairProfile& profile, double p0, std::vector<double> grid,
                      int trials, double alpha, bool two_round, uint64_t seed,
                      int max_in_flight) {
    if (trials < 1) throw std::invalid_argument("mdr_curve: trials must be >= 1");
    if (!std::is_sorted(grid.begin(), grid.end())) {
        throw std::invalid_argument("mdr_curve: grid must be ascending");
    }
    for (double g : grid) {
        if (g < 0.0 || g > 1.0) throw std::invalid_argument("mdr_curve: grid must lie in [0,1]");
    }

    PowerResult result;
    result.grid = std::move(grid);
    result.tpr.assign(result.grid.size(), 0.0);
    result.trials = trials;
    result.seed = seed;

    // Rejection needs only the cutoff, computed once per (N, p0).
    const stats::TwoRoundNull null_two(profile.N, p0);
    const long long cutoff_two = null_two.cutoff(alpha);
    long long cutoff_one = profile.N + 1;
    if (!two_round) {
        for (long long t = 0; t <= profile.N; ++t) {
            if (stats::binom_tail_pvalue(t, profile.N, p0) < alpha) {
                cutoff_one = t;
                break;
            }
        }
    }

    parallel_for_ordered(result.grid.size(), max_in_flight, [&](std::size_t gi) {
        const double pi = result.grid[gi];
        long long rejections = 0;
        for (int trial = 0; trial < trials; ++trial) {
            Rng rng(derive_stream(seed, gi, static_cast<uint64_t>(trial)));
            const long long x01 = round_mismatches(rng, profile.table.n01, pi, true);
            const long long x10 = round_mismatches(rng, profile.table.n10, pi, false);
            const long long w1 = x01 + x10 + profile.table.n11;
            if (two_round) {
                const long long w2 = round_mismatches(rng, x01, pi, true) +
                                     round_mismatches(rng, x10, pi, false) +
                                     profile.table.n11;
                if (w1 + w2 >= cutoff_two) ++rejections;
            } else {
                if (w1 >= cutoff_one) ++rejections;
            }
        }
        result.tpr[gi] = static_cast<double>(rejections) / static_cast<double>(trials);
    });

    const auto threshold = [&](double level) -> std::optional<double> {
        for (std::size_t i = 0; i < result.grid.size(); ++i) {
            if (result.tpr[i] >= level) return result.grid[i];
        }
        return std::nullopt;
    };
    result.mdr_65 = threshold(0.65);
    result.mdr_80 = threshold(0.80);
    result.mdr_95 = threshold(0.95);
    return result;
}

double CandidatePool::min_rate() const {
    if (substitute_rates.empty()) throw std::invalid_argument("empty candidate pool");
    return *std::min_element(substitute_rates.begin(), substitute_rates.end());
}

double CandidatePool::max_rate() const {
    if (substitute_rates.empty()) throw std::invalid_argument("empty candidate pool");
    return *std::max_element(substitute_rates.begin(), substitute_rates.end());
}

std::vector<SweepPoint> estimator_sweep(const PairProfile& profile,
                                        const std::vector<double>& pi_grid, int trials,
                                        const CandidatePool& pool, uint64_t seed,
                                        int max_in_flight) {
    if (trials < 2) throw std::invalid_argument("estimator_sweep: trials must be >= 2");
    const bool have_pool = !pool.substitute_rates.empty();
    const double pR = profile.pR();
    const double pool_min = have_pool ? pool.min_rate() : 0.0;
    const double pool_max = have_pool ? pool.max_rate() : 0.0;

    std::vector<SweepPoint> points(pi_grid.size());
    parallel_for_ordered(pi_grid.size(), max_in_flight, [&](std::size_t gi) {
        const double pi_true = pi_grid[gi];
        double sum = 0.0;
        double sumsq = 0.0;
        long long used = 0;
        long long excluded = 0;
        long long covered = 0;
        for (int trial = 0; trial < trials; ++trial) {
            Rng rng(derive_stream(seed, gi + 1000, static_cast<uint64_t>(trial)));
            const long long x01 = round_mismatches(rng, profile.table.n01, pi_true, true);
            const long long x10 = round_mismatches(rng, profile.table.n10, pi_true, false);
            const long long w1 = x01 + x10 + profile.table.n11;
            const long long w2 = round_mismatches(rng, x01, pi_true, true) +
                                 round_mismatches(rng, x10, pi_true, false) +
                                 profile.table.n11;
            // Scenario A: known substitute, quadratic point estimate
            const auto est = stats::estimate_pi_known(profile.table, w1 + w2, w1);
            if (est.point && !est.unidentifiable) {
                sum += *est.point;
                sumsq += *est.point * *est.point;
                ++used;
            } else {
                ++excluded;
            }
            // Scenario B: pool interval from the first-round rate
            if (have_pool) {
                const auto interval =
                    stats::pi_interval_unknown(w1, profile.N, pR, pool_min, pool_max);
                if (*interval.interval_lo <= pi_true && pi_true <= *interval.interval_hi) {
                    ++covered;
                }
            }
        }
        SweepPoint& pt = points[gi];
        pt.pi_true = pi_true;
        if (used >= 2) {
            const double mean = sum / static_cast<double>(used);
            pt.bias = mean - pi_true;
            pt.se = std::sqrt(std::max(0.0, (sumsq - static_cast<double>(used) * mean * mean) /
                                                static_cast<double>(used - 1)));
        }
        pt.excluded_rate = static_cast<double>(excluded) / static_cast<double>(trials);
        pt.coverage = have_pool ? static_cast<double>(covered) / static_cast<double>(trials) : 0.0;
    });
    return points;
}

std::string results_to_csv(const PowerResult& power, const std::vector<SweepPoint>& sweep) {
    // union of grids, power first
    std::vector<double> grid;
    for (double g : power.grid) grid.push_back(g);
    for (const auto& pt : sweep) {
        if (std::find(grid.begin(), grid.end(), pt.pi_true) == grid.end()) {
            grid.push_back(pt.pi_true);
        }
    }
    std::sort(grid.begin(), grid.end());

    std::ostringstream csv;
    csv << "pi,tpr,bias,se,coverage\n";
    for (double pi : grid) {
        csv << format_double(pi) << ',';
        bool found = false;
        for (std::size_t i = 0; i < power.grid.size(); ++i) {
            if (power.grid[i] == pi) {
                csv << format_double(power.tpr[i]);
                found = true;
                break;
            }
        }
        if (!found) csv << "";
        csv << ',';
        const SweepPoint* pt = nullptr;
        for (const auto& s : sweep) {
            if (s.pi_true == pi) {
                pt = &s;
                break;
            }
        }
        if (pt) {
            csv << format_double(pt->bias) << ',' << format_double(pt->se) << ','
                << format_double(pt->coverage);
        } else {
            csv << ",,";
        }
        csv << '\n';
    }
    return csv.str();
}

}  // namespace kbf::power
