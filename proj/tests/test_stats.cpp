#include <doctest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "kbf/rng.hpp"
#include "kbf/stats.hpp"
#include "stat_oracles.hpp"

using namespace kbf;
using namespace kbf::stats;

namespace {

nlohmann::json goldens() {
    std::ifstream in(std::string(KBF_FIXTURES_DIR) + "/stat_goldens.json");
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    return j;
}

}  // namespace

TEST_CASE("cp_upper frozen golden values") {
    // paper-scale control: 0 failures in 16 trials at 95% -> 17.1%
    CHECK(std::fabs(cp_upper(0, 16, 0.95) - 0.1707) < 0.0005);

    for (const auto& g : goldens().at("cp_upper")) {
        const double value = cp_upper(g.at("k").get<long long>(), g.at("n").get<long long>(),
                                      g.at("gamma").get<double>());
        CHECK(std::fabs(value - g.at("value").get<double>()) < 1e-9);
    }
}

TEST_CASE("cp_upper edge cases and argument checks") {
    CHECK(cp_upper(16, 16, 0.99) == 1.0);
    CHECK(cp_upper(5, 5, 0.5) == 1.0);
    CHECK_THROWS_AS(cp_upper(-1, 10, 0.95), std::invalid_argument);
    CHECK_THROWS_AS(cp_upper(11, 10, 0.95), std::invalid_argument);
    CHECK_THROWS_AS(cp_upper(0, 0, 0.95), std::invalid_argument);
    CHECK_THROWS_AS(cp_upper(0, 10, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(cp_upper(0, 10, 1.0), std::invalid_argument);
}

TEST_CASE("cp_upper agrees with the exact-binomial bisection oracle") {
    for (long long n : {1, 10, 100, 347}) {
        for (long long k = 0; k <= n; ++k) {
            const double ours = cp_upper(k, n, 0.99);
            const double oracle = kbf_test::cp_upper_bisect(k, n, 0.99);
            CHECK(std::fabs(ours - oracle) < 1e-9);
        }
    }
}

TEST_CASE("cp_upper monotonicity grid sweep") {
    for (long long n : {5, 40, 200}) {
        double prev = -1.0;
        for (long long k = 0; k <= n; ++k) {
            const double v = cp_upper(k, n, 0.99);
            CHECK(v >= prev);  // non-decreasing in k
            prev = v;
        }
    }
    for (long long k : {0, 3}) {
        double prev = 2.0;
        for (long long n : {10, 20, 50, 100, 400}) {
            if (k > n) continue;
            const double v = cp_upper(k, n, 0.99);
            CHECK(v <= prev);  // non-increasing in n
            prev = v;
        }
    }
    // strictly positive even at k = 0, and >= k/n
    for (long long n : {1, 16, 1000}) {
        CHECK(cp_upper(0, n, 0.99) > 0.0);
        for (long long k = 0; k <= n; k += std::max<long long>(1, n / 7)) {
            CHECK(cp_upper(k, n, 0.99) >=
                  static_cast<double>(k) / static_cast<double>(n) - 1e-12);
        }
    }
}

TEST_CASE("binom_tail_pvalue frozen goldens and trivial identities") {
    for (const auto& g : goldens().at("binom_tail")) {
        const double value = binom_tail_pvalue(g.at("k").get<long long>(),
                                               g.at("n").get<long long>(), g.at("p").get<double>());
        const double expect = g.at("value").get<double>();
        CHECK(std::fabs(value - expect) <= 1e-12 * expect);
    }
    // spec-table identities
    CHECK(binom_tail_pvalue(0, 50, 0.3) == 1.0);
    CHECK(binom_tail_pvalue(50, 50, 0.3) == doctest::Approx(std::pow(0.3, 50)).epsilon(1e-12));
    CHECK(binom_tail_pvalue(5, 100, 0.02) == doctest::Approx(0.051).epsilon(0.02));
    CHECK(binom_tail_pvalue(3, 10, 0.0) == 0.0);
    CHECK(binom_tail_pvalue(0, 10, 0.0) == 1.0);
    CHECK(binom_tail_pvalue(3, 10, 1.0) == 1.0);
}

TEST_CASE("binom_tail_pvalue agrees with the long-double oracle on a grid") {
    Rng rng(2024);
    int checked = 0;
    while (checked < 200) {
        const long long N = 1 + static_cast<long long>(rng.below(1000));
        const long long k = static_cast<long long>(rng.below(static_cast<uint64_t>(N + 1)));
        const double p = 0.001 + 0.998 * rng.uniform();
        const double ours = binom_tail_pvalue(k, N, p);
        const long double oracle = kbf_test::binom_tail_ld(k, N, static_cast<long double>(p));
        if (oracle < 1e-280) continue;  // below double range; covered by log variant
        CHECK(std::fabs(ours - static_cast<double>(oracle)) <=
              1e-12 * static_cast<double>(oracle));
        ++checked;
    }
}

TEST_CASE("binom_tail monotonicity properties") {
    for (long long k = 0; k <= 60; k += 5) {
        CHECK(binom_tail_pvalue(k, 60, 0.3) >= binom_tail_pvalue(std::min(k + 1, 60LL), 60, 0.3));
    }
    double prev = 0.0;
    for (double p : {0.01, 0.05, 0.2, 0.5, 0.9}) {
        const double v = binom_tail_pvalue(10, 60, p);
        CHECK(v >= prev);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        prev = v;
    }
}

TEST_CASE("binom_tail_log_pvalue reaches below double underflow") {
    const double lp = binom_tail_log_pvalue(900, 1000, 0.01);
    CHECK(lp < -700.0);        // tail underflows double
    CHECK(std::isfinite(lp));
    // consistency with the linear version where both are representable
    const double lp2 = binom_tail_log_pvalue(34, 300, 0.06);
    CHECK(std::exp(lp2) == doctest::Approx(binom_tail_pvalue(34, 300, 0.06)).epsilon(1e-9));
}

TEST_CASE("two-round null: degenerate and moment identities") {
    SUBCASE("p0 = 0") {
        TwoRoundNull null(50, 0.0);
        CHECK(null.pvalue(0) == 1.0);
        CHECK(null.pvalue(1) == 0.0);
        CHECK(null.cutoff(0.05) == 1);
    }
    SUBCASE("pmf sums to one and mean matches N*p0*(1+p0)") {
        for (const auto& [N, p0] : std::vector<std::pair<long long, double>>{
                 {10, 0.3}, {300, 0.05}, {667, 0.0655}, {224, 0.0441}}) {
            TwoRoundNull null(N, p0);
            double total = 0.0;
            for (long long t = 0; t <= 2 * N; ++t) total += null.pmf(t);
            CHECK(std::fabs(total - 1.0) < 1e-12);
            CHECK(std::fabs(null.mean() -
                            static_cast<double>(N) * p0 * (1.0 + p0)) < 1e-9);
        }
    }
    SUBCASE("cutoff definition") {
        TwoRoundNull null(300, 0.05);
        const long long c = null.cutoff(0.05);
        CHECK(null.pvalue(c) < 0.05);
        CHECK(null.pvalue(c - 1) >= 0.05);
    }
}

TEST_CASE("two-round null matches Monte Carlo (N=300, p0=0.05), 1e5 trials") {
    // A slimmer version of the acceptance check to keep unit runs fast.
    const long long N = 300;
    const double p0 = 0.05;
    const int trials = 100000;
    TwoRoundNull null(N, p0);

    std::vector<long long> counts(static_cast<std::size_t>(2 * N + 1), 0);
    Rng rng(555);
    for (int i = 0; i < trials; ++i) {
        long long w1 = 0;
        for (long long j = 0; j < N; ++j) w1 += rng.bernoulli(p0) ? 1 : 0;
        long long w2 = 0;
        for (long long j = 0; j < w1; ++j) w2 += rng.bernoulli(p0) ? 1 : 0;
        ++counts[static_cast<std::size_t>(w1 + w2)];
    }
    for (long long t = 0; t <= 2 * N; ++t) {
        const double p = null.pmf(t);
        const double freq = static_cast<double>(counts[static_cast<std::size_t>(t)]) / trials;
        const double se = std::sqrt(std::max(p * (1.0 - p), 1e-12) / trials);
        CHECK(std::fabs(freq - p) <= 5.0 * se + 1e-9);
    }
}

TEST_CASE("mcnemar_exact") {
    for (const auto& g : goldens().at("mcnemar")) {
        CHECK(mcnemar_exact(g.at("b").get<long long>(), g.at("c").get<long long>()) ==
              doctest::Approx(g.at("value").get<double>()).epsilon(1e-12));
    }
    CHECK(mcnemar_exact(6, 6) == 1.0);
    CHECK(mcnemar_exact(0, 0) == 1.0);
    CHECK(mcnemar_exact(10, 1) == doctest::Approx(0.01171875).epsilon(1e-12));
    // symmetry
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        const long long b = static_cast<long long>(rng.below(40));
        const long long c = static_cast<long long>(rng.below(40));
        CHECK(mcnemar_exact(b, c) == mcnemar_exact(c, b));
    }
}

TEST_CASE("estimate_pi_known spec examples") {
    SUBCASE("unique interior root") {
        // 100 pi^2 + 100 pi - 75 = 0 has the single admissible root 0.5
        MismatchTable t{0, 100, 0, 0};
        const auto est = estimate_pi_known(t, 75);
        REQUIRE(est.point.has_value());
        CHECK(*est.point == doctest::Approx(0.5).epsilon(1e-12));
        CHECK_FALSE(est.clipped);
        CHECK_FALSE(est.unidentifiable);
    }
    SUBCASE("T at the pi=0 moment gives zero") {
        MismatchTable t{50, 30, 7, 5};
        const auto est = estimate_pi_known(t, 2 * t.n10 + 2 * t.n11);
        REQUIRE(est.point.has_value());
        CHECK(*est.point == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("T at the pi=1 moment gives one (n10 = 0)") {
        MismatchTable t{50, 30, 0, 5};
        const auto est = estimate_pi_known(t, 2 * t.n01 + 2 * t.n11);
        REQUIRE(est.point.has_value());
        CHECK(*est.point == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("degenerate table is unidentifiable") {
        MismatchTable t{80, 0, 0, 10};
        const auto est = estimate_pi_known(t, 20);  // A=0, B=0
        CHECK(est.unidentifiable);
        CHECK_FALSE(est.point.has_value());
    }
}

TEST_CASE("estimate_pi_known round-trip on random tables") {
    Rng rng(321);
    int unclipped = 0;
    for (int i = 0; i < 3000; ++i) {
        MismatchTable t;
        t.n00 = static_cast<long long>(rng.below(400));
        t.n01 = static_cast<long long>(rng.below(200));
        t.n10 = static_cast<long long>(rng.below(50));
        t.n11 = static_cast<long long>(rng.below(50));
        if (t.total() < 1 || t.n01 + t.n10 == 0) continue;
        const long long t_obs = static_cast<long long>(rng.below(
            static_cast<uint64_t>(2 * t.total() + 1)));
        const auto est = estimate_pi_known(t, t_obs);
        if (!est.point || est.clipped || est.unidentifiable) continue;
        CHECK(std::fabs(expected_two_round_t(t, *est.point) -
                        static_cast<double>(t_obs)) < 1e-9);
        ++unclipped;
    }
    CHECK(unclipped > 500);
}

TEST_CASE("estimate_pi_known double-root tie-break uses the W1 anchor") {
    // 90 pi^2 - 150 pi + (120 - T) = 0; at T = 60 the roots are 2/3 and 1,
    // both admissible. The first-round moment anchor is (60 - W1) / 30.
    MismatchTable m{0, 30, 60, 0};
    const auto low_anchor = estimate_pi_known(m, 60, 62);   // anchor -0.07 -> nearer 2/3
    const auto high_anchor = estimate_pi_known(m, 60, 30);  // anchor 1.0 -> nearer 1
    REQUIRE(low_anchor.point.has_value());
    REQUIRE(high_anchor.point.has_value());
    CHECK(low_anchor.double_root);
    CHECK(high_anchor.double_root);
    CHECK(*low_anchor.point == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    CHECK(*high_anchor.point == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(low_anchor.other_root == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("estimate_pi_se is positive and reproducible") {
    MismatchTable t{486, 152, 8, 21};
    const double se1 = estimate_pi_se(t, 0.3, 400, 77);
    const double se2 = estimate_pi_se(t, 0.3, 400, 77);
    CHECK(se1 == se2);
    CHECK(se1 > 0.0);
    CHECK(se1 < 0.2);
}

TEST_CASE("pi_interval_unknown") {
    SUBCASE("zero numerator") {
        // W1/N = pR exactly
        const auto est = pi_interval_unknown(30, 300, 0.1, 0.2, 0.4);
        CHECK(*est.interval_lo == 0.0);
        CHECK(*est.interval_hi == 0.0);
    }
    SUBCASE("numerator equals the largest denominator") {
        // W1/N = pS_max -> pi_min = 1, pi_max clips to 1
        const auto est = pi_interval_unknown(120, 300, 0.1, 0.2, 0.4);
        CHECK(*est.interval_lo == 1.0);
        CHECK(*est.interval_hi == 1.0);
        CHECK(est.clipped);
    }
    SUBCASE("single-candidate pool reduces to the point moment estimate") {
        // W1/N = (pR + pS)/2 with pS_min = pS_max -> [0.5, 0.5]
        const auto est = pi_interval_unknown(45, 300, 0.1, 0.2, 0.2);
        CHECK(*est.interval_lo == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(*est.interval_hi == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("pool indistinguishable from reference") {
        CHECK_THROWS_AS(pi_interval_unknown(30, 300, 0.2, 0.2, 0.4), std::invalid_argument);
        CHECK_THROWS_AS(pi_interval_unknown(30, 300, 0.3, 0.2, 0.4), std::invalid_argument);
    }
    SUBCASE("sandwich property") {
        Rng rng(11);
        for (int i = 0; i < 500; ++i) {
            const long long N = 100 + static_cast<long long>(rng.below(400));
            const long long w1 = static_cast<long long>(rng.below(static_cast<uint64_t>(N + 1)));
            const double pR = 0.02 + 0.1 * rng.uniform();
            const double lo = pR + 0.05 + 0.2 * rng.uniform();
            const double hi = lo + 0.2 * rng.uniform();
            const double mid = lo + (hi - lo) * rng.uniform();
            const auto est = pi_interval_unknown(w1, N, pR, lo, std::min(hi, 1.0));
            const double point =
                (static_cast<double>(w1) / static_cast<double>(N) - pR) / (mid - pR);
            const double clipped = std::clamp(point, 0.0, 1.0);
            CHECK(*est.interval_lo <= clipped + 1e-12);
            CHECK(*est.interval_hi >= clipped - 1e-12);
        }
    }
}

TEST_CASE("super-uniformity of the binomial audit test (quick version)") {
    // honest endpoint at exactly p0: rejection frequency <= alpha + 3*sqrt(alpha/M)
    const long long N = 300;
    const double p0 = 0.05;
    const double alpha = 0.05;
    const int M = 2000;
    Rng rng(8080);
    int rejections = 0;
    for (int i = 0; i < M; ++i) {
        long long k = 0;
        for (long long j = 0; j < N; ++j) k += rng.bernoulli(p0) ? 1 : 0;
        if (binom_tail_pvalue(k, N, p0) < alpha) ++rejections;
    }
    const double freq = static_cast<double>(rejections) / M;
    CHECK(freq <= alpha + 3.0 * std::sqrt(alpha / M));
}
