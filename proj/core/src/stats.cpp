#include "kbf/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "kbf/rng.hpp"

namespace kbf::stats {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// Lentz continued fraction for the incomplete beta.
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

// Positive-term Kahan accumulator.
struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

// Scaled product m * 2^e with m kept in [0.5, 1); multiplies without over-
// or underflow no matter how deep the starting tail term sits.
struct Scaled {
    double mantissa = 1.0;
    long exponent = 0;

    void mul(double f) {
        int fe = 0;
        const double fm = std::frexp(f, &fe);
        mantissa *= fm;
        exponent += fe;
        int me = 0;
        mantissa = std::frexp(mantissa, &me);
        exponent += me;
    }

    double value() const { return std::ldexp(mantissa, static_cast<int>(exponent)); }
    double log_value() const {
        return std::log(mantissa) + static_cast<double>(exponent) * 0.6931471805599453;
    }
};

// C(N,k) p^k (1-p)^(N-k) as a scaled product: pairs each binomial factor
// with one p so intermediate magnitudes stay tame.
Scaled binom_term_scaled(long long k, long long N, double p) {
    Scaled t;
    for (long long i = 1; i <= k; ++i) {
        t.mul(static_cast<double>(N - k + i) / static_cast<double>(i));
        t.mul(p);
    }
    const double q = 1.0 - p;
    for (long long i = 0; i < N - k; ++i) t.mul(q);
    return t;
}

}  // namespace

double MismatchTable::reference_rate() const {
    const long long N = total();
    return N > 0 ? static_cast<double>(n10 + n11) / static_cast<double>(N) : 0.0;
}

double MismatchTable::substitute_rate() const {
    const long long N = total();
    return N > 0 ? static_cast<double>(n01 + n11) / static_cast<double>(N) : 0.0;
}

double incomplete_beta(double a, double b, double x) {
    require(a > 0 && b > 0, "incomplete_beta: a, b must be > 0");
    require(x >= 0.0 && x <= 1.0, "incomplete_beta: x must be in [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(b) - std::lgamma(a) +
                          b * std::log1p(-x) + a * std::log(x)) *
                     betacf(b, a, 1.0 - x) / b;
}

double cp_upper(long long k, long long n, double gamma) {
    require(n >= 1, "cp_upper: n must be >= 1");
    require(k >= 0 && k <= n, "cp_upper: k must be in [0, n]");
    require(gamma > 0.0 && gamma < 1.0, "cp_upper: gamma must be in (0,1)");
    if (k == n) return 1.0;

    // Solve I_p(k+1, n-k) = gamma; the left side is strictly increasing in p.
    const double a = static_cast<double>(k) + 1.0;
    const double b = static_cast<double>(n - k);
    double lo = 0.0;
    double hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (incomplete_beta(a, b, mid) < gamma) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double binom_tail_pvalue(long long k, long long N, double p0) {
    require(N >= 1, "binom_tail_pvalue: N must be >= 1");
    require(k >= 0 && k <= N, "binom_tail_pvalue: k must be in [0, N]");
    require(p0 >= 0.0 && p0 <= 1.0, "binom_tail_pvalue: p0 must be in [0,1]");
    if (k == 0) return 1.0;
    if (p0 == 0.0) return 0.0;
    if (p0 == 1.0) return 1.0;

    // Upward survival recurrence from the term at k.
    const Scaled t0 = binom_term_scaled(k, N, p0);
    const double start = t0.value();
    const double ratio_base = p0 / (1.0 - p0);
    if (start > 0.0 && std::isfinite(start)) {
        KahanSum s;
        double term = start;
        s.add(term);
        for (long long i = k; i < N && term > 0.0; ++i) {
            term *= ratio_base * static_cast<double>(N - i) / static_cast<double>(i + 1);
            s.add(term);
        }
        return std::min(1.0, s.sum);
    }
    // Whole tail is below double range: come back through log space.
    return std::exp(binom_tail_log_pvalue(k, N, p0));
}

double binom_tail_log_pvalue(long long k, long long N, double p0) {
    require(N >= 1, "binom_tail_log_pvalue: N must be >= 1");
    require(k >= 0 && k <= N, "binom_tail_log_pvalue: k must be in [0, N]");
    require(p0 >= 0.0 && p0 <= 1.0, "binom_tail_log_pvalue: p0 must be in [0,1]");
    if (k == 0) return 0.0;
    if (p0 == 0.0) return -std::numeric_limits<double>::infinity();
    if (p0 == 1.0) return 0.0;

    const double log_ratio = std::log(p0) - std::log1p(-p0);
    double log_term = binom_term_scaled(k, N, p0).log_value();
    const double log_first = log_term;
    double rest = 0.0;  // sum of term_i / term_k for i > k
    for (long long i = k; i < N; ++i) {
        log_term += log_ratio + std::log(static_cast<double>(N - i)) -
                    std::log(static_cast<double>(i + 1));
        const double rel = std::exp(log_term - log_first);
        rest += rel;
        if (rel < 1e-20 && i > k + 4) break;
    }
    return std::min(0.0, log_first + std::log1p(rest));
}

TwoRoundNull::TwoRoundNull(long long N, double p0) : n_(N) {
    require(N >= 1, "TwoRoundNull: N must be >= 1");
    require(p0 >= 0.0 && p0 <= 1.0, "TwoRoundNull: p0 must be in [0,1]");
    pmf_.assign(static_cast<std::size_t>(2 * N + 1), 0.0);

    if (p0 == 0.0) {
        pmf_[0] = 1.0;
    } else if (p0 == 1.0) {
        pmf_[static_cast<std::size_t>(2 * N)] = 1.0;
    } else {
        const double ratio = p0 / (1.0 - p0);
        // Row over W1 = w, then convolve the conditional Binomial(w, p0).
        double pw = std::pow(1.0 - p0, static_cast<double>(N));  // P(W1 = 0)
        for (long long w = 0; w <= N; ++w) {
            if (w > 0) pw *= ratio * static_cast<double>(N - w + 1) / static_cast<double>(w);
            if (pw > 0.0) {
                double pj = std::pow(1.0 - p0, static_cast<double>(w));  // P(W2 = 0 | w)
                for (long long j = 0; j <= w; ++j) {
                    if (j > 0) pj *= ratio * static_cast<double>(w - j + 1) / static_cast<double>(j);
                    pmf_[static_cast<std::size_t>(w + j)] += pw * pj;
                }
            }
        }
    }

    survival_.assign(pmf_.size() + 1, 0.0);
    KahanSum s;
    for (std::size_t t = pmf_.size(); t-- > 0;) {
        s.add(pmf_[t]);
        survival_[t] = std::min(1.0, s.sum);
    }
    survival_[0] = 1.0;  // P(T >= 0) is 1 by definition
}

double TwoRoundNull::pvalue(long long t_obs) const {
    require(t_obs >= 0 && t_obs <= 2 * n_, "TwoRoundNull: t_obs must be in [0, 2N]");
    return survival_[static_cast<std::size_t>(t_obs)];
}

long long TwoRoundNull::cutoff(double alpha) const {
    require(alpha > 0.0 && alpha < 1.0, "TwoRoundNull: alpha must be in (0,1)");
    for (long long t = 0; t <= 2 * n_; ++t) {
        if (survival_[static_cast<std::size_t>(t)] < alpha) return t;
    }
    return 2 * n_ + 1;
}

double TwoRoundNull::pmf(long long t) const {
    require(t >= 0 && t <= 2 * n_, "TwoRoundNull: t must be in [0, 2N]");
    return pmf_[static_cast<std::size_t>(t)];
}

double TwoRoundNull::mean() const {
    KahanSum s;
    for (std::size_t t = 1; t < pmf_.size(); ++t) s.add(static_cast<double>(t) * pmf_[t]);
    return s.sum;
}

double two_round_null_pvalue(long long t_obs, long long N, double p0) {
    return TwoRoundNull(N, p0).pvalue(t_obs);
}

double mcnemar_exact(long long b, long long c) {
    require(b >= 0 && c >= 0, "mcnemar_exact: counts must be >= 0");
    const long long n = b + c;
    if (n == 0) return 1.0;
    const double tail = binom_tail_pvalue(std::max(b, c), n, 0.5);
    return std::min(1.0, 2.0 * tail);
}

double expected_two_round_t(const MismatchTable& table, double pi) {
    const double n01 = static_cast<double>(table.n01);
    const double n10 = static_cast<double>(table.n10);
    const double n11 = static_cast<double>(table.n11);
    return n01 * pi * (1.0 + pi) + n10 * (1.0 - pi) * (2.0 - pi) + 2.0 * n11;
}

PiEstimate estimate_pi_known(const MismatchTable& table, long long t_obs,
                             std::optional<long long> w1) {
    require(table.total() >= 1, "estimate_pi_known: table must be nonempty");
    require(t_obs >= 0 && t_obs <= 2 * table.total(),
            "estimate_pi_known: t_obs must be in [0, 2N]");

    PiEstimate est;
    const double A = static_cast<double>(table.n01 + table.n10);
    const double B = static_cast<double>(table.n01 - 3 * table.n10);
    const double C = static_cast<double>(2 * table.n10 + 2 * table.n11 - t_obs);

    if (A == 0.0) {
        if (B == 0.0) {
            est.unidentifiable = true;
            return est;
        }
        const double root = -C / B;
        if (root >= -1e-12 && root <= 1.0 + 1e-12) {
            est.point = std::clamp(root, 0.0, 1.0) + 0.0;
        } else {
            est.point = std::clamp(root, 0.0, 1.0) + 0.0;
            est.clipped = true;
        }
        return est;
    }

    const double disc = B * B - 4.0 * A * C;
    if (disc < 0.0) {
        // no real root: boundary with the smaller moment-equation residual
        const double at0 = std::fabs(expected_two_round_t(table, 0.0) - static_cast<double>(t_obs));
        const double at1 = std::fabs(expected_two_round_t(table, 1.0) - static_cast<double>(t_obs));
        est.point = at0 <= at1 ? 0.0 : 1.0;
        est.clipped = true;
        return est;
    }

    const double sq = std::sqrt(disc);
    double r1;
    double r2;
    if (B >= 0.0) {
        const double q = -0.5 * (B + sq);
        r1 = q / A;
        r2 = (q != 0.0) ? C / q : 0.0;
    } else {
        const double q = -0.5 * (B - sq);
        r1 = (q != 0.0) ? C / q : 0.0;
        r2 = q / A;
    }
    if (r1 > r2) std::swap(r1, r2);

    const auto admissible = [](double r) { return r >= -1e-12 && r <= 1.0 + 1e-12; };
    const bool ok1 = admissible(r1);
    const bool ok2 = admissible(r2);

    if (ok1 && ok2 && std::fabs(r1 - r2) > 1e-12) {
        // tie-break: the root nearer the first-round moment estimate
        double anchor = 0.5;
        const double denom = static_cast<double>(table.n01 - table.n10);
        if (w1 && denom != 0.0) {
            anchor = (static_cast<double>(*w1) -
                      static_cast<double>(table.n10 + table.n11)) / denom;
        }
        const bool pick_first = std::fabs(r1 - anchor) <= std::fabs(r2 - anchor);
        est.point = std::clamp(pick_first ? r1 : r2, 0.0, 1.0) + 0.0;
        est.double_root = true;
        est.other_root = std::clamp(pick_first ? r2 : r1, 0.0, 1.0) + 0.0;
    } else if (ok1 || ok2) {
        est.point = std::clamp(ok1 ? r1 : r2, 0.0, 1.0) + 0.0;
    } else {
        const double nearest = std::fabs(r1) < std::fabs(r2 - 1.0) ? r1 : r2;
        est.point = std::clamp(nearest, 0.0, 1.0) + 0.0;
        est.clipped = true;
    }
    return est;
}

namespace {

long long bernoulli_count(Rng& rng, long long n, double p) {
    if (p <= 0.0 || n <= 0) return 0;
    if (p >= 1.0) return n;
    long long k = 0;
    for (long long i = 0; i < n; ++i) k += rng.bernoulli(p) ? 1 : 0;
    return k;
}

}  // namespace

double estimate_pi_se(const MismatchTable& table, double pi_hat, int trials, uint64_t seed) {
    require(trials >= 2, "estimate_pi_se: trials must be >= 2");
    require(pi_hat >= 0.0 && pi_hat <= 1.0, "estimate_pi_se: pi_hat must be in [0,1]");

    double sum = 0.0;
    double sumsq = 0.0;
    long long used = 0;
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_stream(seed, static_cast<uint64_t>(t)));
        const long long x01 = bernoulli_count(rng, table.n01, pi_hat);
        const long long x10 = bernoulli_count(rng, table.n10, 1.0 - pi_hat);
        const long long w1 = x01 + x10 + table.n11;
        const long long w2 = bernoulli_count(rng, x01, pi_hat) +
                             bernoulli_count(rng, x10, 1.0 - pi_hat) + table.n11;
        const auto rep = estimate_pi_known(table, w1 + w2, w1);
        if (!rep.point || rep.unidentifiable) continue;
        sum += *rep.point;
        sumsq += *rep.point * *rep.point;
        ++used;
    }
    if (used < 2) return 0.0;
    const double mean = sum / static_cast<double>(used);
    const double var = std::max(0.0, (sumsq - static_cast<double>(used) * mean * mean) /
                                         static_cast<double>(used - 1));
    return std::sqrt(var);
}

PiEstimate pi_interval_unknown(long long w1, long long N, double pR, double pS_min,
                               double pS_max) {
    require(N >= 1, "pi_interval_unknown: N must be >= 1");
    require(w1 >= 0 && w1 <= N, "pi_interval_unknown: W1 must be in [0, N]");
    require(pR >= 0.0 && pS_max <= 1.0 && pS_min <= pS_max,
            "pi_interval_unknown: need 0 <= pR, pS_min <= pS_max <= 1");
    if (!(pR < pS_min)) {
        throw std::invalid_argument(
            "pi_interval_unknown: candidate pool indistinguishable from reference "
            "(pS_min <= pR)");
    }

    PiEstimate est;
    const double rate = static_cast<double>(w1) / static_cast<double>(N) - pR;
    double lo = rate / (pS_max - pR);
    double hi = rate / (pS_min - pR);
    if (lo > hi) std::swap(lo, hi);  // negative numerator flips the order
    const double clipped_lo = std::clamp(lo, 0.0, 1.0) + 0.0;
    const double clipped_hi = std::clamp(hi, 0.0, 1.0) + 0.0;
    est.clipped = clipped_lo != lo || clipped_hi != hi;
    est.interval_lo = clipped_lo;
    est.interval_hi = clipped_hi;
    return est;
}

}  // namespace kbf::stats
