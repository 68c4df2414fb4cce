#pragma once

// Independent statistical oracles for test use only. These deliberately
// avoid the incomplete-beta route used by the library: terms come from
// lgammal in 80-bit arithmetic and bounds from bisection on the exact
// binomial CDF, so agreement is evidence rather than tautology.

#include <cmath>
#include <cstdint>

namespace kbf_test {

inline long double binom_pmf_ld(long long k, long long n, long double p) {
    if (k < 0 || k > n) return 0.0L;
    if (p <= 0.0L) return k == 0 ? 1.0L : 0.0L;
    if (p >= 1.0L) return k == n ? 1.0L : 0.0L;
    const long double lc = std::lgamma(static_cast<long double>(n) + 1.0L) -
                           std::lgamma(static_cast<long double>(k) + 1.0L) -
                           std::lgamma(static_cast<long double>(n - k) + 1.0L);
    return std::exp(lc + static_cast<long double>(k) * std::log(p) +
                    static_cast<long double>(n - k) * std::log1p(-p));
}

// P(X <= k), direct term-by-term summation.
inline long double binom_cdf_ld(long long k, long long n, long double p) {
    if (k < 0) return 0.0L;
    if (k >= n) return 1.0L;
    long double sum = 0.0L;
    for (long long i = 0; i <= k; ++i) sum += binom_pmf_ld(i, n, p);
    return sum > 1.0L ? 1.0L : sum;
}

// P(X >= k), direct term-by-term summation.
inline long double binom_tail_ld(long long k, long long n, long double p) {
    if (k <= 0) return 1.0L;
    if (k > n) return 0.0L;
    long double sum = 0.0L;
    for (long long i = n; i >= k; --i) sum += binom_pmf_ld(i, n, p);
    return sum > 1.0L ? 1.0L : sum;
}

// P(X <= k) by a multiplicative term recurrence in long double; same
// mathematical object as binom_cdf_ld, cheap enough for large grids. The
// summation is anchored at the largest term of the lower tail (the pmf
// mode, capped at k), which is >= 1/(n+1) and can never underflow, then
// extends outward in both directions.
inline long double binom_cdf_recurrence_ld(long long k, long long n, long double p) {
    if (k < 0) return 0.0L;
    if (k >= n) return 1.0L;
    if (p <= 0.0L) return 1.0L;
    if (p >= 1.0L) return 0.0L;
    const long long mode = std::min(
        k, static_cast<long long>(std::floor(static_cast<long double>(n + 1) * p)));
    const long double t_mode = binom_pmf_ld(mode, n, p);
    const long double up_ratio = p / (1.0L - p);
    long double sum = t_mode;
    long double term = t_mode;
    for (long long i = mode; i >= 1; --i) {
        term *= static_cast<long double>(i) / (up_ratio * static_cast<long double>(n - i + 1));
        sum += term;
        if (term < sum * 1e-30L) break;
    }
    term = t_mode;
    for (long long i = mode + 1; i <= k; ++i) {
        term *= up_ratio * static_cast<long double>(n - i + 1) / static_cast<long double>(i);
        sum += term;
        if (term < sum * 1e-30L) break;
    }
    return sum > 1.0L ? 1.0L : sum;
}

// Largest p with P(X <= k; n, p) >= 1 - gamma, by bisection on the exact
// CDF. The CDF is strictly decreasing in p, so the root is unique.
inline double cp_upper_bisect(long long k, long long n, double gamma, bool fast_cdf = false) {
    if (k >= n) return 1.0;
    const long double target = 1.0L - static_cast<long double>(gamma);
    long double lo = 0.0L;
    long double hi = 1.0L;
    for (int it = 0; it < 200; ++it) {
        const long double mid = 0.5L * (lo + hi);
        const long double cdf =
            fast_cdf ? binom_cdf_recurrence_ld(k, n, mid) : binom_cdf_ld(k, n, mid);
        if (cdf >= target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return static_cast<double>(0.5L * (lo + hi));
}

// Exact two-sided McNemar sign test: 2 * P(X >= max(b,c); b+c, 1/2), capped.
inline double mcnemar_oracle(long long b, long long c) {
    const long long n = b + c;
    if (n == 0) return 1.0;
    const long double tail = binom_tail_ld(b > c ? b : c, n, 0.5L);
    const long double two_sided = 2.0L * tail;
    return static_cast<double>(two_sided > 1.0L ? 1.0L : two_sided);
}

}  // namespace kbf_test
