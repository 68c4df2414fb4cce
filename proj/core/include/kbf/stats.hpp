#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace kbf::stats {

struct CalibrationConfig {
    double gamma = 0.99;  // self-calibration confidence level
    double alpha = 0.05;  // audit significance level
};

// Joint per-probe counts. First bit: fresh-reference mismatch against the
// stored consensus; second bit: substitute mismatch.
struct MismatchTable {
    long long n00 = 0;
    long long n01 = 0;
    long long n10 = 0;
    long long n11 = 0;

    long long total() const { return n00 + n01 + n10 + n11; }
    double reference_rate() const;   // pR = (n10+n11)/N
    double substitute_rate() const;  // pS = (n01+n11)/N
};

// Routed-fraction estimate. Point and interval come from different
// assumptions (known substitute vs candidate pool) and are reported
// independently.
struct PiEstimate {
    std::optional<double> point;
    std::optional<double> interval_lo;
    std::optional<double> interval_hi;
    std::optional<double> se;
    bool double_root = false;     // both quadratic roots were admissible
    double other_root = 0.0;      // the rejected root when double_root
    bool clipped = false;         // point or interval hit a [0,1] boundary
    bool unidentifiable = false;  // degenerate quadratic, no estimate
};

// Regularized incomplete beta I_x(a,b), continued-fraction evaluation.
// Exposed because the CP bound and the binomial tail both reduce to it.
double incomplete_beta(double a, double b, double x);

// One-sided Clopper-Pearson upper confidence bound on a binomial rate:
// the inverse regularized incomplete beta at (gamma; k+1, n-k), solved by
// bisection. Returns 1.0 for k == n.
double cp_upper(long long k, long long n, double gamma);

// P(X >= k) for X ~ Binomial(N, p0). Survival-function term recurrence with
// a log-space starting term; relative error <= 1e-12 against direct
// high-precision summation.
double binom_tail_pvalue(long long k, long long N, double p0);

// log P(X >= k); usable when the tail underflows double (N large, k deep).
double binom_tail_log_pvalue(long long k, long long N, double p0);

// Exact null distribution of the two-round statistic T = W1 + W2 with
// W1 ~ Binomial(N, p0) and W2 | W1 = w ~ Binomial(w, p0). The PMF over
// t in {0..2N} is computed once by convolving the conditional laws.
class TwoRoundNull {
  public:
    TwoRoundNull(long long N, double p0);

    double pvalue(long long t_obs) const;      // P(T >= t_obs)
    long long cutoff(double alpha) const;      // smallest t with P(T >= t) < alpha
    double pmf(long long t) const;
    double mean() const;                       // equals N*p0*(1+p0)
    long long upper() const { return 2 * n_; }

  private:
    long long n_;
    std::vector<double> pmf_;       // index t
    std::vector<double> survival_;  // survival_[t] = P(T >= t)
};

double two_round_null_pvalue(long long t_obs, long long N, double p0);

// Exact two-sided McNemar p-value on discordant counts:
// min(1, 2*P(X >= max(b,c))) with X ~ Binomial(b+c, 1/2); 1.0 when b+c == 0.
double mcnemar_exact(long long b, long long c);

// Expected two-round statistic under fixed-probability routing pi for a
// deterministic per-probe type table.
double expected_two_round_t(const MismatchTable& table, double pi);

// Method-of-moments routed fraction when the substitute is known: solves
// (n01+n10) pi^2 + (n01-3 n10) pi + (2 n10 + 2 n11 - T_obs) = 0 and returns
// the root in [0,1]. When both roots qualify the one closer to the
// first-round moment estimate (from w1, when given) wins and the other is
// reported in diagnostics. No admissible root -> nearest boundary, flagged
// as clipped. se is filled by estimate_pi_se.
PiEstimate estimate_pi_known(const MismatchTable& table, long long t_obs,
                             std::optional<long long> w1 = std::nullopt);

// Parametric Monte Carlo standard error for the point estimate: simulate T
// under the fitted (table, pi_hat) routing model, re-estimate, take the
// sample standard deviation over `trials` replicates.
double estimate_pi_se(const MismatchTable& table, double pi_hat, int trials,
                      uint64_t seed);

// Routing interval when the substitute is only known to lie in a candidate
// pool with discrepancy rates in [pS_min, pS_max]:
//   pi_min = clip((W1/N - pR) / (pS_max - pR))
//   pi_max = clip((W1/N - pR) / (pS_min - pR))
// Requires pR < pS_min (otherwise the pool is indistinguishable from the
// reference and the denominators lose sign).
PiEstimate pi_interval_unknown(long long w1, long long N, double pR,
                               double pS_min, double pS_max);

}  // namespace kbf::stats
