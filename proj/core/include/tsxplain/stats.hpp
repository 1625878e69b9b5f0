#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace tsx {

struct WilcoxonResult {
  double statistic;   // W = min(W+, W-)
  double p_value;     // two-sided
  int n;              // pairs with nonzero difference
  bool exact;         // exact permutation distribution used
};

/// Paired signed-rank test; zero differences are dropped, ties get average
/// ranks. Exact permutation distribution for n < 20, otherwise the normal
/// approximation with tie correction.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b);

struct SignTestResult {
  int n_positive;
  int n_total;        // nonzero differences
  double p_value;     // two-sided exact binomial
};

SignTestResult sign_test(const std::vector<double>& a,
                         const std::vector<double>& b);

/// One-sided binomial tail P(X >= k) for X ~ Bin(n, 0.5).
double binomial_tail_geq(int k, int n);

struct BootstrapCI {
  double mean;
  double lo;
  double hi;
};

/// Percentile bootstrap CI of the mean (default 1000 resamples, 95% level),
/// deterministic under seed.
BootstrapCI bootstrap_mean_ci(const std::vector<double>& values,
                              std::uint64_t seed, int resamples = 1000,
                              double level = 0.95);

}  // namespace tsx
