#include "tsxplain/stats.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace tsx {

namespace {

std::vector<double> paired_diffs(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("paired test: length mismatch");
  if (a.empty()) throw std::invalid_argument("paired test: empty input");
  std::vector<double> d;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  return d;
}

/// Average ranks of |d|, ties shared.
std::vector<double> abs_ranks(const std::vector<double>& d) {
  const size_t n = d.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t x, size_t y) {
    return std::abs(d[x]) < std::abs(d[y]);
  });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b) {
  const std::vector<double> d = paired_diffs(a, b);
  const int n = static_cast<int>(d.size());
  WilcoxonResult r{0.0, 1.0, n, false};
  if (n == 0) return r;  // no evidence either way
  const std::vector<double> ranks = abs_ranks(d);
  double w_plus = 0.0, total = 0.0;
  for (int i = 0; i < n; ++i) {
    total += ranks[static_cast<size_t>(i)];
    if (d[static_cast<size_t>(i)] > 0) w_plus += ranks[static_cast<size_t>(i)];
  }
  const double w_minus = total - w_plus;
  r.statistic = std::min(w_plus, w_minus);

  if (n < 20) {
    // exact permutation distribution over all sign assignments
    r.exact = true;
    const std::uint64_t count = 1ull << n;
    const double lo_cut = r.statistic + 1e-12;
    const double hi_cut = total - r.statistic - 1e-12;
    std::uint64_t extreme = 0;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      double w = 0.0;
      for (int i = 0; i < n; ++i)
        if (mask & (1ull << i)) w += ranks[static_cast<size_t>(i)];
      if (w <= lo_cut || w >= hi_cut) ++extreme;
    }
    r.p_value = static_cast<double>(extreme) / static_cast<double>(count);
  } else {
    const double mean = n * (n + 1) / 4.0;
    double tie_term = 0.0;
    std::vector<double> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    size_t i = 0;
    while (i < sorted.size()) {
      size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += (t * t * t - t);
      i = j + 1;
    }
    const double var = n * (n + 1) * (2.0 * n + 1) / 24.0 - tie_term / 48.0;
    const double z = (r.statistic - mean + 0.5) / std::sqrt(var);
    r.p_value = std::min(1.0, 2.0 * normal_sf(-z >= 0 ? -z : z));
  }
  r.p_value = std::min(1.0, r.p_value);
  return r;
}

double binomial_tail_geq(int k, int n) {
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  double p = 0.0;
  for (int i = k; i <= n; ++i)
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                  std::lgamma(n - i + 1.0) - n * std::log(2.0));
  return std::min(1.0, p);
}

SignTestResult sign_test(const std::vector<double>& a,
                         const std::vector<double>& b) {
  const std::vector<double> d = paired_diffs(a, b);
  SignTestResult r{0, static_cast<int>(d.size()), 1.0};
  for (double v : d)
    if (v > 0) ++r.n_positive;
  if (r.n_total == 0) return r;
  const double upper = binomial_tail_geq(r.n_positive, r.n_total);
  const double lower = 1.0 - binomial_tail_geq(r.n_positive + 1, r.n_total);
  r.p_value = std::min(1.0, 2.0 * std::min(upper, lower));
  return r;
}

BootstrapCI bootstrap_mean_ci(const std::vector<double>& values,
                              std::uint64_t seed, int resamples,
                              double level) {
  if (values.empty()) throw std::invalid_argument("bootstrap: empty input");
  if (resamples <= 0) throw std::invalid_argument("bootstrap: no resamples");
  const size_t n = values.size();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);

  std::vector<double> means(static_cast<size_t>(resamples));
  for (int r = 0; r < resamples; ++r) {
    // independent per-resample stream so results don't depend on ordering
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(r) * 0x9e3779b97f4a7c15ull);
    std::uniform_int_distribution<size_t> pick(0, n - 1);
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += values[pick(rng)];
    means[static_cast<size_t>(r)] = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - level) / 2.0;
  auto pct = [&](double q) {
    const double pos = q * (resamples - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(means.size() - 1, lo + 1);
    const double frac = pos - std::floor(pos);
    return means[lo] * (1.0 - frac) + means[hi] * frac;
  };
  return {mean, pct(alpha), pct(1.0 - alpha)};
}

}  // namespace tsx
