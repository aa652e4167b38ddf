#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace spotfaas::bench {

// Order-statistic confidence interval of the median: 0-based indices into
// the sorted samples, from the binomial(n, 1/2) distribution. Small n
// saturates to (0, n-1). Throws invalid_argument on unsorted input.
std::pair<std::size_t, std::size_t> ci_median(std::span<const double> sorted, double level = 0.99);

// P(K <= k) for K ~ binomial(n, 1/2).
double binomial_half_cdf(std::size_t n, std::size_t k);

struct Stats {
  std::size_t n = 0;
  double median = 0, mean = 0, p99 = 0, min = 0, max = 0;
  double ci_low = 0, ci_high = 0;
  // interval did not reach the requested level (too few samples)
  bool degenerate = false;
};

Stats summarize(std::vector<double> samples, double level = 0.99);

}  // namespace spotfaas::bench
