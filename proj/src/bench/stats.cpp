#include "spotfaas/bench/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spotfaas/common/error.hpp"

namespace spotfaas::bench {

double binomial_half_cdf(std::size_t n, std::size_t k) {
  if (k >= n) return 1.0;
  const double nd = static_cast<double>(n);
  const double log_half_n = -nd * std::log(2.0);
  double sum = 0;
  for (std::size_t i = 0; i <= k; ++i) {
    double di = static_cast<double>(i);
    sum += std::exp(std::lgamma(nd + 1) - std::lgamma(di + 1) - std::lgamma(nd - di + 1) + log_half_n);
  }
  return std::min(sum, 1.0);
}

std::pair<std::size_t, std::size_t> ci_median(std::span<const double> sorted, double level) {
  if (sorted.empty()) fail(Errc::insufficient_samples, "no samples");
  if (!(level > 0 && level < 1)) fail(Errc::invalid_argument, "level must be in (0, 1)");
  if (!std::is_sorted(sorted.begin(), sorted.end())) fail(Errc::invalid_argument, "samples are not sorted");
  const std::size_t n = sorted.size();
  const double tail = (1 - level) / 2;
  // largest k with P(K <= k) <= tail; the interval is [x_k, x_{n-1-k}]
  const double nd = static_cast<double>(n);
  const double log_half_n = -nd * std::log(2.0);
  double cdf = 0;
  std::size_t k = 0;
  bool found = false;
  for (std::size_t i = 0; i < n / 2; ++i) {
    double di = static_cast<double>(i);
    cdf += std::exp(std::lgamma(nd + 1) - std::lgamma(di + 1) - std::lgamma(nd - di + 1) + log_half_n);
    if (cdf > tail) break;
    k = i;
    found = true;
  }
  if (!found) return {0, n - 1};
  return {k, n - 1 - k};
}

Stats summarize(std::vector<double> samples, double level) {
  if (samples.empty()) fail(Errc::insufficient_samples, "no samples");
  std::sort(samples.begin(), samples.end());
  Stats s;
  s.n = samples.size();
  auto mid = s.n / 2;
  s.median = s.n % 2 == 1 ? samples[mid] : (samples[mid - 1] + samples[mid]) / 2;
  s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(s.n);
  s.min = samples.front();
  s.max = samples.back();
  auto p99 = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(s.n))) - 1;
  s.p99 = samples[std::min(p99, s.n - 1)];
  auto [lo, hi] = ci_median(samples, level);
  s.ci_low = samples[lo];
  s.ci_high = samples[hi];
  s.degenerate = 1 - 2 * binomial_half_cdf(s.n, lo) < level;
  return s;
}

}  // namespace spotfaas::bench
