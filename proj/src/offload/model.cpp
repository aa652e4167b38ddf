#include "spotfaas/offload/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "spotfaas/common/error.hpp"

namespace spotfaas::offload {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0) || !std::isfinite(v)) fail(Errc::invalid_argument, fmt::format("{} must be positive, got {}", name, v));
}

}  // namespace

double median(std::vector<double> samples) {
  if (samples.empty()) fail(Errc::insufficient_samples, "median of no samples");
  auto mid = samples.begin() + static_cast<std::ptrdiff_t>(samples.size() / 2);
  std::nth_element(samples.begin(), mid, samples.end());
  if (samples.size() % 2 == 1) return *mid;
  auto lower = *std::max_element(samples.begin(), mid);
  return (lower + *mid) / 2;
}

double estimate_t_inv(const std::vector<double>& calibration) {
  if (calibration.size() < kMinSamplesPerSize)
    fail(Errc::insufficient_samples, fmt::format("need {} calibration runs, got {}", kMinSamplesPerSize, calibration.size()));
  return median(calibration);
}

NetworkModel fit_network_model(const std::map<std::uint64_t, std::vector<double>>& rtt_by_size,
                               const std::vector<double>& throughput) {
  if (rtt_by_size.empty()) fail(Errc::insufficient_samples, "no latency samples");
  for (const auto& [size, s] : rtt_by_size) {
    if (s.size() < kMinSamplesPerSize)
      fail(Errc::insufficient_samples, fmt::format("size {}: {} samples, need {}", size, s.size(), kMinSamplesPerSize));
  }
  if (!throughput.empty() && throughput.size() < kMinSamplesPerSize)
    fail(Errc::insufficient_samples, fmt::format("{} throughput samples, need {}", throughput.size(), kMinSamplesPerSize));

  std::vector<double> xs, ys;
  for (const auto& [size, s] : rtt_by_size) {
    xs.push_back(static_cast<double>(size));
    ys.push_back(median(s));
  }

  NetworkModel m;
  m.source = NetworkModel::Source::measured;
  m.L = ys.front();
  if (!throughput.empty()) {
    m.B = median(throughput);
  } else {
    m.B = xs.back() / ys.back();
  }
  require_positive(m.L, "L");
  require_positive(m.B, "B");

  if (xs.size() >= 2) {
    double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxx += (xs[i] - mx) * (xs[i] - mx);
      sxy += (xs[i] - mx) * (ys[i] - my);
    }
    double slope = sxx > 0 ? sxy / sxx : 0;
    double intercept = my - slope * mx;
    double ss = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double r = ys[i] - (intercept + slope * xs[i]);
      ss += r * r;
    }
    double rms = std::sqrt(ss / n);
    m.o_send = m.o_recv = rms / 2;
  }
  return m;
}

std::uint64_t n_local_threshold(double t_local, double t_inv, double L) {
  require_positive(t_local, "T_local");
  require_positive(t_inv, "T_inv");
  require_positive(L, "L");
  const double need = t_inv + L;
  auto n = static_cast<std::uint64_t>(std::max(1.0, std::ceil(need / t_local)));
  while (n > 1 && static_cast<double>(n - 1) * t_local >= need) --n;
  while (static_cast<double>(n) * t_local < need) ++n;
  return n;
}

std::uint64_t n_remote_saturation(double B, std::uint64_t data_per_invocation) {
  require_positive(B, "B");
  if (data_per_invocation == 0) fail(Errc::invalid_argument, "data per invocation must be positive");
  return static_cast<std::uint64_t>(std::floor(B / static_cast<double>(data_per_invocation)));
}

double remote_pipeline_time(std::uint64_t n, std::uint32_t k, double t_inv, double L, double pacing) {
  if (n == 0) return 0;
  if (k == 0) return std::numeric_limits<double>::infinity();
  const double c = t_inv + L;
  const auto j = n - 1;
  double start = std::max(static_cast<double>(j) * pacing,
                          static_cast<double>(j % k) * pacing + static_cast<double>(j / k) * c);
  return start + c;
}

OffloadPlan plan_split(const SplitProblem& p) {
  if (p.total < 1) fail(Errc::invalid_argument, "plan needs at least one task");
  require_positive(p.t_local, "T_local");
  require_positive(p.t_inv, "T_inv");
  require_positive(p.L, "L");
  double pacing = 0;
  std::optional<std::uint64_t> rate;
  if (p.data_per_invocation > 0) {
    rate = n_remote_saturation(p.B, p.data_per_invocation);
    pacing = static_cast<double>(p.data_per_invocation) / p.B;
  }
  const std::uint64_t cap = std::min(p.total, p.width.value_or(p.total));

  auto feasible = [&](std::uint64_t n_local) {
    auto n_remote = p.total - n_local;
    if (n_remote == 0) return true;
    if (n_remote > cap || p.remote_workers == 0) return false;
    double horizon = static_cast<double>(n_local) * p.t_local;
    if (rate && static_cast<double>(n_remote) > std::floor(static_cast<double>(*rate) * horizon)) return false;
    return remote_pipeline_time(n_remote, p.remote_workers, p.t_inv, p.L, pacing) <= horizon;
  };

  // feasibility only improves as more tasks stay local
  std::uint64_t lo = 0, hi = p.total;
  while (lo < hi) {
    auto mid = lo + (hi - lo) / 2;
    if (feasible(mid))
      hi = mid;
    else
      lo = mid + 1;
  }

  OffloadPlan plan;
  plan.n_local = lo;
  plan.n_remote = p.total - lo;
  plan.local_time = static_cast<double>(plan.n_local) * p.t_local;
  plan.remote_time = remote_pipeline_time(plan.n_remote, p.remote_workers, p.t_inv, p.L, pacing);
  plan.predicted_makespan = std::max(plan.local_time, plan.remote_time);
  return plan;
}

std::string to_text(const NetworkModel& m) {
  return fmt::format("L={:.9g}\nB={:.9g}\no_send={:.9g}\no_recv={:.9g}\nsource={}\n", m.L, m.B, m.o_send, m.o_recv,
                     m.source == NetworkModel::Source::measured ? "measured" : "configured");
}

std::string to_text(const OffloadPlan& p) {
  return fmt::format("n_local={}\nn_remote={}\npredicted_makespan={:.9g}\nlocal_time={:.9g}\nremote_time={:.9g}\n",
                     p.n_local, p.n_remote, p.predicted_makespan, p.local_time, p.remote_time);
}

}  // namespace spotfaas::offload
