#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace spotfaas::offload {

// All times in seconds, bandwidth in bytes per second.
struct NetworkModel {
  enum class Source : std::uint8_t { measured, configured };
  double L = 0;
  double B = 0;
  double o_send = 0;
  double o_recv = 0;
  Source source = Source::configured;
};

inline constexpr std::size_t kMinSamplesPerSize = 30;

// rtt_by_size: round-trip samples per message size. throughput: optional
// bytes/s samples of a streaming run; without them B is taken from the
// largest size. Throws insufficient_samples below 30 samples per size.
NetworkModel fit_network_model(const std::map<std::uint64_t, std::vector<double>>& rtt_by_size,
                               const std::vector<double>& throughput = {});

double median(std::vector<double> samples);

// Remote execution time from calibration runs: the median of at least 30.
double estimate_t_inv(const std::vector<double>& calibration);

// Smallest N with N * t_local >= t_inv + L.
std::uint64_t n_local_threshold(double t_local, double t_inv, double L);

// Invocations per second that saturate B; 0 when one invocation alone
// exceeds a second of bandwidth.
std::uint64_t n_remote_saturation(double B, std::uint64_t data_per_invocation);

struct SplitProblem {
  std::uint64_t total = 0;
  double t_local = 0;
  double t_inv = 0;
  double L = 0;
  double B = 0;
  std::uint64_t data_per_invocation = 0;  // 0: transfer is free
  std::uint32_t remote_workers = 0;
  std::optional<std::uint64_t> width{};  // cap on concurrently offloadable tasks
};

struct OffloadPlan {
  std::uint64_t n_local = 0;
  std::uint64_t n_remote = 0;
  double predicted_makespan = 0;
  double local_time = 0;
  double remote_time = 0;
};

// Completion time of n remote tasks on k workers: each occupies a worker
// for t_inv + L and the link admits one task every data/B seconds.
double remote_pipeline_time(std::uint64_t n, std::uint32_t k, double t_inv, double L, double pacing);

// Largest offload whose results are all back before the local share is
// done, so the caller never waits.
OffloadPlan plan_split(const SplitProblem& p);

std::string to_text(const NetworkModel& m);
std::string to_text(const OffloadPlan& p);

}  // namespace spotfaas::offload
