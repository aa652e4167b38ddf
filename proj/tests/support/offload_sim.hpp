#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

namespace spotfaas::testing {

// Event-by-event schedule: the local thread runs its share back to back;
// remote task j leaves no earlier than j * pacing, takes the worker that
// frees up first and holds it for t_inv + L.
struct Schedule {
  double local_done = 0;
  double remote_done = 0;
  double wait() const { return std::max(0.0, remote_done - local_done); }
  double makespan() const { return std::max(local_done, remote_done); }
};

inline Schedule simulate(std::uint64_t n_local, std::uint64_t n_remote, std::uint32_t workers, double t_local,
                         double t_inv, double L, double pacing) {
  Schedule s;
  for (std::uint64_t i = 0; i < n_local; ++i) s.local_done += t_local;
  std::priority_queue<double, std::vector<double>, std::greater<>> free_at;
  for (std::uint32_t k = 0; k < workers; ++k) free_at.push(0.0);
  for (std::uint64_t j = 0; j < n_remote; ++j) {
    double w = free_at.top();
    free_at.pop();
    double start = std::max(w, static_cast<double>(j) * pacing);
    double end = start + t_inv + L;
    free_at.push(end);
    s.remote_done = std::max(s.remote_done, end);
  }
  return s;
}

}  // namespace spotfaas::testing
