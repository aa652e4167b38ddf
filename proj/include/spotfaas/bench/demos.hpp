#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spotfaas/bench/records.hpp"
#include "spotfaas/client/invoker.hpp"

namespace spotfaas::bench {

enum class Demo : std::uint8_t { blackscholes, mmm, jacobi };
const char* to_string(Demo d) noexcept;
Demo parse_demo(std::string_view s);

struct OffloadDemoOptions {
  Demo demo = Demo::blackscholes;
  double split = 0.5;             // fraction of the work sent to functions
  std::uint32_t local_threads = 1;
  std::uint32_t remote_workers = 0;  // 0: as many as local threads
  std::size_t problem_size = 0;      // options / matrix order; 0 picks a default
  std::size_t max_iterations = 1000;  // jacobi
  double tolerance = 1e-10;           // jacobi stopping residual
  std::uint64_t seed = 1;
};

struct OffloadDemoResult {
  Demo demo = Demo::blackscholes;
  double local_seconds = 0;
  double hybrid_seconds = 0;
  bool correct = false;
  std::string detail;
  std::size_t remote_tasks = 0;
  // jacobi
  std::size_t iterations = 0;
  double residual_local = 0, residual_hybrid = 0;
  std::uint64_t first_request_bytes = 0;
  // payload and on-wire request sizes of every later invocation
  std::vector<std::uint64_t> later_request_bytes;
  std::vector<std::uint64_t> later_wire_bytes;

  Record record() const;
};

// Runs the local-only reference and the hybrid split on an allocated
// invoker (demo registry or code object), then compares outputs.
OffloadDemoResult run_offload_demo(client::Invoker& inv, const protocol::CodeSubmission& code,
                                   const OffloadDemoOptions& options);

// Naive triple loop, the reference product for mmm.
std::vector<double> naive_matmul(std::size_t n, const std::vector<double>& a, const std::vector<double>& b);

// Infinity norm of A x - b.
double jacobi_residual(std::size_t n, const std::vector<double>& a, const std::vector<double>& b,
                       const std::vector<double>& x);

}  // namespace spotfaas::bench
