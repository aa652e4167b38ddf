#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "spotfaas/common/error.hpp"
#include "spotfaas/offload/model.hpp"

namespace {

using namespace spotfaas;

// Lines of "size seconds"; '#' starts a comment.
std::map<std::uint64_t, std::vector<double>> read_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::not_found, "cannot open " + path);
  std::map<std::uint64_t, std::vector<double>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::uint64_t size = 0;
    double seconds = 0;
    if (!(ss >> size)) continue;
    if (!(ss >> seconds) || seconds < 0)
      fail(Errc::invalid_argument, path + ":" + std::to_string(lineno) + ": expected \"size seconds\"");
    out[size].push_back(seconds);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"offload planning from a fitted network model"};
  app.require_subcommand(1);
  auto* plan = app.add_subcommand("plan", "split a task batch between local threads and functions");

  double t_local_ms = 0, t_inv_ms = 0;
  std::string samples;
  std::uint64_t data_bytes = 0, tasks = 0;
  std::uint32_t workers = 0;
  plan->add_option("--t-local", t_local_ms, "local time per task, ms")->required()->check(CLI::PositiveNumber);
  plan->add_option("--t-inv", t_inv_ms, "remote execution time per task, ms")->required()->check(CLI::NonNegativeNumber);
  plan->add_option("--samples", samples, "round-trip samples, one \"size seconds\" pair per line")
      ->required()
      ->check(CLI::ExistingFile);
  plan->add_option("--data-bytes", data_bytes, "bytes moved per invocation")->capture_default_str();
  plan->add_option("--workers", workers, "remote workers")->required();
  plan->add_option("--tasks", tasks, "tasks in the batch")->required()->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    auto model = offload::fit_network_model(read_samples(samples));
    offload::SplitProblem p;
    p.total = tasks;
    p.t_local = t_local_ms / 1e3;
    p.t_inv = t_inv_ms / 1e3;
    p.L = model.L;
    p.B = model.B;
    p.data_per_invocation = data_bytes;
    p.remote_workers = workers;
    auto result = offload::plan_split(p);
    std::cout << offload::to_text(model);
    std::cout << "n_local_threshold=" << offload::n_local_threshold(p.t_local, p.t_inv, p.L) << "\n";
    if (data_bytes > 0) std::cout << "n_remote_saturation=" << offload::n_remote_saturation(p.B, data_bytes) << "\n";
    std::cout << offload::to_text(result);
  } catch (const Error& e) {
    std::cerr << "offload: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
