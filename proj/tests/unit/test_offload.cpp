#include <cmath>
#include <random>

#include "doctest.h"
#include "offload_sim.hpp"
#include "spotfaas/common/error.hpp"
#include "spotfaas/offload/model.hpp"

using namespace spotfaas;
using namespace spotfaas::offload;
using spotfaas::testing::simulate;

namespace {

Errc error_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc{};
}

constexpr double kEps = 1e-9;

}  // namespace

TEST_CASE("n_local threshold") {
  CHECK(n_local_threshold(5, 12, 3) == 3);
  CHECK(n_local_threshold(20, 12, 3) == 1);
  CHECK(n_local_threshold(15, 12, 3) == 1);
  CHECK(n_local_threshold(1, 1, 1) == 2);
  CHECK(n_local_threshold(0.005, 0.012, 0.003) == 3);
  CHECK(error_of([] { n_local_threshold(0, 1, 1); }) == Errc::invalid_argument);
  CHECK(error_of([] { n_local_threshold(1, -1, 1); }) == Errc::invalid_argument);
  CHECK(error_of([] { n_local_threshold(1, 1, 0); }) == Errc::invalid_argument);
}

TEST_CASE("n_local threshold matches exhaustive search over discrete schedules") {
  // Oracle: over every split of `total` tasks with at least one remote task
  // and a single remote worker, the fewest local tasks whose schedule never
  // waits.
  int checked = 0;
  for (int tl = 1; tl <= 8; ++tl) {
    for (int ti = 1; ti <= 12; ++ti) {
      for (int l = 1; l <= 6; ++l) {
        auto n = n_local_threshold(tl, ti, l);
        for (std::uint64_t total = 2; total <= 50; ++total) {
          std::optional<std::uint64_t> best;
          for (std::uint64_t nl = 0; nl < total; ++nl) {
            for (std::uint64_t nr = 1; nl + nr <= total; ++nr) {
              if (simulate(nl, nr, 1, tl, ti, l, 0).wait() == 0) {
                best = best ? std::min(*best, nl) : nl;
                break;
              }
            }
            if (best) break;
          }
          if (best) {
            REQUIRE(*best == n);
          } else {
            REQUIRE(n >= total);
          }
          ++checked;
        }
      }
    }
  }
  CHECK(checked == 8 * 12 * 6 * 49);
}

TEST_CASE("n_local threshold is monotone") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(1e-6, 1e-2);
  for (int i = 0; i < 20000; ++i) {
    double tl = u(rng), ti = u(rng), l = u(rng);
    auto base = n_local_threshold(tl, ti, l);
    double f = 1 + u(rng) * 50;
    REQUIRE(n_local_threshold(tl * f, ti, l) <= base);
    REQUIRE(n_local_threshold(tl, ti * f, l) >= base);
    REQUIRE(n_local_threshold(tl, ti, l * f) >= base);
    REQUIRE(static_cast<double>(base) * tl >= ti + l);
    if (base > 1) REQUIRE(static_cast<double>(base - 1) * tl < ti + l);
  }
}

TEST_CASE("saturation rate") {
  const double mib = 1024.0 * 1024.0;
  CHECK(n_remote_saturation(11686.4 * mib, 1 << 20) == 11686);
  CHECK(n_remote_saturation(1000, 1000) == 1);
  CHECK(n_remote_saturation(1000, 1001) == 0);
  CHECK(error_of([] { n_remote_saturation(1000, 0); }) == Errc::invalid_argument);
  CHECK(error_of([] { n_remote_saturation(0, 10); }) == Errc::invalid_argument);
}

TEST_CASE("network model fit") {
  const double L0 = 4e-6, B0 = 10e9;
  SUBCASE("recovers a linear model") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0, 0.002);
    std::map<std::uint64_t, std::vector<double>> samples;
    for (std::uint64_t size : {1ull, 64ull, 1024ull, 65536ull, 1ull << 20, 1ull << 26}) {
      for (int i = 0; i < 31; ++i) samples[size].push_back((L0 + double(size) / B0) * (1 + noise(rng)));
    }
    auto m = fit_network_model(samples);
    CHECK(m.source == NetworkModel::Source::measured);
    CHECK(std::abs(m.L - L0) / L0 < 0.05);
    CHECK(std::abs(m.B - B0) / B0 < 0.05);

    std::vector<double> tput;
    for (int i = 0; i < 30; ++i) tput.push_back(B0 * (1 + noise(rng)));
    CHECK(std::abs(fit_network_model(samples, tput).B - B0) / B0 < 0.01);
  }
  SUBCASE("constant samples have no overhead") {
    std::map<std::uint64_t, std::vector<double>> samples;
    for (std::uint64_t size : {8ull, 512ull, 4096ull}) samples[size] = std::vector<double>(40, 1e-5);
    auto m = fit_network_model(samples);
    CHECK(m.o_send == 0);
    CHECK(m.o_recv == 0);
    CHECK(m.L == doctest::Approx(1e-5));
  }
  SUBCASE("too few samples") {
    CHECK(error_of([] { fit_network_model({{8, {1e-5}}}); }) == Errc::insufficient_samples);
    CHECK(error_of([] { fit_network_model({}); }) == Errc::insufficient_samples);
    std::map<std::uint64_t, std::vector<double>> ok{{8, std::vector<double>(30, 1e-5)}};
    CHECK(error_of([&] { fit_network_model(ok, {1e9}); }) == Errc::insufficient_samples);
  }
}

TEST_CASE("calibrated remote time is a median") {
  std::vector<double> runs(31);
  for (int i = 0; i < 31; ++i) runs[i] = i;
  CHECK(estimate_t_inv(runs) == 15);
  runs.resize(29);
  CHECK(error_of([&] { estimate_t_inv(runs); }) == Errc::insufficient_samples);
  CHECK(median({4, 1, 3, 2}) == 2.5);
}

TEST_CASE("plan_split examples") {
  SUBCASE("many tasks with ample bandwidth") {
    auto p = plan_split({.total = 100, .t_local = 5, .t_inv = 12, .L = 3, .B = 1e12, .data_per_invocation = 1,
                         .remote_workers = 8});
    CHECK(p.n_local + p.n_remote == 100);
    CHECK(p.n_local >= 3);
    CHECK(p.n_remote > 0);
    CHECK(p.predicted_makespan < 100 * 5);
    // ceil(72/8) round trips of 15 fit in 28 local tasks of 5, 27 do not
    CHECK(p.n_local == 28);
    CHECK(p.predicted_makespan == 140);
  }
  SUBCASE("no more tasks than the threshold") {
    for (std::uint64_t total = 1; total <= 3; ++total) {
      auto p = plan_split({.total = total, .t_local = 5, .t_inv = 12, .L = 3, .remote_workers = 8});
      CHECK(p.n_local == total);
      CHECK(p.n_remote == 0);
    }
  }
  SUBCASE("no remote workers") {
    auto p = plan_split({.total = 40, .t_local = 5, .t_inv = 12, .L = 3, .remote_workers = 0});
    CHECK(p.n_local == 40);
    CHECK(p.predicted_makespan == 200);
  }
  SUBCASE("bandwidth bound") {
    // one invocation needs more than a second of link time
    auto p = plan_split({.total = 40, .t_local = 5, .t_inv = 1, .L = 1, .B = 10, .data_per_invocation = 11,
                         .remote_workers = 8});
    CHECK(p.n_remote == 0);
  }
  SUBCASE("width cap") {
    auto p = plan_split({.total = 100, .t_local = 5, .t_inv = 12, .L = 3, .remote_workers = 8, .width = 10});
    CHECK(p.n_remote == 10);
  }
  SUBCASE("infeasible") {
    CHECK(error_of([] { plan_split({.total = 0, .t_local = 1, .t_inv = 1, .L = 1}); }) == Errc::invalid_argument);
  }
}

TEST_CASE("plan_split is the best no-wait split under exhaustive search") {
  // Oracle: enumerate every (n_local, n_remote) split, simulate it, keep the
  // admissible splits that never wait and take the shortest.
  struct Bw {
    double B;
    std::uint64_t data;
  };
  const std::vector<Bw> links = {{0, 0}, {4, 1}, {2, 1}, {1, 1}, {1, 2}};
  const std::vector<std::uint32_t> pools = {0, 1, 2, 3, 8};
  const std::vector<std::optional<std::uint64_t>> widths = {std::nullopt, 4};
  std::uint64_t instances = 0, offloading = 0;
  for (int tl = 1; tl <= 5; ++tl) {
    for (int ti : {1, 2, 4, 7, 12}) {
      for (int l : {1, 3, 5}) {
        for (auto bw : links) {
          for (auto k : pools) {
            for (auto width : widths) {
              for (std::uint64_t total = 1; total <= 50; ++total) {
                SplitProblem prob{total, double(tl), double(ti), double(l), bw.B, bw.data, k, width};
                auto plan = plan_split(prob);
                REQUIRE(plan.n_local + plan.n_remote == total);
                double pacing = bw.data ? double(bw.data) / bw.B : 0;
                auto rate = bw.data ? std::floor(bw.B / double(bw.data)) : INFINITY;
                auto cap = width.value_or(total);

                std::uint64_t best_local = total;
                for (std::uint64_t nl = 0; nl < total; ++nl) {
                  auto nr = total - nl;
                  if (k == 0 || nr > cap || double(nr) > std::floor(rate * nl * tl)) continue;
                  if (simulate(nl, nr, k, tl, ti, l, pacing).wait() <= kEps) {
                    best_local = nl;
                    break;
                  }
                }
                auto sim = simulate(plan.n_local, plan.n_remote, k, tl, ti, l, pacing);
                REQUIRE(sim.wait() <= kEps);
                REQUIRE(plan.n_local == best_local);
                REQUIRE(std::abs(plan.predicted_makespan - sim.makespan()) <= kEps);
                REQUIRE(plan.predicted_makespan <= total * tl + kEps);
                if (plan.n_remote > 0) {
                  REQUIRE(plan.n_local >= n_local_threshold(tl, ti, l));
                  ++offloading;
                }
                ++instances;
              }
            }
          }
        }
      }
    }
  }
  CHECK(instances == 5 * 5 * 3 * 5 * 5 * 2 * 50);
  CHECK(offloading > instances / 4);
}

TEST_CASE("pipeline time matches the simulator") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 5000; ++i) {
    auto n = rng() % 200;
    auto k = static_cast<std::uint32_t>(1 + rng() % 16);
    double ti = 1 + rng() % 20, l = 1 + rng() % 5, pacing = double(rng() % 8) / 4;
    auto sim = simulate(0, n, k, 1, ti, l, pacing);
    REQUIRE(remote_pipeline_time(n, k, ti, l, pacing) == doctest::Approx(sim.remote_done));
  }
}

TEST_CASE("text output") {
  auto t = to_text(OffloadPlan{3, 7, 1.5, 1.5, 1.25});
  CHECK(t.find("n_local=3\n") != std::string::npos);
  CHECK(t.find("n_remote=7\n") != std::string::npos);
  CHECK(t.find("predicted_makespan=1.5\n") != std::string::npos);
}
