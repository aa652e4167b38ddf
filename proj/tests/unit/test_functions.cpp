#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "doctest.h"
#include "spotfaas/common/error.hpp"
#include "spotfaas/functions/demo.hpp"
#include "spotfaas/functions/registry.hpp"

using namespace spotfaas;
using namespace spotfaas::functions;

namespace {

// Discounted expectation of the payoff under the lognormal terminal price,
// integrated over the standard normal with composite Simpson.
double price_by_quadrature(const OptionParams& o) {
  const int steps = 200000;
  const double lo = -12, hi = 12, h = (hi - lo) / steps;
  double drift = (o.rate - 0.5 * o.volatility * o.volatility) * o.maturity;
  double vol = o.volatility * std::sqrt(o.maturity);
  auto f = [&](double z) {
    double st = o.spot * std::exp(drift + vol * z);
    double payoff = o.put ? std::max(o.strike - st, 0.0) : std::max(st - o.strike, 0.0);
    return payoff * std::exp(-0.5 * z * z) / std::sqrt(2 * M_PI);
  };
  double sum = f(lo) + f(hi);
  for (int i = 1; i < steps; ++i) sum += f(lo + i * h) * (i % 2 == 1 ? 4 : 2);
  return std::exp(-o.rate * o.maturity) * sum * h / 3;
}

std::vector<double> naive_product(std::size_t n, const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> c(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i * n + k] * b[k * n + j];
  return c;
}

std::vector<double> as_doubles(const std::vector<std::byte>& bytes, std::size_t len) {
  std::vector<double> out(len / sizeof(double));
  std::memcpy(out.data(), bytes.data(), len);
  return out;
}

std::uint32_t call(FunctionPtr f, std::vector<std::byte>& in, std::vector<std::byte>& out) {
  return f(in.data(), static_cast<std::uint32_t>(in.size()), out.data());
}

}  // namespace

TEST_CASE("echo") {
  std::vector<std::byte> out(8);
  CHECK(echo(nullptr, 0, out.data()) == 0);
  char abc[] = "abc";
  CHECK(echo(abc, 3, out.data()) == 3);
  CHECK(std::memcmp(out.data(), "abc", 3) == 0);

  std::vector<std::byte> blob(5 << 20), copy(5 << 20);
  std::mt19937_64 rng(1);
  for (auto& b : blob) b = std::byte(rng());
  CHECK(echo(blob.data(), static_cast<std::uint32_t>(blob.size()), copy.data()) == blob.size());
  CHECK(std::hash<std::string_view>{}(std::string_view(reinterpret_cast<char*>(blob.data()), blob.size())) ==
        std::hash<std::string_view>{}(std::string_view(reinterpret_cast<char*>(copy.data()), copy.size())));
}

TEST_CASE("black-scholes matches the quadrature oracle") {
  OptionParams call_opt{100, 100, 0.05, 0.2, 1, false};
  CHECK(std::abs(black_scholes_price(call_opt) - price_by_quadrature(call_opt)) < 1e-6);
  OptionParams put_opt{90, 100, 0.03, 0.3, 0.5, true};
  CHECK(std::abs(black_scholes_price(put_opt) - price_by_quadrature(put_opt)) < 1e-6);

  std::vector<std::byte> out(64);
  CHECK(blackscholes(nullptr, 0, out.data()) == 0);
  std::vector<std::byte> bad(47);
  CHECK(blackscholes(bad.data(), 47, out.data()) == kFunctionError);
}

TEST_CASE("black-scholes split halves recompose bit-exactly") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::vector<OptionParams> opts(1000);
  for (auto& o : opts) o = {100 * u(rng), 100 * u(rng), 0.05 * u(rng), 0.2 * u(rng), u(rng), rng() % 2 == 0};
  auto whole = encode_options(opts);
  std::vector<std::byte> full(opts.size() * 8);
  CHECK(call(&blackscholes, whole, full) == full.size());
  for (std::size_t split : {0ul, 1ul, 333ul, 500ul, 1000ul}) {
    auto first = encode_options(std::span(opts).first(split));
    auto second = encode_options(std::span(opts).subspan(split));
    std::vector<std::byte> merged(full.size() + 8);
    blackscholes(first.data(), static_cast<std::uint32_t>(first.size()), merged.data());
    blackscholes(second.data(), static_cast<std::uint32_t>(second.size()), merged.data() + split * 8);
    CHECK(std::memcmp(merged.data(), full.data(), full.size()) == 0);
  }
}

TEST_CASE("mmm_half row blocks") {
  SUBCASE("identity times M") {
    std::vector<double> id = {1, 0, 0, 1}, m = {1, 2, 3, 4};
    auto in = encode_mmm(2, 1, 2, id, m);
    std::vector<std::byte> out(64);
    REQUIRE(call(&mmm_half, in, out) == 16);
    auto rows = as_doubles(out, 16);
    CHECK(rows == std::vector<double>{3, 4});
  }
  SUBCASE("random 32x32 matches the naive oracle and the halves merge") {
    const std::uint32_t n = 32;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> a(n * n), b(n * n);
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    auto oracle = naive_product(n, a, b);

    std::vector<std::byte> out(n * n * 8);
    auto full = encode_mmm(n, 0, n, a, b);
    REQUIRE(call(&mmm_half, full, out) == n * n * 8);
    CHECK(as_doubles(out, n * n * 8) == oracle);

    auto top = encode_mmm(n, 0, n / 2, a, b);
    auto bottom = encode_mmm(n, n / 2, n, a, b);
    std::vector<std::byte> merged(n * n * 8);
    std::vector<std::byte> part(n * n * 8);
    auto l1 = call(&mmm_half, top, part);
    std::memcpy(merged.data(), part.data(), l1);
    auto l2 = call(&mmm_half, bottom, part);
    std::memcpy(merged.data() + l1, part.data(), l2);
    CHECK(as_doubles(merged, n * n * 8) == oracle);
  }
  SUBCASE("malformed") {
    std::vector<std::byte> in(20), out(64);
    CHECK(call(&mmm_half, in, out) == kFunctionError);
  }
}

TEST_CASE("jacobi caches the system after the first call") {
  const std::uint32_t n = 4;
  std::vector<double> a = {10, 1, 2, 0, 1, 12, 1, 3, 2, 1, 9, 1, 0, 3, 1, 11};
  std::vector<double> b = {1, 2, 3, 4};
  std::vector<double> x(n, 0.0);

  auto local_sweep = [&](const std::vector<double>& xin) {
    std::vector<double> out(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::uint32_t j = 0; j < n; ++j)
        if (j != i) s += a[i * n + j] * xin[j];
      out[i] = (b[i] - s) / a[i * n + i];
    }
    return out;
  };

  jacobi_reset_cache();
  std::vector<std::byte> out(n * 8);
  std::vector<std::byte> xonly(n * 8);
  CHECK(jacobi_step(xonly.data(), n * 8, out.data()) == kFunctionError);

  // remote half = rows [2,4), local half computed here
  std::vector<double> oracle = x;
  for (int it = 0; it < 25; ++it) {
    std::vector<std::byte> req;
    if (it == 0) {
      req = encode_jacobi_full(n, 2, 4, a, b, x);
    } else {
      req.resize(n * 8);
      std::memcpy(req.data(), x.data(), n * 8);
      CHECK(req.size() == n * sizeof(double));
    }
    REQUIRE(call(&jacobi_step, req, out) == 16);
    auto local = local_sweep(x);
    auto remote = as_doubles(out, 16);
    x = {local[0], local[1], remote[0], remote[1]};
    oracle = local_sweep(oracle);
  }
  CHECK(x == oracle);
  double resid = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    double r = -b[i];
    for (std::uint32_t j = 0; j < n; ++j) r += a[i * n + j] * x[j];
    resid = std::max(resid, std::abs(r));
  }
  CHECK(resid < 1e-8);

  jacobi_reset_cache();
  std::memcpy(xonly.data(), x.data(), n * 8);
  CHECK(call(&jacobi_step, xonly, out) == kFunctionError);
}

TEST_CASE("functions never write past their output for generated inputs") {
  std::mt19937_64 rng(11);
  const std::size_t guard = 256;
  for (const auto& entry : demo_registry()) {
    CAPTURE(entry.name);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::byte> in(rng() % 2048);
      for (auto& v : in) v = std::byte(rng());
      if (trial % 3 == 0 && in.size() >= 16) {
        // plausible headers so the bounds checks see small dimensions
        std::uint32_t hdr[4] = {entry.name == "jacobi_step" ? kJacobiMagic : 3u, 3, 1, 3};
        if (entry.name != "jacobi_step") hdr[1] = 0, hdr[2] = 3, hdr[3] = 0;
        std::memcpy(in.data(), hdr, 16);
      }
      // outputs never exceed the input length for these kernels
      std::vector<std::byte> out(in.size() + guard, std::byte{0xEE});
      jacobi_reset_cache();
      auto len = entry.entry(in.data(), static_cast<std::uint32_t>(in.size()), out.data());
      if (len != kFunctionError) CHECK(len <= in.size());
      bool intact = true;
      for (std::size_t i = (len == kFunctionError ? in.size() : len); i < out.size(); ++i) {
        if (i >= in.size() && out[i] != std::byte{0xEE}) intact = false;
      }
      CHECK(intact);
    }
  }
}

TEST_CASE("function tables from the registry and the code object agree") {
  auto builtin = load_functions(demo_submission());
  auto object = load_functions(demo_code_object_submission(SPOTFAAS_DEMO_OBJECT));
  REQUIRE(builtin.size() == 4);
  REQUIRE(object.size() == 4);
  CHECK(builtin.lookup(9) == nullptr);
  CHECK(object.lookup(kBlackScholes) != &blackscholes);

  std::vector<OptionParams> opts = {{100, 95, 0.01, 0.25, 2, false}, {50, 60, 0.02, 0.4, 0.25, true}};
  auto in = encode_options(opts);
  std::vector<std::byte> a(16), b(16);
  CHECK(builtin.lookup(kBlackScholes)(in.data(), 96, a.data()) == 16);
  CHECK(object.lookup(kBlackScholes)(in.data(), 96, b.data()) == 16);
  CHECK(a == b);

  auto missing = demo_submission();
  missing.functions.push_back({4, "nope"});
  CHECK_THROWS_AS(load_functions(missing), Error);
  auto unknown = demo_submission();
  unknown.registry = "other";
  CHECK_THROWS_AS(load_functions(unknown), Error);
}
