#include "spotfaas/functions/demo.hpp"

#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <thread>
#include <vector>

#include "spotfaas/common/bytes.hpp"

namespace spotfaas::functions {

static_assert(std::endian::native == std::endian::little, "payload layouts assume a little-endian host");

namespace {

constexpr std::size_t kTupleBytes = 6 * sizeof(double);
constexpr std::size_t kMatrixHeader = 16;

std::uint32_t read_u32(const std::byte* p) { return static_cast<std::uint32_t>(load_le(p, 4)); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct JacobiCache {
  std::uint64_t generation = 0;
  std::uint32_t n = 0, row_begin = 0, row_end = 0;
  std::vector<double> a, b;
};

thread_local JacobiCache jacobi_cache;
std::atomic<std::uint64_t> jacobi_generations{0};

std::uint32_t jacobi_update(const JacobiCache& c, const double* x, double* out) {
  for (std::uint32_t i = c.row_begin; i < c.row_end; ++i) {
    const double* row = c.a.data() + std::size_t(i) * c.n;
    double sigma = 0;
    for (std::uint32_t j = 0; j < c.n; ++j) {
      if (j != i) sigma += row[j] * x[j];
    }
    out[i - c.row_begin] = (c.b[i] - sigma) / row[i];
  }
  return (c.row_end - c.row_begin) * sizeof(double);
}

template <typename T>
void append(std::vector<std::byte>& out, std::span<const T> values) {
  auto bytes = std::as_bytes(values);
  out.insert(out.end(), bytes.begin(), bytes.end());
}

}  // namespace

std::uint32_t echo(void* in, std::uint32_t size, void* out) {
  if (size > 0 && in != out) std::memcpy(out, in, size);
  return size;
}

double black_scholes_price(const OptionParams& o) noexcept {
  double sqrt_t = std::sqrt(o.maturity);
  double d1 = (std::log(o.spot / o.strike) + (o.rate + 0.5 * o.volatility * o.volatility) * o.maturity) /
              (o.volatility * sqrt_t);
  double d2 = d1 - o.volatility * sqrt_t;
  double discount = o.strike * std::exp(-o.rate * o.maturity);
  if (o.put) return discount * normal_cdf(-d2) - o.spot * normal_cdf(-d1);
  return o.spot * normal_cdf(d1) - discount * normal_cdf(d2);
}

std::uint32_t blackscholes(void* in, std::uint32_t size, void* out) {
  if (size % kTupleBytes != 0) return kFunctionError;
  auto n = size / kTupleBytes;
  const auto* src = static_cast<const std::byte*>(in);
  auto* dst = static_cast<std::byte*>(out);
  for (std::size_t i = 0; i < n; ++i) {
    double t[6];
    std::memcpy(t, src + i * kTupleBytes, kTupleBytes);
    double price = black_scholes_price({t[0], t[1], t[2], t[3], t[4], t[5] != 0.0});
    std::memcpy(dst + i * sizeof(double), &price, sizeof(double));
  }
  return static_cast<std::uint32_t>(n * sizeof(double));
}

std::uint32_t mmm_half(void* in, std::uint32_t size, void* out) {
  if (size < kMatrixHeader) return kFunctionError;
  const auto* p = static_cast<const std::byte*>(in);
  std::uint64_t n = read_u32(p), rb = read_u32(p + 4), re = read_u32(p + 8);
  if (n == 0 || rb > re || re > n || size != kMatrixHeader + 2 * n * n * sizeof(double)) return kFunctionError;
  std::vector<double> a(n * n), b(n * n);
  std::memcpy(a.data(), p + kMatrixHeader, n * n * sizeof(double));
  std::memcpy(b.data(), p + kMatrixHeader + n * n * sizeof(double), n * n * sizeof(double));
  std::vector<double> c((re - rb) * n, 0.0);
  for (std::uint64_t i = rb; i < re; ++i) {
    for (std::uint64_t k = 0; k < n; ++k) {
      double aik = a[i * n + k];
      for (std::uint64_t j = 0; j < n; ++j) c[(i - rb) * n + j] += aik * b[k * n + j];
    }
  }
  std::memcpy(out, c.data(), c.size() * sizeof(double));
  return static_cast<std::uint32_t>(c.size() * sizeof(double));
}

std::uint32_t jacobi_step(void* in, std::uint32_t size, void* out) {
  auto& cache = jacobi_cache;
  const auto* p = static_cast<const std::byte*>(in);
  if (cache.generation != 0 && size == cache.n * sizeof(double)) {
    std::vector<double> x(cache.n);
    std::memcpy(x.data(), p, size);
    return jacobi_update(cache, x.data(), static_cast<double*>(out));
  }
  if (size < kMatrixHeader || read_u32(p) != kJacobiMagic) return kFunctionError;
  std::uint64_t n = read_u32(p + 4), rb = read_u32(p + 8), re = read_u32(p + 12);
  if (n == 0 || rb > re || re > n || size != kMatrixHeader + (n * n + 2 * n) * sizeof(double)) return kFunctionError;
  JacobiCache fresh;
  fresh.generation = jacobi_generations.fetch_add(1) + 1;
  fresh.n = static_cast<std::uint32_t>(n);
  fresh.row_begin = static_cast<std::uint32_t>(rb);
  fresh.row_end = static_cast<std::uint32_t>(re);
  fresh.a.resize(n * n);
  fresh.b.resize(n);
  std::vector<double> x(n);
  const std::byte* at = p + kMatrixHeader;
  std::memcpy(fresh.a.data(), at, n * n * sizeof(double));
  at += n * n * sizeof(double);
  std::memcpy(fresh.b.data(), at, n * sizeof(double));
  at += n * sizeof(double);
  std::memcpy(x.data(), at, n * sizeof(double));
  for (std::uint64_t i = rb; i < re; ++i) {
    if (fresh.a[i * n + i] == 0.0) return kFunctionError;
  }
  cache = std::move(fresh);
  return jacobi_update(cache, x.data(), static_cast<double*>(out));
}

void jacobi_reset_cache() noexcept { jacobi_cache = JacobiCache{}; }

std::vector<std::byte> encode_options(std::span<const OptionParams> options) {
  std::vector<std::byte> out;
  out.reserve(options.size() * kTupleBytes);
  for (const auto& o : options) {
    double t[6] = {o.spot, o.strike, o.rate, o.volatility, o.maturity, o.put ? 1.0 : 0.0};
    append(out, std::span<const double>(t, 6));
  }
  return out;
}

std::vector<std::byte> encode_mmm(std::uint32_t n, std::uint32_t row_begin, std::uint32_t row_end,
                                  std::span<const double> a, std::span<const double> b) {
  std::vector<std::byte> out;
  ByteWriter w(out);
  w.u32(n);
  w.u32(row_begin);
  w.u32(row_end);
  w.u32(0);
  append(out, a);
  append(out, b);
  return out;
}

std::vector<std::byte> encode_jacobi_full(std::uint32_t n, std::uint32_t row_begin, std::uint32_t row_end,
                                          std::span<const double> a, std::span<const double> b,
                                          std::span<const double> x) {
  std::vector<std::byte> out;
  ByteWriter w(out);
  w.u32(kJacobiMagic);
  w.u32(n);
  w.u32(row_begin);
  w.u32(row_end);
  append(out, a);
  append(out, b);
  append(out, x);
  return out;
}

namespace {

std::uint32_t trap(void*, std::uint32_t, void*) { return kFunctionError; }

std::uint32_t throw_error(void*, std::uint32_t, void*) { throw std::runtime_error("function raised"); }

std::uint32_t sleep_ms(void* in, std::uint32_t size, void*) {
  if (size < 4) return kFunctionError;
  std::this_thread::sleep_for(std::chrono::milliseconds(read_u32(static_cast<std::byte*>(in))));
  return 0;
}

std::uint32_t spin_ms(void* in, std::uint32_t size, void*) {
  if (size < 4) return kFunctionError;
  auto until = std::chrono::steady_clock::now() + std::chrono::milliseconds(read_u32(static_cast<std::byte*>(in)));
  while (std::chrono::steady_clock::now() < until) {
  }
  return 0;
}

// in: u32 count, u8 value. Writes count copies of value.
std::uint32_t fill(void* in, std::uint32_t size, void* out) {
  if (size < 5) return kFunctionError;
  const auto* p = static_cast<const std::byte*>(in);
  auto count = read_u32(p);
  std::memset(out, std::to_integer<int>(p[4]), count);
  return count;
}

}  // namespace

const std::vector<FunctionEntry>& demo_registry() {
  static const std::vector<FunctionEntry> entries = {
      {kEcho, "echo", &echo},
      {kBlackScholes, "blackscholes", &blackscholes},
      {kMmmHalf, "mmm_half", &mmm_half},
      {kJacobiStep, "jacobi_step", &jacobi_step},
  };
  return entries;
}

const std::vector<FunctionEntry>& testing_registry() {
  static const std::vector<FunctionEntry> entries = {
      {0, "echo", &echo},       {1, "trap", &trap},       {2, "throw_error", &throw_error},
      {3, "sleep_ms", &sleep_ms}, {4, "spin_ms", &spin_ms}, {5, "fill", &fill},
  };
  return entries;
}

}  // namespace spotfaas::functions
