#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spotfaas/functions/abi.hpp"

namespace spotfaas::functions {

// Index order of the "demo" registry and of the shared code object.
enum DemoIndex : std::uint16_t { kEcho = 0, kBlackScholes = 1, kMmmHalf = 2, kJacobiStep = 3 };

std::uint32_t echo(void* in, std::uint32_t size, void* out);

// in: n tuples of 6 doubles (S, K, r, sigma, T, type); type 0 = call, 1 = put.
// out: n prices.
std::uint32_t blackscholes(void* in, std::uint32_t size, void* out);

// in: u32 n, row_begin, row_end, reserved; then A and B (n*n doubles each,
// row-major). out: rows [row_begin, row_end) of A*B.
std::uint32_t mmm_half(void* in, std::uint32_t size, void* out);

// First call: u32 magic, n, row_begin, row_end; A (n*n), b (n), x (n).
// Later calls: x only (n doubles), reusing the cached A, b and row range.
// out: the updated entries of x in [row_begin, row_end).
std::uint32_t jacobi_step(void* in, std::uint32_t size, void* out);

inline constexpr std::uint32_t kJacobiMagic = 0x4F43414A;

// Drops this thread's cached Jacobi state.
void jacobi_reset_cache() noexcept;

struct OptionParams {
  double spot = 0, strike = 0, rate = 0, volatility = 0, maturity = 0;
  bool put = false;
};

double black_scholes_price(const OptionParams& o) noexcept;

std::vector<std::byte> encode_options(std::span<const OptionParams> options);
std::vector<std::byte> encode_mmm(std::uint32_t n, std::uint32_t row_begin, std::uint32_t row_end,
                                  std::span<const double> a, std::span<const double> b);
std::vector<std::byte> encode_jacobi_full(std::uint32_t n, std::uint32_t row_begin, std::uint32_t row_end,
                                          std::span<const double> a, std::span<const double> b,
                                          std::span<const double> x);

const std::vector<FunctionEntry>& demo_registry();
const std::vector<FunctionEntry>& testing_registry();

}  // namespace spotfaas::functions
