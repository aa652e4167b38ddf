#pragma once

#include <cstdint>
#include <string>

namespace spotfaas::functions {

// Entry point exported by user code: reads size bytes at in, writes the
// result to out and returns its length.
using FunctionPtr = std::uint32_t (*)(void* in, std::uint32_t size, void* out);

// Returned instead of a length when the function fails.
inline constexpr std::uint32_t kFunctionError = 0xFFFFFFFF;

struct FunctionEntry {
  std::uint16_t index = 0;
  std::string name;
  FunctionPtr entry = nullptr;
};

}  // namespace spotfaas::functions
