// Shared code object exporting the demo functions under their plain names.
#include <cstdint>

#include "spotfaas/functions/demo.hpp"

namespace fn = spotfaas::functions;

#define SPOTFAAS_EXPORT __attribute__((visibility("default")))

extern "C" {

SPOTFAAS_EXPORT std::uint32_t echo(void* in, std::uint32_t size, void* out) { return fn::echo(in, size, out); }
SPOTFAAS_EXPORT std::uint32_t blackscholes(void* in, std::uint32_t size, void* out) { return fn::blackscholes(in, size, out); }
SPOTFAAS_EXPORT std::uint32_t mmm_half(void* in, std::uint32_t size, void* out) { return fn::mmm_half(in, size, out); }
SPOTFAAS_EXPORT std::uint32_t jacobi_step(void* in, std::uint32_t size, void* out) { return fn::jacobi_step(in, size, out); }
}
