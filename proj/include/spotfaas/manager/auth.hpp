#pragma once

#include <chrono>
#include <cstdint>
#include <future>
#include <memory>
#include <span>

namespace spotfaas::manager {

// Checks a client's allocation token. The verdict may arrive later; the
// manager grants optimistically and revokes if it turns out negative.
class TokenVerifier {
 public:
  virtual ~TokenVerifier() = default;
  virtual std::shared_future<bool> verify(std::uint64_t client_id, std::span<const std::byte> token) = 0;
};

std::shared_ptr<TokenVerifier> allow_all();
std::shared_ptr<TokenVerifier> deny_all();
// Answers `verdict` after `delay`.
std::shared_ptr<TokenVerifier> delayed(std::chrono::milliseconds delay, bool verdict);

}  // namespace spotfaas::manager
