#include "spotfaas/manager/auth.hpp"

#include <thread>

namespace spotfaas::manager {
namespace {

std::shared_future<bool> ready(bool v) {
  std::promise<bool> p;
  p.set_value(v);
  return p.get_future().share();
}

class Constant final : public TokenVerifier {
 public:
  explicit Constant(bool v) : verdict_(ready(v)) {}
  std::shared_future<bool> verify(std::uint64_t, std::span<const std::byte>) override { return verdict_; }

 private:
  std::shared_future<bool> verdict_;
};

class Delayed final : public TokenVerifier {
 public:
  Delayed(std::chrono::milliseconds delay, bool verdict) : delay_(delay), verdict_(verdict) {}

  std::shared_future<bool> verify(std::uint64_t, std::span<const std::byte>) override {
    auto promise = std::make_shared<std::promise<bool>>();
    auto result = promise->get_future().share();
    std::thread([promise, delay = delay_, v = verdict_] {
      std::this_thread::sleep_for(delay);
      promise->set_value(v);
    }).detach();
    return result;
  }

 private:
  std::chrono::milliseconds delay_;
  bool verdict_;
};

}  // namespace

std::shared_ptr<TokenVerifier> allow_all() { return std::make_shared<Constant>(true); }
std::shared_ptr<TokenVerifier> deny_all() { return std::make_shared<Constant>(false); }
std::shared_ptr<TokenVerifier> delayed(std::chrono::milliseconds delay, bool verdict) {
  return std::make_shared<Delayed>(delay, verdict);
}

}  // namespace spotfaas::manager
