#include "spotfaas/client/buffers.hpp"

#include "spotfaas/common/error.hpp"

namespace spotfaas::client {

InputBuffer::InputBuffer(std::shared_ptr<transport::MemoryDomain> domain, std::size_t bytes)
    : domain_(std::move(domain)),
      data_(kHeaderSlotOffset + protocol::kInvocationHeaderSize + bytes),
      capacity_(bytes) {
  reg_ = domain_->register_region(data_.span());
}

InputBuffer::~InputBuffer() {
  if (domain_) domain_->deregister(reg_);
}

std::span<const std::byte> InputBuffer::message(std::size_t len) const {
  if (len > capacity_) fail(Errc::buffer_too_small, "payload larger than the input buffer");
  return {data_.data() + kHeaderSlotOffset, protocol::kInvocationHeaderSize + len};
}

OutputBuffer::OutputBuffer(std::shared_ptr<transport::MemoryDomain> domain, std::size_t bytes)
    : domain_(std::move(domain)), capacity_(bytes) {
  if (bytes == 0) fail(Errc::invalid_argument, "result buffer must be non-empty");
  data_ = PageBuffer(bytes);
  reg_ = domain_->register_region(data_.span());
}

OutputBuffer::~OutputBuffer() {
  if (domain_) domain_->deregister(reg_);
}

}  // namespace spotfaas::client
