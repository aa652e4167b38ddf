#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <utility>

namespace spotfaas {

inline constexpr std::size_t kPageSize = 4096;

constexpr std::size_t round_up_to_page(std::size_t n) noexcept {
  return (n + kPageSize - 1) / kPageSize * kPageSize;
}

// Zero-initialised, page-aligned heap region. Move-only.
class PageBuffer {
 public:
  PageBuffer() = default;
  explicit PageBuffer(std::size_t bytes)
      : size_(bytes),
        capacity_(round_up_to_page(bytes == 0 ? 1 : bytes)),
        data_(static_cast<std::byte*>(::operator new(capacity_, std::align_val_t{kPageSize}))) {
    for (std::size_t i = 0; i < capacity_; ++i) data_[i] = std::byte{0};
  }
  ~PageBuffer() { release(); }

  PageBuffer(PageBuffer&& other) noexcept
      : size_(std::exchange(other.size_, 0)),
        capacity_(std::exchange(other.capacity_, 0)),
        data_(std::exchange(other.data_, nullptr)) {}
  PageBuffer& operator=(PageBuffer&& other) noexcept {
    if (this != &other) {
      release();
      size_ = std::exchange(other.size_, 0);
      capacity_ = std::exchange(other.capacity_, 0);
      data_ = std::exchange(other.data_, nullptr);
    }
    return *this;
  }
  PageBuffer(const PageBuffer&) = delete;
  PageBuffer& operator=(const PageBuffer&) = delete;

  std::byte* data() const noexcept { return data_; }
  std::size_t size() const noexcept { return size_; }
  std::size_t capacity() const noexcept { return capacity_; }
  std::span<std::byte> span() const noexcept { return {data_, size_}; }
  std::span<std::byte> whole() const noexcept { return {data_, capacity_}; }

 private:
  void release() noexcept {
    if (data_ != nullptr) ::operator delete(data_, std::align_val_t{kPageSize});
    data_ = nullptr;
  }

  std::size_t size_ = 0;
  std::size_t capacity_ = 0;
  std::byte* data_ = nullptr;
};

}  // namespace spotfaas
