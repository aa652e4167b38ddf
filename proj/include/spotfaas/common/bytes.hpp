#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spotfaas/common/error.hpp"

namespace spotfaas {

// Little-endian fixed-width stores/loads. Callers guarantee bounds.
inline void store_le(std::byte* out, std::uint64_t v, std::size_t width) noexcept {
  for (std::size_t i = 0; i < width; ++i) out[i] = static_cast<std::byte>((v >> (8 * i)) & 0xFF);
}

inline std::uint64_t load_le(const std::byte* in, std::size_t width) noexcept {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v |= std::uint64_t(std::to_integer<std::uint8_t>(in[i])) << (8 * i);
  return v;
}

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::byte>& out) : out_(out) {}

  void u8(std::uint8_t v) { put(v, 1); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }

  void bytes(std::span<const std::byte> b) { out_.insert(out_.end(), b.begin(), b.end()); }

  // u32 length prefix followed by the raw bytes.
  void blob(std::span<const std::byte> b) {
    u32(static_cast<std::uint32_t>(b.size()));
    bytes(b);
  }
  void str(std::string_view s) { blob(std::as_bytes(std::span(s.data(), s.size()))); }

  std::size_t size() const noexcept { return out_.size(); }

  // Overwrites a previously reserved u32 slot.
  void patch_u32(std::size_t offset, std::uint32_t v) { store_le(out_.data() + offset, v, 4); }

 private:
  void put(std::uint64_t v, std::size_t width) {
    auto at = out_.size();
    out_.resize(at + width);
    store_le(out_.data() + at, v, width);
  }

  std::vector<std::byte>& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(take(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  std::uint64_t u64() { return take(8); }
  double f64() { return std::bit_cast<double>(take(8)); }

  std::span<const std::byte> bytes(std::size_t n) {
    need(n);
    auto out = in_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::vector<std::byte> blob() {
    auto n = u32();
    auto b = bytes(n);
    return {b.begin(), b.end()};
  }
  std::string str() {
    auto n = u32();
    auto b = bytes(n);
    return {reinterpret_cast<const char*>(b.data()), b.size()};
  }

  std::size_t remaining() const noexcept { return in_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) fail(Errc::truncated_frame, "frame truncated");
  }
  std::uint64_t take(std::size_t width) {
    need(width);
    auto v = load_le(in_.data() + pos_, width);
    pos_ += width;
    return v;
  }

  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

inline std::span<const std::byte> as_bytes(std::string_view s) noexcept {
  return std::as_bytes(std::span(s.data(), s.size()));
}

}  // namespace spotfaas
