#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spotfaas::bench {

// One output line: space-separated key=value pairs in insertion order.
// Keys and values must not contain spaces, '=' or newlines.
class Record {
 public:
  Record& set(std::string key, std::string value);
  Record& set(std::string key, const char* value) { return set(std::move(key), std::string(value)); }
  Record& set(std::string key, double value);
  Record& set(std::string key, std::uint64_t value);
  Record& set(std::string key, std::int64_t value);
  Record& set(std::string key, int value) { return set(std::move(key), static_cast<std::int64_t>(value)); }
  Record& set(std::string key, std::uint32_t value) { return set(std::move(key), static_cast<std::uint64_t>(value)); }
  Record& set(std::string key, bool value) { return set(std::move(key), std::string(value ? "true" : "false")); }

  std::optional<std::string> get(std::string_view key) const;
  // Throws not_found / invalid_argument.
  double number(std::string_view key) const;

  const std::vector<std::pair<std::string, std::string>>& fields() const noexcept { return fields_; }
  bool empty() const noexcept { return fields_.empty(); }
  std::string str() const;
  static Record parse(std::string_view line);

  friend bool operator==(const Record&, const Record&) = default;

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
};

// Records, then a "[summary]" line, the summary pairs one per line, and "[end]".
struct BenchOutput {
  std::vector<Record> records;
  Record summary;

  std::string str() const;
  static BenchOutput parse(std::string_view text);
  friend bool operator==(const BenchOutput&, const BenchOutput&) = default;
};

}  // namespace spotfaas::bench
