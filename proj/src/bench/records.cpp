#include "spotfaas/bench/records.hpp"

#include <charconv>

#include <fmt/format.h>

#include "spotfaas/common/error.hpp"

namespace spotfaas::bench {

namespace {

void check_token(std::string_view s, const char* what) {
  if (s.empty() || s.find_first_of(" =\n\t") != std::string_view::npos)
    fail(Errc::invalid_argument, fmt::format("bad record {} '{}'", what, s));
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return lines;
}

}  // namespace

Record& Record::set(std::string key, std::string value) {
  check_token(key, "key");
  check_token(value, "value");
  for (auto& [k, v] : fields_) {
    if (k == key) {
      v = std::move(value);
      return *this;
    }
  }
  fields_.emplace_back(std::move(key), std::move(value));
  return *this;
}

Record& Record::set(std::string key, double value) { return set(std::move(key), fmt::format("{}", value)); }
Record& Record::set(std::string key, std::uint64_t value) { return set(std::move(key), std::to_string(value)); }
Record& Record::set(std::string key, std::int64_t value) { return set(std::move(key), std::to_string(value)); }

std::optional<std::string> Record::get(std::string_view key) const {
  for (const auto& [k, v] : fields_)
    if (k == key) return v;
  return std::nullopt;
}

double Record::number(std::string_view key) const {
  auto v = get(key);
  if (!v) fail(Errc::not_found, fmt::format("record has no '{}'", key));
  double out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc{} || ptr != v->data() + v->size())
    fail(Errc::invalid_argument, fmt::format("'{}' is not a number: {}", key, *v));
  return out;
}

std::string Record::str() const {
  std::string out;
  for (const auto& [k, v] : fields_) {
    if (!out.empty()) out += ' ';
    out += k;
    out += '=';
    out += v;
  }
  return out;
}

Record Record::parse(std::string_view line) {
  Record r;
  while (!line.empty()) {
    auto sp = line.find(' ');
    auto tok = line.substr(0, sp);
    if (!tok.empty()) {
      auto eq = tok.find('=');
      if (eq == std::string_view::npos) fail(Errc::invalid_argument, fmt::format("token without '=': {}", tok));
      r.set(std::string(tok.substr(0, eq)), std::string(tok.substr(eq + 1)));
    }
    if (sp == std::string_view::npos) break;
    line.remove_prefix(sp + 1);
  }
  return r;
}

std::string BenchOutput::str() const {
  std::string out;
  for (const auto& r : records) out += r.str() + "\n";
  out += "[summary]\n";
  for (const auto& [k, v] : summary.fields()) out += k + "=" + v + "\n";
  out += "[end]\n";
  return out;
}

BenchOutput BenchOutput::parse(std::string_view text) {
  BenchOutput out;
  bool in_summary = false, ended = false;
  for (auto line : split_lines(text)) {
    if (line.empty() || line.front() == '#') continue;
    if (ended) fail(Errc::invalid_argument, "content after [end]");
    if (line == "[summary]") {
      if (in_summary) fail(Errc::invalid_argument, "repeated [summary]");
      in_summary = true;
    } else if (line == "[end]") {
      if (!in_summary) fail(Errc::invalid_argument, "[end] without [summary]");
      ended = true;
    } else if (in_summary) {
      auto r = Record::parse(line);
      if (r.fields().size() != 1) fail(Errc::invalid_argument, "summary lines hold one pair");
      out.summary.set(r.fields()[0].first, r.fields()[0].second);
    } else {
      out.records.push_back(Record::parse(line));
    }
  }
  if (!ended) fail(Errc::invalid_argument, "missing summary block");
  return out;
}

}  // namespace spotfaas::bench
