#pragma once

#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "spotfaas/functions/abi.hpp"
#include "spotfaas/protocol/messages.hpp"

namespace spotfaas::functions {

// Function table of one submitted library, indexed by function index.
class FunctionTable {
 public:
  FunctionTable() = default;
  FunctionTable(std::vector<FunctionPtr> entries, std::shared_ptr<void> owner)
      : entries_(std::move(entries)), owner_(std::move(owner)) {}

  FunctionPtr lookup(std::uint32_t index) const noexcept {
    return index < entries_.size() ? entries_[index] : nullptr;
  }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::vector<FunctionPtr> entries_;
  std::shared_ptr<void> owner_;  // keeps a loaded code object mapped
};

const std::vector<FunctionEntry>* find_registry(std::string_view name) noexcept;

// Resolves every symbol of the submission. Builtin registries are looked up
// by name; code objects are loaded from object_fd when >= 0, otherwise from
// the submitted bytes. Throws not_found or spawn_failed.
FunctionTable load_functions(const protocol::CodeSubmission& code, int object_fd = -1);

// Copies a code object into an anonymous in-memory file; returns its fd.
int make_code_object_fd(std::span<const std::byte> object);

std::vector<std::byte> read_file(const std::string& path);

// Submission naming the demo functions, either from the builtin registry or
// from the shared code object at object_path.
protocol::CodeSubmission demo_submission(std::uint64_t flib_id = 1);
protocol::CodeSubmission demo_code_object_submission(const std::string& object_path, std::uint64_t flib_id = 1);
protocol::CodeSubmission testing_submission(std::uint64_t flib_id = 2);

}  // namespace spotfaas::functions
