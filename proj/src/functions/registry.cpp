#include "spotfaas/functions/registry.hpp"

#include <dlfcn.h>
#include <sys/mman.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>

#include "spotfaas/common/error.hpp"
#include "spotfaas/functions/demo.hpp"

namespace spotfaas::functions {
namespace {

struct DlHandle {
  void* handle = nullptr;
  ~DlHandle() {
    if (handle != nullptr) dlclose(handle);
  }
};

protocol::CodeSubmission submission_for(const std::vector<FunctionEntry>& registry, std::uint64_t flib_id) {
  protocol::CodeSubmission c;
  c.flib_id = flib_id;
  for (const auto& e : registry) c.functions.push_back({e.index, e.name});
  return c;
}

}  // namespace

const std::vector<FunctionEntry>* find_registry(std::string_view name) noexcept {
  if (name == "demo") return &demo_registry();
  if (name == "testing") return &testing_registry();
  return nullptr;
}

int make_code_object_fd(std::span<const std::byte> object) {
  int fd = memfd_create("flib", MFD_CLOEXEC);
  if (fd < 0) fail(Errc::spawn_failed, std::string("memfd_create: ") + std::strerror(errno));
  std::size_t done = 0;
  while (done < object.size()) {
    auto n = ::write(fd, object.data() + done, object.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      fail(Errc::spawn_failed, std::string("writing code object: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
  return fd;
}

FunctionTable load_functions(const protocol::CodeSubmission& code, int object_fd) {
  protocol::validate(code);
  std::vector<FunctionPtr> table(code.functions.size(), nullptr);

  if (code.kind == protocol::CodeKind::builtin_registry) {
    const auto* registry = find_registry(code.registry);
    if (registry == nullptr) fail(Errc::not_found, "unknown function registry: " + code.registry);
    for (const auto& sym : code.functions) {
      for (const auto& e : *registry) {
        if (e.name == sym.name) table[sym.index] = e.entry;
      }
      if (table[sym.index] == nullptr) fail(Errc::not_found, "registry " + code.registry + " has no " + sym.name);
    }
    return FunctionTable(std::move(table), nullptr);
  }

  bool own_fd = object_fd < 0;
  int fd = own_fd ? make_code_object_fd(code.object) : object_fd;
  auto path = "/proc/self/fd/" + std::to_string(fd);
  auto lib = std::make_shared<DlHandle>();
  lib->handle = dlopen(path.c_str(), RTLD_NOW | RTLD_LOCAL);
  if (own_fd) ::close(fd);
  if (lib->handle == nullptr) fail(Errc::spawn_failed, std::string("dlopen: ") + dlerror());
  for (const auto& sym : code.functions) {
    void* p = dlsym(lib->handle, sym.name.c_str());
    if (p == nullptr) fail(Errc::not_found, "code object does not export " + sym.name);
    table[sym.index] = reinterpret_cast<FunctionPtr>(p);
  }
  return FunctionTable(std::move(table), std::move(lib));
}

std::vector<std::byte> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::not_found, "cannot open " + path);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

protocol::CodeSubmission demo_submission(std::uint64_t flib_id) {
  auto c = submission_for(demo_registry(), flib_id);
  c.kind = protocol::CodeKind::builtin_registry;
  c.registry = "demo";
  return c;
}

protocol::CodeSubmission demo_code_object_submission(const std::string& object_path, std::uint64_t flib_id) {
  auto c = submission_for(demo_registry(), flib_id);
  c.kind = protocol::CodeKind::code_object;
  c.object = read_file(object_path);
  return c;
}

protocol::CodeSubmission testing_submission(std::uint64_t flib_id) {
  auto c = submission_for(testing_registry(), flib_id);
  c.kind = protocol::CodeKind::builtin_registry;
  c.registry = "testing";
  return c;
}

}  // namespace spotfaas::functions
