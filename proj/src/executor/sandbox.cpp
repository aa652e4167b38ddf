#include "spotfaas/executor/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/prctl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "spotfaas/common/error.hpp"

extern char** environ;

namespace spotfaas::executor {

using namespace std::chrono_literals;

SandboxKind parse_sandbox_kind(std::string_view s) {
  if (s == "inline") return SandboxKind::inline_threads;
  if (s == "process") return SandboxKind::process;
  fail(Errc::invalid_argument, "sandbox kind must be inline or process, got " + std::string(s));
}

WorkerGroup::WorkerGroup(const SandboxSpec& spec, std::shared_ptr<const functions::FunctionTable> table,
                         SandboxBlock& block, CoreTable& cores)
    : spec_(spec), table_(std::move(table)), block_(block), cores_(cores) {}

WorkerGroup::~WorkerGroup() {
  block_.stop.store(1);
  join();
}

std::vector<protocol::WorkerInfo> WorkerGroup::start() {
  if (spec_.workers == 0 || spec_.workers > kMaxWorkers) fail(Errc::invalid_argument, "bad worker count");
  std::vector<protocol::WorkerInfo> infos;
  auto ncpu = std::max(1u, std::thread::hardware_concurrency());
  for (std::uint32_t i = 0; i < spec_.workers; ++i) {
    WorkerConfig wc;
    wc.worker_id = i;
    wc.listen_address = spec_.listen_address;
    wc.hot_timeout_ms = spec_.hot_timeout_ms;
    wc.max_payload = spec_.max_payload;
    wc.pin_cpu = spec_.first_cpu < 0 ? -1 : static_cast<int>((spec_.first_cpu + i) % ncpu);
    wc.transport = spec_.transport;
    workers_.push_back(std::make_unique<Worker>(wc, table_, block_.slots[i], cores_, block_.stop));
    infos.push_back(workers_.back()->prepare());
  }
  for (auto& w : workers_) {
    threads_.emplace_back([worker = w.get()] { worker->run(); });
    block_.ready_workers.fetch_add(1);
  }
  return infos;
}

void WorkerGroup::join() {
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
  threads_.clear();
}

void Sandbox::init_block(std::uint32_t workers) {
  block_region_ = SharedRegion(sizeof(SandboxBlock));
  auto* b = new (block_region_.data()) SandboxBlock{};
  b->workers = workers;
  b->started_ns = monotonic_ns();
  started_ = Clock::now();
}

std::vector<WorkerStats> Sandbox::stats() const {
  std::vector<WorkerStats> out;
  for (std::uint32_t i = 0; i < block().workers; ++i) out.push_back(snapshot(block().slots[i], i));
  return out;
}

TimePoint Sandbox::last_activity() const {
  std::uint64_t latest = block().started_ns;
  for (std::uint32_t i = 0; i < block().workers; ++i) {
    latest = std::max(latest, block().slots[i].last_activity_ns.load(std::memory_order_relaxed));
  }
  return TimePoint(std::chrono::duration_cast<Clock::duration>(Nanos(latest)));
}

namespace {

class InlineSandbox final : public Sandbox {
 public:
  InlineSandbox(const SandboxSpec& spec, const SharedRegion& cores) {
    init_block(spec.workers);
    auto t0 = Clock::now();
    auto table = std::make_shared<const functions::FunctionTable>(functions::load_functions(spec.code));
    auto t1 = Clock::now();
    group_ = std::make_unique<WorkerGroup>(spec, std::move(table), block(), *cores.as<CoreTable>());
    workers_ = group_->start();
    submit_code_ = t1 - t0;
    spawn_workers_ = Clock::now() - t1;
  }
  ~InlineSandbox() override { stop(1s); }

  int pid() const noexcept override { return -1; }
  bool alive() override { return group_ != nullptr; }
  void stop(std::chrono::milliseconds) override {
    if (!group_) return;
    block().stop.store(1);
    group_->join();
    group_.reset();
  }

 private:
  std::unique_ptr<WorkerGroup> group_;
};

int dup_high(int fd) {
  int r = ::fcntl(fd, F_DUPFD_CLOEXEC, 64);
  if (r < 0) fail(Errc::spawn_failed, std::string("fcntl: ") + std::strerror(errno));
  return r;
}

std::string join_functions(const std::vector<protocol::FunctionSymbol>& fns) {
  std::string out;
  for (const auto& f : fns) {
    if (!out.empty()) out += ',';
    out += std::to_string(f.index) + ":" + f.name;
  }
  return out;
}

class ProcessSandbox final : public Sandbox {
 public:
  ProcessSandbox(const SandboxSpec& spec, const SharedRegion& cores, const std::string& binary,
                 std::chrono::milliseconds ready_timeout) {
    if (transport::backend_of(spec.listen_address) != transport::Backend::tcp) {
      fail(Errc::invalid_argument, "process sandboxes need a tcp listen address");
    }
    init_block(spec.workers);

    auto t0 = Clock::now();
    protocol::validate(spec.code);
    int code_fd = -1;
    if (spec.code.kind == protocol::CodeKind::code_object) code_fd = functions::make_code_object_fd(spec.code.object);
    auto t1 = Clock::now();
    submit_code_ = t1 - t0;

    int pipefd[2];
    if (::pipe2(pipefd, O_CLOEXEC) != 0) fail(Errc::spawn_failed, std::string("pipe: ") + std::strerror(errno));
    ready_fd_ = pipefd[0];
    int w = dup_high(pipefd[1]);
    ::close(pipefd[1]);
    int block_fd = dup_high(block_region_.fd());
    int cores_fd = dup_high(cores.fd());
    int obj_fd = code_fd >= 0 ? dup_high(code_fd) : -1;
    if (code_fd >= 0) ::close(code_fd);

    std::vector<std::string> args = {binary,
                                     "--workers", std::to_string(spec.workers),
                                     "--hot-timeout-ms", std::to_string(spec.hot_timeout_ms),
                                     "--max-payload", std::to_string(spec.max_payload),
                                     "--listen", spec.listen_address,
                                     "--first-cpu", std::to_string(spec.first_cpu),
                                     "--block-size", std::to_string(block_region_.size()),
                                     "--cores-size", std::to_string(cores.size()),
                                     "--functions", join_functions(spec.code.functions),
                                     "--flib", std::to_string(spec.code.flib_id),
                                     "--parent", std::to_string(::getpid())};
    if (spec.code.kind == protocol::CodeKind::builtin_registry) {
      args.insert(args.end(), {"--registry", spec.code.registry});
    } else {
      args.insert(args.end(), {"--code-object"});
    }
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);

    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_adddup2(&fa, w, kReadyFd);
    posix_spawn_file_actions_adddup2(&fa, block_fd, kBlockFd);
    posix_spawn_file_actions_adddup2(&fa, cores_fd, kCoresFd);
    if (obj_fd >= 0) posix_spawn_file_actions_adddup2(&fa, obj_fd, kCodeFd);
    int rc = ::posix_spawn(&pid_, binary.c_str(), &fa, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&fa);
    for (int fd : {w, block_fd, cores_fd, obj_fd}) {
      if (fd >= 0) ::close(fd);
    }
    if (rc != 0) {
      pid_ = -1;
      fail(Errc::spawn_failed, "spawning " + binary + ": " + std::strerror(rc));
    }

    try {
      read_ready(spec.workers, ready_timeout);
    } catch (...) {
      stop(0ms);
      throw;
    }
    spawn_workers_ = Clock::now() - t1;
  }

  ~ProcessSandbox() override {
    stop(2s);
    if (ready_fd_ >= 0) ::close(ready_fd_);
  }

  int pid() const noexcept override { return pid_; }

  bool alive() override {
    if (pid_ < 0) return false;
    int status;
    if (::waitpid(pid_, &status, WNOHANG) == pid_) {
      pid_ = -1;
      return false;
    }
    return true;
  }

  void stop(std::chrono::milliseconds grace) override {
    if (pid_ < 0) return;
    block().stop.store(1);
    auto deadline = Clock::now() + grace;
    while (Clock::now() < deadline) {
      if (!alive()) return;
      std::this_thread::sleep_for(1ms);
    }
    ::kill(pid_, SIGKILL);
    int status;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }

 private:
  void read_ready(std::uint32_t expected, std::chrono::milliseconds timeout) {
    auto deadline = Clock::now() + timeout;
    std::string buf;
    while (true) {
      auto nl = buf.find('\n');
      if (nl != std::string::npos) {
        std::string line = buf.substr(0, nl);
        buf.erase(0, nl + 1);
        std::istringstream in(line);
        std::string word;
        in >> word;
        if (word == "ready") {
          if (workers_.size() != expected) fail(Errc::spawn_failed, "sandbox reported too few workers");
          return;
        }
        if (word == "error") fail(Errc::spawn_failed, "sandbox: " + line.substr(std::min<std::size_t>(6, line.size())));
        if (word != "worker") fail(Errc::spawn_failed, "unexpected sandbox output: " + line);
        protocol::WorkerInfo info;
        in >> info.worker_id >> info.address >> info.request.address >> info.request.key >> info.request.length;
        if (!in) fail(Errc::spawn_failed, "malformed worker line: " + line);
        workers_.push_back(info);
        continue;
      }
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (left.count() <= 0) fail(Errc::spawn_failed, "sandbox did not become ready in time");
      pollfd p{ready_fd_, POLLIN, 0};
      int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) continue;
      char chunk[512];
      auto n = ::read(ready_fd_, chunk, sizeof(chunk));
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) fail(Errc::spawn_failed, "sandbox exited before it was ready");
      buf.append(chunk, static_cast<std::size_t>(n));
    }
  }

  pid_t pid_ = -1;
  int ready_fd_ = -1;
};

void write_all(int fd, const std::string& s) {
  std::size_t done = 0;
  while (done < s.size()) {
    auto n = ::write(fd, s.data() + done, s.size() - done);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return;
    done += static_cast<std::size_t>(n);
  }
}

}  // namespace

std::unique_ptr<Sandbox> start_inline_sandbox(const SandboxSpec& spec, const SharedRegion& cores) {
  return std::make_unique<InlineSandbox>(spec, cores);
}

std::unique_ptr<Sandbox> start_process_sandbox(const SandboxSpec& spec, const SharedRegion& cores,
                                               const std::string& sandbox_binary,
                                               std::chrono::milliseconds ready_timeout) {
  return std::make_unique<ProcessSandbox>(spec, cores, sandbox_binary, ready_timeout);
}

std::string default_sandbox_binary() {
  if (const char* env = std::getenv("SPOTFAAS_SANDBOX"); env != nullptr && *env != '\0') return env;
  std::error_code ec;
  auto self = std::filesystem::read_symlink("/proc/self/exe", ec);
  if (ec) return "sandbox";
  return (self.parent_path() / "sandbox").string();
}

int sandbox_main(int argc, char** argv) {
  SandboxSpec spec;
  std::size_t block_size = 0, cores_size = 0;
  std::string functions_arg, registry;
  bool code_object = false;
  long parent = 0;
  CLI::App app{"sandbox process hosting the workers of one lease"};
  app.add_option("--workers", spec.workers)->required();
  app.add_option("--hot-timeout-ms", spec.hot_timeout_ms);
  app.add_option("--max-payload", spec.max_payload);
  app.add_option("--listen", spec.listen_address);
  app.add_option("--first-cpu", spec.first_cpu);
  app.add_option("--block-size", block_size)->required();
  app.add_option("--cores-size", cores_size)->required();
  app.add_option("--functions", functions_arg);
  app.add_option("--flib", spec.code.flib_id);
  app.add_option("--registry", registry);
  app.add_flag("--code-object", code_object);
  app.add_option("--parent", parent);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    write_all(kReadyFd, "error " + std::string(e.what()) + "\n");
    return app.exit(e);
  }

  ::prctl(PR_SET_PDEATHSIG, SIGKILL);
  if (parent != 0 && ::getppid() != parent) return 1;

  try {
    std::istringstream in(functions_arg);
    std::string item;
    while (std::getline(in, item, ',')) {
      auto colon = item.find(':');
      if (colon == std::string::npos) fail(Errc::invalid_argument, "bad function entry " + item);
      spec.code.functions.push_back(
          {static_cast<std::uint16_t>(std::stoul(item.substr(0, colon))), item.substr(colon + 1)});
    }
    spec.code.kind = code_object ? protocol::CodeKind::code_object : protocol::CodeKind::builtin_registry;
    spec.code.registry = registry;
    if (code_object) spec.code.object.resize(1);  // bytes come through kCodeFd

    auto block_region = SharedRegion::adopt(kBlockFd, block_size);
    auto cores_region = SharedRegion::adopt(kCoresFd, cores_size);
    auto table = std::make_shared<const functions::FunctionTable>(
        functions::load_functions(spec.code, code_object ? kCodeFd : -1));
    auto& block = *block_region.as<SandboxBlock>();
    WorkerGroup group(spec, table, block, *cores_region.as<CoreTable>());
    auto infos = group.start();
    std::string out;
    for (const auto& w : infos) {
      out += "worker " + std::to_string(w.worker_id) + " " + w.address + " " + std::to_string(w.request.address) +
             " " + std::to_string(w.request.key) + " " + std::to_string(w.request.length) + "\n";
    }
    out += "ready\n";
    write_all(kReadyFd, out);
    group.join();
  } catch (const std::exception& e) {
    write_all(kReadyFd, std::string("error ") + e.what() + "\n");
    return 1;
  }
  return 0;
}

}  // namespace spotfaas::executor
