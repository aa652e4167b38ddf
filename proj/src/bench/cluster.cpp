#include "spotfaas/bench/cluster.hpp"

namespace spotfaas::bench {

LocalCluster::LocalCluster(ClusterOptions options) : options_(std::move(options)) {
  manager::ManagerOptions mo;
  mo.listen_address = listen_address();
  mo.config = options_.manager;
  mo.rates = options_.rates;
  mo.verifier = options_.verifier;
  manager_ = std::make_unique<manager::ManagerServer>(mo);
  manager_->start();
  for (auto cores : options_.executor_cores) {
    executor::ExecutorOptions eo;
    eo.manager_address = manager_->address();
    eo.listen_address = listen_address();
    eo.cores = cores;
    eo.memory_mb = options_.executor_memory_mb;
    eo.default_hot_timeout_ms = options_.hot_timeout_ms;
    eo.idle_timeout = options_.idle_timeout;
    eo.sandbox = options_.sandbox;
    eo.sandbox_binary = options_.sandbox_binary;
    eo.flush_interval = options_.flush_interval;
    executors_.push_back(std::make_unique<executor::ExecutorDaemon>(eo));
    executors_.back()->start();
  }
}

LocalCluster::~LocalCluster() {
  for (auto& e : executors_) {
    if (e) e->stop();
  }
  manager_->stop();
}

void LocalCluster::stop_executor(std::size_t i) { executors_.at(i)->stop(); }

std::string LocalCluster::listen_address() const {
  return options_.backend == transport::Backend::loopback ? "loop:" : "tcp:127.0.0.1:0";
}

client::InvokerOptions LocalCluster::invoker_options(bool background_progress) const {
  client::InvokerOptions o;
  o.manager_address = manager_->address();
  o.background_progress = background_progress;
  return o;
}

}  // namespace spotfaas::bench
