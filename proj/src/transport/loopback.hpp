#pragma once

#include <memory>
#include <string_view>

#include "spotfaas/transport/endpoint.hpp"

namespace spotfaas::transport::detail {

std::unique_ptr<Listener> loopback_listen(std::string_view name, TransportOptions options);
std::unique_ptr<Endpoint> loopback_connect(std::string_view name, std::shared_ptr<MemoryDomain> domain,
                                           std::shared_ptr<CompletionQueue> cq, TransportOptions options);

}  // namespace spotfaas::transport::detail
