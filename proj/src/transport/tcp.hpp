#pragma once

#include <memory>
#include <string_view>

#include "spotfaas/transport/endpoint.hpp"

namespace spotfaas::transport::detail {

std::unique_ptr<Listener> tcp_listen(std::string_view address, TransportOptions options);
std::unique_ptr<Endpoint> tcp_connect(std::string_view address, std::shared_ptr<MemoryDomain> domain,
                                      std::shared_ptr<CompletionQueue> cq, TransportOptions options);

}  // namespace spotfaas::transport::detail
