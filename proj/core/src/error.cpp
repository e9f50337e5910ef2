#include "streamsim/error.hpp"

#include <fmt/format.h>

namespace streamsim {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::unknown_profile: return "unknown-profile";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::budget_exceeded: return "budget-exceeded";
    case Errc::name_conflict: return "name-conflict";
    case Errc::unroutable: return "unroutable";
    case Errc::unknown_queue: return "unknown-queue";
    case Errc::unknown_exchange: return "unknown-exchange";
    case Errc::unknown_tag: return "unknown-tag";
    case Errc::invalid_option: return "invalid-option";
    case Errc::connection_limit_exceeded: return "connection-limit-exceeded";
    case Errc::clock_error: return "clock-error";
    case Errc::pool_exhausted: return "pool-exhausted";
    case Errc::credential_rejected: return "credential-rejected";
    case Errc::unknown_uid: return "unknown-uid";
    case Errc::num_conn_mismatch: return "num-conn-mismatch";
    case Errc::invalid_config: return "invalid-config";
    case Errc::infeasible_configuration: return "infeasible-configuration";
    case Errc::timeout: return "timeout";
    case Errc::missing_reply: return "missing-reply";
    case Errc::misrouted_reply: return "misrouted-reply";
    case Errc::empty_record: return "empty-record";
    case Errc::empty_samples: return "empty-samples";
    case Errc::mismatched_config: return "mismatched-config";
    case Errc::parse_error: return "parse-error";
    case Errc::io_error: return "io-error";
    case Errc::protocol_error: return "protocol-error";
  }
  return "unknown";
}

ConnectionLimitError::ConnectionLimitError(std::string hop, std::uint32_t limit)
    : Error(Errc::connection_limit_exceeded,
            fmt::format("hop '{}' refused connection: limit of {} live "
                        "connections reached",
                        hop, limit)),
      hop_(std::move(hop)),
      limit_(limit) {}

InfeasibleConfiguration::InfeasibleConfiguration(std::string reason,
                                                 std::string hop,
                                                 std::uint32_t limit)
    : Error(Errc::infeasible_configuration,
            fmt::format("infeasible configuration ({}): hop '{}' limit {}",
                        reason, hop, limit)),
      reason_(std::move(reason)),
      hop_(std::move(hop)),
      limit_(limit) {}

}  // namespace streamsim
