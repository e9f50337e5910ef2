#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace streamsim {

enum class Errc {
  unknown_profile,
  invalid_argument,
  budget_exceeded,
  name_conflict,
  unroutable,
  unknown_queue,
  unknown_exchange,
  unknown_tag,
  invalid_option,
  connection_limit_exceeded,
  clock_error,
  pool_exhausted,
  credential_rejected,
  unknown_uid,
  num_conn_mismatch,
  invalid_config,
  infeasible_configuration,
  timeout,
  missing_reply,
  misrouted_reply,
  empty_record,
  empty_samples,
  mismatched_config,
  parse_error,
  io_error,
  protocol_error,
};

std::string_view to_string(Errc code) noexcept;

/// Base exception for every failure the library reports. The code is the
/// stable discriminator; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class ConnectionLimitError : public Error {
 public:
  ConnectionLimitError(std::string hop, std::uint32_t limit);

  const std::string& hop() const noexcept { return hop_; }
  std::uint32_t limit() const noexcept { return limit_; }

 private:
  std::string hop_;
  std::uint32_t limit_;
};

/// Raised by the experiment runner when a configuration cannot be realized
/// (e.g. a proxy hop that refuses more connections). Callers record it as a
/// missing data point rather than a crash.
class InfeasibleConfiguration : public Error {
 public:
  InfeasibleConfiguration(std::string reason, std::string hop,
                          std::uint32_t limit);

  const std::string& reason() const noexcept { return reason_; }
  const std::string& hop() const noexcept { return hop_; }
  std::uint32_t limit() const noexcept { return limit_; }

 private:
  std::string reason_;
  std::string hop_;
  std::uint32_t limit_;
};

}  // namespace streamsim
