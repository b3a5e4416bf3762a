#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pcons {

enum class ErrorCode {
  invalid_persona,
  invalid_category,
  invalid_instrument,
  configuration,
  precondition,
  unparseable_answer,
  incomplete_survey,
  judge_parse,
  unknown_axis,
  wrong_axis,
  transport,
  permanent,
  empty_cell,
  malformed_distribution,
  empty_aggregate,
  insufficient_data,
  incomplete_matrix,
  io,
  store_corruption,
};

std::string_view to_string(ErrorCode code);

/// Base exception for the harness. Every failure carries a machine-readable
/// code so the CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Gateway failure bound to the idempotency key of the unit that issued it.
class GatewayError : public Error {
 public:
  GatewayError(ErrorCode code, const std::string& message, std::string key)
      : Error(code, message), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace pcons
