#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fedirr {

enum class Errc {
  invalid_input,
  dimension_mismatch,
  empty_dataset,
  diverged,
  empty_update_set,
  round_mismatch,
  encode_error,
  malformed_payload,
  unknown_type,
  schema_violation,
  frame_too_large,
  connection_closed,
  clean_close,
  io_error,
  no_participants,
  bind_error,
  corrupt_checkpoint,
  config_error,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure raised by this library. The code identifies the failure
/// class; what() carries a human-readable detail.
class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(detail), code_(code) {}

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

} // namespace fedirr
