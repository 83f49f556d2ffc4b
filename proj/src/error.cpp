#include "fedirr/error.hpp"

namespace fedirr {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
  case Errc::invalid_input: return "InvalidInput";
  case Errc::dimension_mismatch: return "DimensionMismatch";
  case Errc::empty_dataset: return "EmptyDataset";
  case Errc::diverged: return "Diverged";
  case Errc::empty_update_set: return "EmptyUpdateSet";
  case Errc::round_mismatch: return "RoundMismatch";
  case Errc::encode_error: return "EncodeError";
  case Errc::malformed_payload: return "MalformedPayload";
  case Errc::unknown_type: return "UnknownType";
  case Errc::schema_violation: return "SchemaViolation";
  case Errc::frame_too_large: return "FrameTooLarge";
  case Errc::connection_closed: return "ConnectionClosed";
  case Errc::clean_close: return "CleanClose";
  case Errc::io_error: return "IoError";
  case Errc::no_participants: return "NoParticipants";
  case Errc::bind_error: return "BindError";
  case Errc::corrupt_checkpoint: return "CorruptCheckpoint";
  case Errc::config_error: return "ConfigError";
  }
  return "Unknown";
}

} // namespace fedirr
