#include "followbench/error.hpp"

namespace followbench {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::missing_column: return "MissingColumn";
    case Errc::non_uniform_timestep: return "NonUniformTimestep";
    case Errc::negative_speed: return "NegativeSpeed";
    case Errc::empty_file: return "EmptyFile";
    case Errc::inconsistent_rel_speed: return "InconsistentRelSpeed";
    case Errc::out_of_range: return "OutOfRange";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::io_error: return "IoError";
    case Errc::non_finite_input: return "NonFiniteInput";
    case Errc::predictor_failure: return "PredictorFailure";
    case Errc::invalid_stride: return "InvalidStride";
    case Errc::non_positive_spacing: return "NonPositiveSpacing";
    case Errc::insufficient_history: return "InsufficientHistory";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::empty_input: return "EmptyInput";
    case Errc::short_history: return "ShortHistory";
    case Errc::timeout: return "Timeout";
    case Errc::rate_limited: return "RateLimited";
    case Errc::auth_failure: return "AuthFailure";
    case Errc::malformed_reply: return "MalformedReply";
    case Errc::unparseable_reply: return "UnparseableReply";
    case Errc::backend_unavailable: return "BackendUnavailable";
    case Errc::insufficient_data: return "InsufficientData";
  }
  return "UnknownError";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

void raise(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace followbench
