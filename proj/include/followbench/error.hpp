#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace followbench {

// Error vocabulary shared across the library. Codes are stable identifiers;
// messages carry the offending event id / row / value.
enum class Errc {
  // ingestion / validation
  missing_column,
  non_uniform_timestep,
  negative_speed,
  empty_file,
  inconsistent_rel_speed,
  out_of_range,
  invalid_argument,
  io_error,
  // kinematics
  non_finite_input,
  predictor_failure,
  invalid_stride,
  // physics models
  non_positive_spacing,
  insufficient_history,
  // metrics
  length_mismatch,
  empty_input,
  // llm
  short_history,
  timeout,
  rate_limited,
  auth_failure,
  malformed_reply,
  unparseable_reply,
  backend_unavailable,
  insufficient_data,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void raise(Errc code, const std::string& message);

}  // namespace followbench
