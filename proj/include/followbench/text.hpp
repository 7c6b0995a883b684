#pragma once

#include <string>
#include <string_view>

namespace followbench::text {

// "%.<decimals>f" rendering, locale independent.
std::string fixed(double value, int decimals);

// fixed(value, max_decimals) with trailing zeros (and a dangling '.') removed,
// so 5.00 -> "5", 4.20 -> "4.2", 13.58 -> "13.58". "-0" collapses to "0".
std::string trimmed(double value, int max_decimals = 2);

// Shortest-ish representation that round-trips through parse_double to within
// 1e-9 relative; used for CSV output.
std::string compact(double value);

// Strict double parser (std::from_chars). Throws Errc::io_error with
// `context` in the message when the token is not a full, finite number.
double parse_double(std::string_view token, const std::string& context);

// Whitespace trim used by the CSV/reply parsers.
std::string_view trim(std::string_view s);

}  // namespace followbench::text
