#include "followbench/text.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "followbench/error.hpp"

namespace followbench::text {

std::string fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

std::string trimmed(double value, int max_decimals) {
  std::string s = fixed(value, max_decimals);
  if (s.find('.') != std::string::npos) {
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

std::string compact(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", value);
  return buf;
}

double parse_double(std::string_view token, const std::string& context) {
  token = trim(token);
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || token.empty()) {
    raise(Errc::io_error, "malformed number '" + std::string(token) + "' in " + context);
  }
  if (!std::isfinite(value)) {
    raise(Errc::io_error, "non-finite number '" + std::string(token) + "' in " + context);
  }
  return value;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace followbench::text
