#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>

#include "followbench/llm.hpp"
#include "followbench/text.hpp"

namespace followbench::llm {

namespace {

constexpr double kAbsurdSpeed = 1e4;  // m/s; anything beyond is a parse artifact

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

double checked_speed(const std::string& token, const std::string& raw) {
  const double value = text::parse_double(token, "llm reply");
  if (!std::isfinite(value) || std::abs(value) > kAbsurdSpeed) {
    raise(Errc::unparseable_reply, "no plausible speed in reply: " + raw.substr(0, 120));
  }
  return value;
}

std::string after(const std::string& s, std::size_t pos) {
  return std::string(text::trim(std::string_view(s).substr(pos)));
}

}  // namespace

ParsedReply parse_response(const std::string& raw) {
  static const std::regex structured(R"(Predicted speed:\s*(-?\d+(?:\.\d+)?)\s*m/s)");
  static const std::regex explanation_re(R"(Explanation:\s*)");
  static const std::regex number_unit(R"((-?\d+(?:\.\d+)?)\s*m/s)");
  static const std::regex bare_number(R"((-?\d+(?:\.\d+)?))");

  std::smatch m;
  if (std::regex_search(raw, m, structured)) {
    ParsedReply reply;
    reply.method = ParsedReply::Method::structured;
    reply.speed = checked_speed(m[1].str(), raw);
    std::smatch em;
    if (std::regex_search(raw, em, explanation_re)) {
      reply.explanation = after(raw, static_cast<std::size_t>(em.position(0) + em.length(0)));
    } else {
      reply.explanation = after(raw, static_cast<std::size_t>(m.position(0) + m.length(0)));
    }
    if (reply.explanation.empty()) reply.explanation = std::string(text::trim(raw));
    return reply;
  }

  // Tolerant scan: prefer a number with an m/s unit, ideally after a "speed"
  // keyword, then a bare number trailing the keyword.
  const std::string lower = lowercase(raw);
  const std::size_t keyword = lower.find("speed");

  auto finish = [&](const std::string& token, std::size_t end_pos) {
    ParsedReply reply;
    reply.method = ParsedReply::Method::regex_fallback;
    reply.speed = checked_speed(token, raw);
    reply.explanation = after(raw, end_pos);
    if (reply.explanation.empty()) reply.explanation = std::string(text::trim(raw));
    return reply;
  };

  std::vector<std::pair<std::size_t, std::smatch>> with_unit;
  for (auto it = std::sregex_iterator(raw.begin(), raw.end(), number_unit);
       it != std::sregex_iterator(); ++it) {
    with_unit.emplace_back(static_cast<std::size_t>(it->position(0)), *it);
  }
  if (!with_unit.empty()) {
    // First unit-tagged number at or after the keyword, else the first one.
    for (const auto& [pos, match] : with_unit) {
      if (keyword != std::string::npos && pos >= keyword) {
        return finish(match[1].str(), pos + static_cast<std::size_t>(match.length(0)));
      }
    }
    const auto& [pos, match] = with_unit.front();
    return finish(match[1].str(), pos + static_cast<std::size_t>(match.length(0)));
  }

  if (keyword != std::string::npos) {
    const std::string tail = raw.substr(keyword);
    std::smatch nm;
    if (std::regex_search(tail, nm, bare_number)) {
      return finish(nm[1].str(),
                    keyword + static_cast<std::size_t>(nm.position(0) + nm.length(0)));
    }
  }
  raise(Errc::unparseable_reply, "no candidate speed in reply: " + raw.substr(0, 120));
}

FilterResult safety_filter(double predicted, double v_now, double horizon,
                           const SafetyLimits& limits) {
  if (!(limits.a_max_f > 0.0) || !(limits.b_max_f > 0.0) || !(limits.v_cap > 0.0)) {
    raise(Errc::invalid_argument, "safety_filter: limits must be positive");
  }
  if (!(horizon > 0.0) || !std::isfinite(v_now) || v_now < 0.0) {
    raise(Errc::invalid_argument, "safety_filter: bad horizon or current speed");
  }
  const double lo_raw = v_now - limits.b_max_f * horizon;
  const double lo = std::max(0.0, lo_raw);
  const double hi = std::min(limits.v_cap, v_now + limits.a_max_f * horizon);

  if (!std::isfinite(predicted)) return {lo, true, "non-finite prediction"};
  if (predicted < lo) {
    return {lo, true, lo_raw <= 0.0 ? "non-negative speed" : "deceleration cap"};
  }
  if (predicted > hi) {
    return {hi, true, hi < limits.v_cap ? "acceleration cap" : "speed cap"};
  }
  return {predicted, false, ""};
}

}  // namespace followbench::llm
