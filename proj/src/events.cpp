#include "followbench/events.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "followbench/text.hpp"

namespace followbench::events {

namespace {

constexpr double kGridTol = 1e-9;      // timestamp grid tolerance, s
constexpr double kRelSpeedTol = 0.01;  // rel_speed consistency tolerance, m/s

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(text::trim(line.substr(start)));
      break;
    }
    out.push_back(text::trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

std::vector<CarFollowingEvent> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::io_error, "cannot open '" + path.string() + "'");

  std::string header_line;
  if (!std::getline(in, header_line)) raise(Errc::empty_file, "'" + path.string() + "' is empty");
  if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();

  const auto header = split_csv_line(header_line);
  std::unordered_map<std::string_view, std::size_t> columns;
  for (std::size_t i = 0; i < header.size(); ++i) columns[header[i]] = i;

  auto column = [&](std::string_view name, bool required) -> std::size_t {
    auto it = columns.find(name);
    if (it == columns.end()) {
      if (required) {
        raise(Errc::missing_column,
              "'" + path.string() + "' has no '" + std::string(name) + "' column");
      }
      return std::numeric_limits<std::size_t>::max();
    }
    return it->second;
  };
  const std::size_t c_id = column("event_id", true);
  const std::size_t c_t = column("t", true);
  const std::size_t c_spacing = column("spacing", true);
  const std::size_t c_lv = column("lv_speed", true);
  const std::size_t c_fv = column("fv_speed", true);
  const std::size_t c_rel = column("rel_speed", false);
  const bool has_rel = c_rel != std::numeric_limits<std::size_t>::max();

  std::vector<CarFollowingEvent> out;
  std::string line;
  std::size_t row = 1;  // header was row 1
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < header.size()) {
      raise(Errc::io_error, "row " + std::to_string(row) + " of '" + path.string() + "' has " +
                                std::to_string(fields.size()) + " fields, expected " +
                                std::to_string(header.size()));
    }
    const std::string context = "row " + std::to_string(row) + " of '" + path.string() + "'";
    StepState step;
    step.t = text::parse_double(fields[c_t], context);
    step.spacing = text::parse_double(fields[c_spacing], context);
    step.lv_speed = text::parse_double(fields[c_lv], context);
    step.fv_speed = text::parse_double(fields[c_fv], context);
    step.rel_speed = has_rel ? text::parse_double(fields[c_rel], context)
                             : std::numeric_limits<double>::quiet_NaN();

    const std::string id{fields[c_id]};
    if (out.empty() || out.back().event_id != id) {
      CarFollowingEvent event;
      event.event_id = id;
      event.source = path.filename().string();
      out.push_back(std::move(event));
    }
    out.back().steps.push_back(step);
  }
  if (out.empty()) raise(Errc::empty_file, "'" + path.string() + "' has no data rows");
  return out;
}

std::vector<CarFollowingEvent> load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::io_error, "cannot open '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::io_error, "cannot parse '" + path.string() + "': " + e.what());
  }
  if (!doc.is_array()) raise(Errc::io_error, "'" + path.string() + "' is not a JSON array");
  if (doc.empty()) raise(Errc::empty_file, "'" + path.string() + "' has no events");

  auto require = [&](const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) {
      raise(Errc::missing_column, where + " in '" + path.string() + "' has no '" + key + "' key");
    }
  };

  std::vector<CarFollowingEvent> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& obj = doc[i];
    const std::string where = "event " + std::to_string(i);
    require(obj, "event_id", where);
    require(obj, "dt", where);
    require(obj, "steps", where);
    CarFollowingEvent event;
    event.event_id = obj["event_id"].get<std::string>();
    event.dt = obj["dt"].get<double>();
    event.source = obj.value("source", path.filename().string());
    for (const auto& s : obj["steps"]) {
      for (const char* key : {"t", "spacing", "lv_speed", "fv_speed"}) {
        require(s, key, "a step of " + where);
      }
      StepState step;
      step.t = s["t"].get<double>();
      step.spacing = s["spacing"].get<double>();
      step.lv_speed = s["lv_speed"].get<double>();
      step.fv_speed = s["fv_speed"].get<double>();
      step.rel_speed = s.contains("rel_speed") ? s["rel_speed"].get<double>()
                                               : std::numeric_limits<double>::quiet_NaN();
      event.steps.push_back(step);
    }
    out.push_back(std::move(event));
  }
  return out;
}

void save_csv(std::span<const CarFollowingEvent> events, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) raise(Errc::io_error, "cannot write '" + path.string() + "'");
  out << "event_id,t,spacing,lv_speed,fv_speed,rel_speed\n";
  for (const auto& event : events) {
    for (const auto& s : event.steps) {
      out << event.event_id << ',' << text::compact(s.t) << ',' << text::compact(s.spacing) << ','
          << text::compact(s.lv_speed) << ',' << text::compact(s.fv_speed) << ','
          << text::compact(s.rel_speed) << '\n';
    }
  }
  if (!out) raise(Errc::io_error, "failed writing '" + path.string() + "'");
}

void save_json(std::span<const CarFollowingEvent> events, const std::filesystem::path& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& event : events) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : event.steps) {
      steps.push_back({{"t", s.t},
                       {"spacing", s.spacing},
                       {"lv_speed", s.lv_speed},
                       {"fv_speed", s.fv_speed},
                       {"rel_speed", s.rel_speed}});
    }
    doc.push_back({{"event_id", event.event_id},
                   {"dt", event.dt},
                   {"source", event.source},
                   {"steps", std::move(steps)}});
  }
  std::ofstream out(path);
  if (!out) raise(Errc::io_error, "cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
  if (!out) raise(Errc::io_error, "failed writing '" + path.string() + "'");
}

}  // namespace

Format parse_format(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "csv") return Format::csv;
  if (lower == "json") return Format::json;
  raise(Errc::invalid_argument, "unknown event format '" + name + "' (expected csv or json)");
}

CarFollowingEvent validate_event(CarFollowingEvent event) {
  const std::string& id = event.event_id;
  if (event.steps.size() < 2) {
    raise(Errc::invalid_argument, "event '" + id + "' has fewer than 2 samples");
  }
  if (!(event.dt > 0.0) || !std::isfinite(event.dt)) {
    raise(Errc::invalid_argument, "event '" + id + "' has non-positive dt");
  }
  for (std::size_t i = 0; i < event.steps.size(); ++i) {
    StepState& s = event.steps[i];
    const std::string where = "event '" + id + "' step " + std::to_string(i);
    if (!std::isfinite(s.t) || !std::isfinite(s.spacing) || !std::isfinite(s.lv_speed) ||
        !std::isfinite(s.fv_speed)) {
      raise(Errc::non_finite_input, where + " has a non-finite value");
    }
    if (s.lv_speed < 0.0 || s.fv_speed < 0.0) {
      raise(Errc::negative_speed, where + " has a negative speed");
    }
    if (!(s.spacing > 0.0)) {
      raise(Errc::non_positive_spacing, where + " has spacing " + text::compact(s.spacing));
    }
    if (i + 1 < event.steps.size()) {
      const double gap = event.steps[i + 1].t - s.t;
      if (std::abs(gap - event.dt) > kGridTol) {
        raise(Errc::non_uniform_timestep,
              where + ": timestamp gap " + text::compact(gap) + " != dt " +
                  text::compact(event.dt));
      }
    }
    const double derived = s.lv_speed - s.fv_speed;
    if (!std::isnan(s.rel_speed) && std::abs(s.rel_speed - derived) > kRelSpeedTol) {
      raise(Errc::inconsistent_rel_speed,
            where + ": rel_speed " + text::compact(s.rel_speed) + " vs lv-fv " +
                text::compact(derived));
    }
    s.rel_speed = derived;
  }
  return event;
}

std::vector<CarFollowingEvent> load_events(const std::filesystem::path& path, Format format) {
  std::vector<CarFollowingEvent> raw =
      format == Format::csv ? load_csv(path) : load_json(path);
  if (format == Format::csv) {
    // dt is not part of the CSV schema; derive it from the first two rows of
    // each event. validate_event then checks the whole grid against it.
    for (auto& event : raw) {
      if (event.steps.size() < 2) {
        raise(Errc::invalid_argument,
              "event '" + event.event_id + "' in '" + path.string() + "' has fewer than 2 rows");
      }
      event.dt = event.steps[1].t - event.steps[0].t;
    }
  }
  std::vector<CarFollowingEvent> out;
  out.reserve(raw.size());
  for (auto& event : raw) out.push_back(validate_event(std::move(event)));
  return out;
}

void save_events(std::span<const CarFollowingEvent> events, const std::filesystem::path& path,
                 Format format) {
  if (format == Format::csv) {
    save_csv(events, path);
  } else {
    save_json(events, path);
  }
}

std::vector<StepState> slice_history(const CarFollowingEvent& event, double t_now, double window) {
  if (event.steps.empty()) raise(Errc::invalid_argument, "slice_history: event has no steps");
  if (!(window > 0.0)) raise(Errc::invalid_argument, "slice_history: window must be positive");
  const double t0 = event.steps.front().t;
  const double dt = event.dt;

  auto grid_index = [&](double t, const char* what) -> std::size_t {
    const double k = (t - t0) / dt;
    const auto rounded = static_cast<long long>(std::llround(k));
    if (std::abs(k - static_cast<double>(rounded)) > 1e-6 / dt) {
      raise(Errc::out_of_range, std::string("slice_history: ") + what + " " + text::compact(t) +
                                    " is not on the dt grid of event '" + event.event_id + "'");
    }
    return static_cast<std::size_t>(std::max(rounded, 0LL));
  };

  if (t_now - window < t0 - 1e-9 || t_now > event.steps.back().t + 1e-9) {
    raise(Errc::out_of_range, "slice_history: [" + text::compact(t_now - window) + ", " +
                                  text::compact(t_now) + "] is outside event '" + event.event_id +
                                  "'");
  }
  const std::size_t i_now = grid_index(t_now, "t_now");
  const auto n_window = static_cast<std::size_t>(std::llround(window / dt));
  if (std::abs(window / dt - static_cast<double>(n_window)) > 1e-6) {
    raise(Errc::out_of_range,
          "slice_history: window " + text::compact(window) + " is not a multiple of dt");
  }
  if (i_now < n_window || i_now >= event.steps.size()) {
    raise(Errc::out_of_range, "slice_history: range ends outside event '" + event.event_id + "'");
  }
  const std::size_t first = i_now - n_window;
  return {event.steps.begin() + static_cast<std::ptrdiff_t>(first),
          event.steps.begin() + static_cast<std::ptrdiff_t>(i_now) + 1};
}

}  // namespace followbench::events
