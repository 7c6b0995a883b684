#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "followbench/error.hpp"

namespace followbench::events {

// One sample of a leader/follower pair. rel_speed is lv_speed - fv_speed, so a
// positive value means the gap is opening. Loaders that find no rel_speed
// column store NaN here; validate_event recomputes it either way.
struct StepState {
  double t = 0.0;          // seconds since event start
  double spacing = 0.0;    // bumper-to-bumper gap, m
  double lv_speed = 0.0;   // lead vehicle speed, m/s
  double fv_speed = 0.0;   // following vehicle speed, m/s
  double rel_speed = 0.0;  // lv_speed - fv_speed, m/s
};

struct CarFollowingEvent {
  std::string event_id;
  double dt = 0.1;  // sampling interval, s
  std::vector<StepState> steps;
  std::string source;  // free-form provenance tag ("synth:idm", file name, ...)

  double duration() const { return steps.empty() ? 0.0 : steps.back().t - steps.front().t; }
};

enum class Format { csv, json };

// Parses "csv"/"json" (case-insensitive); Errc::invalid_argument otherwise.
Format parse_format(const std::string& name);

// Checks an event against the data contract and returns the normalized copy:
//  - at least two samples, dt > 0
//  - timestamps strictly increasing with constant gap dt (tolerance 1e-9 s)
//  - speeds >= 0, spacing > 0
//  - rel_speed within 0.01 m/s of lv_speed - fv_speed when present (non-NaN)
// rel_speed is always recomputed exactly as lv_speed - fv_speed. No rounding
// happens here; values are rounded only at prompt-rendering time.
CarFollowingEvent validate_event(CarFollowingEvent event);

// Loads events from a CSV (columns event_id,t,spacing,lv_speed,fv_speed and
// optional rel_speed; consecutive rows with the same event_id form an event)
// or a JSON array of {event_id, dt, steps:[...]} objects. Every returned
// event has passed validate_event.
std::vector<CarFollowingEvent> load_events(const std::filesystem::path& path, Format format);

void save_events(std::span<const CarFollowingEvent> events, const std::filesystem::path& path,
                 Format format);

// Returns copies of the samples in [t_now - window, t_now], both endpoints
// included. t_now and window must sit on the event's dt grid and the range
// must lie inside the event, else Errc::out_of_range. A 4.0 s window at
// dt 0.1 yields 41 samples.
std::vector<StepState> slice_history(const CarFollowingEvent& event, double t_now, double window);

}  // namespace followbench::events
