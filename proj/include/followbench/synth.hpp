#pragma once

#include <cstdint>
#include <vector>

#include "followbench/baselines.hpp"
#include "followbench/events.hpp"

namespace followbench::events {

// Lead vehicle speed profile for synthetic traffic. Ranges are sampled
// uniformly per event, so a batch mixes calm and aggressive leaders.
struct LeaderSpec {
  enum class Kind { constant, stop_and_go, random_walk };
  Kind kind = Kind::stop_and_go;
  double duration = 15.0;  // event length, s
  double dt = 0.1;         // sampling interval, s

  double base_speed_lo = 5.0;  // mean leader speed range, m/s
  double base_speed_hi = 13.0;

  // stop_and_go: v(t) = max(0, base + A*sin(2*pi*t/P + phase)) with
  // A = amplitude_frac * base, so fractions near 1 produce full stops.
  double amplitude_frac_lo = 0.4;
  double amplitude_frac_hi = 1.0;
  double period_lo = 8.0;  // oscillation period range, s
  double period_hi = 20.0;

  double accel_sigma = 0.6;  // random_walk acceleration noise, m/s^2
};

// Generates n validated events: the leader follows `leader`, the follower is
// simulated by the given physics model (acceleration clamped to AccelLimits
// defaults, speed floored at zero) from a near-equilibrium initial gap.
// Candidate events whose recorded gap ever drops to 5 cm are redrawn, so the
// ground-truth data is collision free. The same seed reproduces the same
// events bit for bit. n must be >= 1.
std::vector<CarFollowingEvent> synth_events(const LeaderSpec& leader,
                                            const models::ModelParams& follower, int n,
                                            std::uint64_t seed);

}  // namespace followbench::events
