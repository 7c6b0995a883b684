#include "followbench/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "followbench/kinematics.hpp"

namespace followbench::events {

namespace {

constexpr double kMinRecordedGap = 0.05;  // redraw events that get closer, m
constexpr int kMaxAttemptsPerEvent = 200;

std::vector<double> leader_profile(const LeaderSpec& spec, std::size_t n_steps,
                                   std::mt19937_64& rng) {
  std::uniform_real_distribution<double> base_dist(spec.base_speed_lo, spec.base_speed_hi);
  const double base = base_dist(rng);
  std::vector<double> v(n_steps, base);

  switch (spec.kind) {
    case LeaderSpec::Kind::constant:
      break;
    case LeaderSpec::Kind::stop_and_go: {
      std::uniform_real_distribution<double> amp_dist(spec.amplitude_frac_lo,
                                                      spec.amplitude_frac_hi);
      std::uniform_real_distribution<double> period_dist(spec.period_lo, spec.period_hi);
      std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
      const double amplitude = amp_dist(rng) * base;
      const double period = period_dist(rng);
      const double phase = phase_dist(rng);
      for (std::size_t k = 0; k < n_steps; ++k) {
        const double t = static_cast<double>(k) * spec.dt;
        v[k] = std::max(0.0, base + amplitude * std::sin(2.0 * std::numbers::pi * t / period +
                                                         phase));
      }
      break;
    }
    case LeaderSpec::Kind::random_walk: {
      std::normal_distribution<double> accel_dist(0.0, spec.accel_sigma);
      for (std::size_t k = 1; k < n_steps; ++k) {
        v[k] = std::clamp(v[k - 1] + accel_dist(rng) * spec.dt, 0.0, 30.0);
      }
      break;
    }
  }
  return v;
}

// Rough equilibrium gap for the initial condition; exactness does not matter,
// the follower settles on its own within a second or two.
double initial_gap(const models::ModelParams& params, double v) {
  if (const auto* idm = std::get_if<models::IdmParams>(&params)) {
    const double s_star = idm->s0 + v * idm->t_hw;
    const double free_term = 1.0 - std::pow(v / idm->v0, idm->delta);
    if (free_term <= 0.02) return 2.0 * s_star + 5.0;
    return s_star / std::sqrt(free_term);
  }
  return 8.0 + 1.2 * v;
}

CarFollowingEvent simulate_follower(const LeaderSpec& spec, const models::ModelParams& params,
                                    const std::vector<double>& lv, double gap0) {
  const models::AccelLimits limits;
  const std::size_t n = lv.size();
  std::size_t delay_steps = 0;
  if (const auto* ghr = std::get_if<models::GhrParams>(&params)) {
    delay_steps = static_cast<std::size_t>(std::llround(ghr->tau / spec.dt));
  }

  CarFollowingEvent event;
  event.dt = spec.dt;
  event.steps.resize(n);
  event.steps[0] = {0.0, gap0, lv[0], lv[0], 0.0};

  for (std::size_t k = 0; k + 1 < n; ++k) {
    const StepState& now = event.steps[k];
    double accel = 0.0;
    if (const auto* idm = std::get_if<models::IdmParams>(&params)) {
      accel = models::idm_accel(*idm, now.fv_speed, now.fv_speed - now.lv_speed, now.spacing);
    } else if (k >= delay_steps) {
      const StepState& past = event.steps[k - delay_steps];
      accel = models::ghr_accel(std::get<models::GhrParams>(params), now.fv_speed,
                                past.rel_speed, past.spacing);
    }
    if (!std::isfinite(accel)) accel = 0.0;
    accel = std::clamp(accel, -limits.b_emergency, limits.a_hard_max);

    StepState& next = event.steps[k + 1];
    next.t = static_cast<double>(k + 1) * spec.dt;
    next.lv_speed = lv[k + 1];
    next.fv_speed = std::max(0.0, now.fv_speed + accel * spec.dt);
    next.rel_speed = next.lv_speed - next.fv_speed;
    next.spacing = kin::step_spacing(now.spacing, now.rel_speed, next.rel_speed, spec.dt);
    if (next.spacing <= kMinRecordedGap) break;  // reject below; spacing stays invalid
  }
  return event;
}

}  // namespace

std::vector<CarFollowingEvent> synth_events(const LeaderSpec& leader,
                                            const models::ModelParams& follower, int n,
                                            std::uint64_t seed) {
  if (n < 1) raise(Errc::invalid_argument, "synth_events: n must be >= 1");
  if (!(leader.dt > 0.0) || !(leader.duration > leader.dt)) {
    raise(Errc::invalid_argument, "synth_events: need duration > dt > 0");
  }
  const auto n_steps = static_cast<std::size_t>(std::llround(leader.duration / leader.dt)) + 1;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter_dist(0.95, 1.35);

  std::vector<CarFollowingEvent> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    CarFollowingEvent event;
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxAttemptsPerEvent && !accepted; ++attempt) {
      const std::vector<double> lv = leader_profile(leader, n_steps, rng);
      const double gap0 = std::max(2.0, initial_gap(follower, lv[0]) * jitter_dist(rng));
      event = simulate_follower(leader, follower, lv, gap0);
      accepted = std::all_of(event.steps.begin(), event.steps.end(),
                             [](const StepState& s) { return s.spacing > kMinRecordedGap; });
    }
    if (!accepted) {
      raise(Errc::invalid_argument,
            "synth_events: could not generate a collision-free event; widen the leader spec");
    }
    char id[64];
    std::snprintf(id, sizeof(id), "synth-%llu-%03d", static_cast<unsigned long long>(seed), i);
    event.event_id = id;
    event.source = "synth:" + std::string(models::model_name(models::kind_of(follower)));
    out.push_back(validate_event(std::move(event)));
  }
  return out;
}

}  // namespace followbench::events
