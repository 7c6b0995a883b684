#include "followbench/kinematics.hpp"

#include <cmath>
#include <fstream>

#include "followbench/text.hpp"

namespace followbench::kin {

double step_spacing(double spacing, double rel_speed_now, double rel_speed_next, double dt) {
  if (!std::isfinite(spacing) || !std::isfinite(rel_speed_now) || !std::isfinite(rel_speed_next) ||
      !std::isfinite(dt)) {
    raise(Errc::non_finite_input, "step_spacing received a non-finite input");
  }
  return spacing + (rel_speed_now + rel_speed_next) / 2.0 * dt;
}

namespace {

// Rounds t/dt to the nearest step index; `what` names the argument in errors.
long long grid_steps(double t, double dt, const char* what, Errc code) {
  const double k = t / dt;
  const long long rounded = std::llround(k);
  if (std::abs(static_cast<double>(rounded) * dt - t) > 1e-9) {
    raise(code, std::string(what) + " " + text::compact(t) + " is not a multiple of dt " +
                    text::compact(dt));
  }
  return rounded;
}

}  // namespace

SimulatedTrajectory rollout(const events::CarFollowingEvent& event, Predictor& predictor,
                            double warmup, double stride) {
  const std::size_t n = event.steps.size();
  if (n < 2) raise(Errc::invalid_argument, "rollout: event '" + event.event_id + "' is too short");
  const double dt = event.dt;

  if (!(stride > 0.0)) raise(Errc::invalid_stride, "stride must be positive");
  const long long m = grid_steps(stride, dt, "stride", Errc::invalid_stride);
  if (m < 1) raise(Errc::invalid_stride, "stride " + text::compact(stride) + " is below dt");

  if (warmup < 0.0) raise(Errc::invalid_argument, "warmup must be non-negative");
  const long long k_warm = grid_steps(warmup, dt, "warmup", Errc::invalid_argument);
  if (warmup < predictor.requires_warmup() - 1e-9) {
    raise(Errc::invalid_argument, "warmup " + text::compact(warmup) + " is below the " +
                                      text::compact(predictor.requires_warmup()) +
                                      " s required by predictor '" + predictor.name() + "'");
  }
  if (static_cast<std::size_t>(k_warm) >= n - 1) {
    raise(Errc::invalid_argument, "warmup " + text::compact(warmup) +
                                      " leaves nothing to simulate in event '" + event.event_id +
                                      "'");
  }

  SimulatedTrajectory traj;
  traj.event_id = event.event_id;
  traj.dt = dt;
  traj.warmup_end = event.steps[static_cast<std::size_t>(k_warm)].t;

  // Simulated state in record layout, so it can be handed to the predictor
  // as history. The warmup region mirrors the record.
  std::vector<events::StepState> sim;
  sim.reserve(n);
  for (std::size_t k = 0; k <= static_cast<std::size_t>(k_warm); ++k) {
    events::StepState s = event.steps[k];
    s.rel_speed = s.lv_speed - s.fv_speed;
    sim.push_back(s);
  }

  for (std::size_t origin = static_cast<std::size_t>(k_warm); origin < n - 1;
       origin += static_cast<std::size_t>(m)) {
    const double v_start = sim[origin].fv_speed;
    const double t_origin = sim[origin].t;
    double v_hat = 0.0;
    try {
      v_hat = predictor.predict(std::span<const events::StepState>(sim.data(), origin + 1), stride);
    } catch (const Error& e) {
      raise(Errc::predictor_failure, "predictor '" + predictor.name() + "' failed at t=" +
                                         text::compact(t_origin) + ": " + e.what());
    } catch (const std::exception& e) {
      raise(Errc::predictor_failure, "predictor '" + predictor.name() + "' failed at t=" +
                                         text::compact(t_origin) + ": " + e.what());
    }
    if (!std::isfinite(v_hat) || v_hat < 0.0) {
      raise(Errc::predictor_failure, "predictor '" + predictor.name() + "' proposed speed " +
                                         text::compact(v_hat) + " at t=" +
                                         text::compact(t_origin));
    }

    // The follower speed ramps linearly from v_start to v_hat over the
    // stride; the last window may be cut short by the end of the record.
    const std::size_t sub_steps = std::min(static_cast<std::size_t>(m), n - 1 - origin);
    for (std::size_t j = 1; j <= sub_steps; ++j) {
      const std::size_t idx = origin + j;
      events::StepState next;
      next.t = event.steps[idx].t;
      next.lv_speed = event.steps[idx].lv_speed;
      next.fv_speed = v_start + (v_hat - v_start) * (static_cast<double>(j) /
                                                     static_cast<double>(m));
      next.rel_speed = next.lv_speed - next.fv_speed;
      next.spacing = step_spacing(sim.back().spacing, sim.back().rel_speed, next.rel_speed, dt);
      sim.push_back(next);
    }
  }

  traj.steps.reserve(sim.size());
  for (const auto& s : sim) {
    traj.steps.push_back({s.t, s.spacing, s.fv_speed, s.lv_speed, s.rel_speed});
    if (s.spacing < 0.0 && !traj.collided) {
      traj.collided = true;
      traj.collision_t = s.t;
    }
  }
  return traj;
}

PlaybackPredictor::PlaybackPredictor(const events::CarFollowingEvent& event) : event_(event) {
  if (event_.steps.empty()) raise(Errc::invalid_argument, "playback: event has no steps");
}

double PlaybackPredictor::predict(std::span<const events::StepState> history, double horizon) {
  if (history.empty()) raise(Errc::invalid_argument, "playback: empty history");
  const double t0 = event_.steps.front().t;
  const double t_next = history.back().t + horizon;
  long long idx = std::llround((t_next - t0) / event_.dt);
  idx = std::clamp<long long>(idx, 0, static_cast<long long>(event_.steps.size()) - 1);
  return event_.steps[static_cast<std::size_t>(idx)].fv_speed;
}

ConstantPredictor::ConstantPredictor(double speed) : speed_(speed) {
  if (!std::isfinite(speed) || speed < 0.0) {
    raise(Errc::invalid_argument, "constant predictor speed must be finite and non-negative");
  }
}

double ConstantPredictor::predict(std::span<const events::StepState> history, double /*horizon*/) {
  if (speed_) return *speed_;
  if (history.empty()) raise(Errc::invalid_argument, "constant: empty history");
  return history.back().fv_speed;
}

void save_trajectory_csv(const SimulatedTrajectory& trajectory,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) raise(Errc::io_error, "cannot write '" + path.string() + "'");
  out << "event_id,t,spacing_sim,fv_speed_sim,lv_speed,rel_speed_sim,collided\n";
  bool collided = false;
  for (const auto& s : trajectory.steps) {
    if (s.spacing_sim < 0.0) collided = true;
    out << trajectory.event_id << ',' << text::compact(s.t) << ',' << text::compact(s.spacing_sim)
        << ',' << text::compact(s.fv_speed_sim) << ',' << text::compact(s.lv_speed) << ','
        << text::compact(s.rel_speed_sim) << ',' << (collided ? 1 : 0) << '\n';
  }
  if (!out) raise(Errc::io_error, "failed writing '" + path.string() + "'");
}

}  // namespace followbench::kin
