#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "followbench/events.hpp"

namespace followbench::kin {

// Trapezoidal spacing update: the gap changes by the average of the relative
// speed at both ends of the interval times the interval length.
//   s(t+dt) = s(t) + (dv(t) + dv(t+dt)) / 2 * dt
// All inputs must be finite (Errc::non_finite_input). The result may be
// negative; callers decide what a negative gap means.
double step_spacing(double spacing, double rel_speed_now, double rel_speed_next, double dt);

// A model that proposes the following vehicle's speed `horizon` seconds past
// the last sample of `history`. History is simulated state once the rollout
// has passed warmup, so predictors feed on their own output.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual double predict(std::span<const events::StepState> history, double horizon) = 0;
  virtual std::string name() const = 0;
  // Minimum history span (seconds) the predictor needs before its first call.
  virtual double requires_warmup() const { return 0.0; }
};

struct SimStep {
  double t = 0.0;
  double spacing_sim = 0.0;
  double fv_speed_sim = 0.0;
  double lv_speed = 0.0;       // always copied from the record
  double rel_speed_sim = 0.0;  // lv_speed - fv_speed_sim
};

struct SimulatedTrajectory {
  std::string event_id;
  double dt = 0.1;
  double warmup_end = 0.0;  // steps with t <= warmup_end mirror the record
  std::vector<SimStep> steps;
  bool collided = false;                // any simulated spacing < 0
  std::optional<double> collision_t;    // time of the first negative spacing
};

// Closed-loop rollout of one event:
//  - steps up to `warmup` seconds copy the record;
//  - afterwards the predictor is queried every `stride` seconds with the
//    simulated history, and the follower speed ramps linearly from its
//    current value to the prediction across the stride's dt sub-steps;
//  - lead vehicle speed always comes from the record;
//  - spacing follows step_spacing; a negative gap sets the collision flag at
//    its first occurrence and the rollout keeps going.
// `stride` must be a positive multiple of event.dt (Errc::invalid_stride);
// `warmup` must sit on the grid, be at least predictor.requires_warmup() and
// leave at least one step to simulate (Errc::invalid_argument). Predictor
// exceptions and non-finite or negative proposals surface as
// Errc::predictor_failure tagged with the simulation time.
SimulatedTrajectory rollout(const events::CarFollowingEvent& event, Predictor& predictor,
                            double warmup, double stride);

// Reissues the recorded follower speed; rollout(playback) reproduces the
// record up to floating-point noise.
class PlaybackPredictor : public Predictor {
 public:
  explicit PlaybackPredictor(const events::CarFollowingEvent& event);
  double predict(std::span<const events::StepState> history, double horizon) override;
  std::string name() const override { return "playback"; }

 private:
  events::CarFollowingEvent event_;
};

// Proposes a fixed speed when constructed with one, otherwise holds the
// follower's current speed (zero acceleration).
class ConstantPredictor : public Predictor {
 public:
  ConstantPredictor() = default;
  explicit ConstantPredictor(double speed);
  double predict(std::span<const events::StepState> history, double horizon) override;
  std::string name() const override { return "constant"; }

 private:
  std::optional<double> speed_;
};

// Columns: event_id,t,spacing_sim,fv_speed_sim,lv_speed,rel_speed_sim,collided
void save_trajectory_csv(const SimulatedTrajectory& trajectory,
                         const std::filesystem::path& path);

}  // namespace followbench::kin
