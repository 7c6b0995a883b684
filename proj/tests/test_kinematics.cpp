#include <followbench/kinematics.hpp>
#include <followbench/synth.hpp>

#include <cmath>
#include <limits>
#include <sstream>

#include "test_util.hpp"

using namespace followbench;
using fbtest::code_of;
using fbtest::make_event;

namespace {

// Records what the rollout hands the predictor and throws on demand.
class ProbePredictor : public kin::Predictor {
 public:
  double speed = 1.0;
  bool throw_runtime = false;
  std::vector<double> call_times;

  double predict(std::span<const events::StepState> history, double) override {
    call_times.push_back(history.back().t);
    if (throw_runtime) throw std::runtime_error("probe exploded");
    return speed;
  }
  std::string name() const override { return "probe"; }
};

events::CarFollowingEvent flat_event(double lv, double fv, double spacing, double dt, int n) {
  std::vector<std::array<double, 4>> rows;
  for (int i = 0; i < n; ++i) rows.push_back({dt * i, spacing, lv, fv});
  return events::validate_event(make_event("flat", dt, rows));
}

}  // namespace

TEST_CASE("step_spacing applies the trapezoid rule") {
  CHECK(kin::step_spacing(10.0, 1.0, 1.0, 0.1) == 10.1);
  CHECK(kin::step_spacing(10.0, 0.0, 0.0, 1.0) == 10.0);
  CHECK(kin::step_spacing(5.0, -2.0, 0.0, 1.0) == 4.0);
  CHECK(kin::step_spacing(2.0, -3.0, -1.0, 0.5) == 1.0);
  CHECK(kin::step_spacing(1.0, -2.0, -2.0, 0.1) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("step_spacing rejects non-finite inputs") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(code_of([&] { kin::step_spacing(nan, 0.0, 0.0, 0.1); }) == Errc::non_finite_input);
  CHECK(code_of([&] { kin::step_spacing(1.0, inf, 0.0, 0.1); }) == Errc::non_finite_input);
  CHECK(code_of([&] { kin::step_spacing(1.0, 0.0, 0.0, nan); }) == Errc::non_finite_input);
}

TEST_CASE("chained trapezoid steps integrate a linear rel_speed exactly") {
  // For rel_speed(t) = a + b*t the trapezoid rule is exact, so the chained
  // spacing must match the closed form s0 + a*T + b*T^2/2 to rounding noise.
  const double a = -1.25, b = 0.4, dt = 0.1, s0 = 30.0;
  double s = s0;
  for (int k = 0; k < 100; ++k) {
    const double t0 = dt * k, t1 = dt * (k + 1);
    s = kin::step_spacing(s, a + b * t0, a + b * t1, dt);
  }
  const double T = 10.0;
  CHECK(s == doctest::Approx(s0 + a * T + b * T * T / 2.0).epsilon(1e-12));
}

TEST_CASE("rollout mirrors the record during warmup") {
  events::LeaderSpec spec;
  spec.duration = 8.0;
  const auto event = events::synth_events(spec, models::default_idm_params(), 1, 21)[0];

  ProbePredictor probe;
  probe.speed = 3.0;
  const auto traj = kin::rollout(event, probe, 2.0, event.dt);

  CHECK(traj.event_id == event.event_id);
  CHECK(traj.dt == event.dt);
  CHECK(traj.warmup_end == event.steps[20].t);  // absolute timestamp, 2 s at dt 0.1
  REQUIRE(traj.steps.size() == event.steps.size());
  for (std::size_t k = 0; k <= 20; ++k) {
    CHECK(traj.steps[k].t == event.steps[k].t);
    CHECK(traj.steps[k].spacing_sim == event.steps[k].spacing);   // byte-for-byte copy
    CHECK(traj.steps[k].fv_speed_sim == event.steps[k].fv_speed);
    CHECK(traj.steps[k].lv_speed == event.steps[k].lv_speed);
  }
  // The lead vehicle comes from the record even after warmup.
  for (std::size_t k = 0; k < traj.steps.size(); ++k) {
    CHECK(traj.steps[k].lv_speed == event.steps[k].lv_speed);
  }
  // First prediction happens at the warmup boundary, then every stride.
  REQUIRE(!probe.call_times.empty());
  CHECK(probe.call_times.front() == event.steps[20].t);
  CHECK(probe.call_times.size() == event.steps.size() - 21);
}

TEST_CASE("rollout with the playback predictor reproduces the record") {
  events::LeaderSpec spec;
  spec.duration = 12.0;
  const auto event = events::synth_events(spec, models::default_idm_params(), 1, 5)[0];

  kin::PlaybackPredictor playback(event);
  const auto traj = kin::rollout(event, playback, 1.0, event.dt);

  REQUIRE(traj.steps.size() == event.steps.size());
  for (std::size_t k = 0; k < event.steps.size(); ++k) {
    CHECK(traj.steps[k].fv_speed_sim ==
          doctest::Approx(event.steps[k].fv_speed).epsilon(1e-12));
    CHECK(traj.steps[k].spacing_sim == doctest::Approx(event.steps[k].spacing).epsilon(1e-9));
  }
  CHECK_FALSE(traj.collided);
}

TEST_CASE("rollout flags a collision at its first negative spacing and keeps going") {
  // Leader and follower are parked 1 m apart; the predictor floors the
  // follower at 2 m/s, so the gap shrinks by 0.2 m per 0.1 s step after the
  // one-step ramp: 1.0, 0.9, 0.7, 0.5, 0.3, 0.1, -0.1 -> collision at t=0.6.
  const auto event = flat_event(0.0, 0.0, 1.0, 0.1, 15);
  kin::ConstantPredictor two(2.0);
  const auto traj = kin::rollout(event, two, 0.0, 0.1);

  REQUIRE(traj.steps.size() == 15);
  CHECK(traj.collided);
  REQUIRE(traj.collision_t.has_value());
  CHECK(*traj.collision_t == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(traj.steps[5].spacing_sim > 0.0);
  CHECK(traj.steps[6].spacing_sim < 0.0);
  CHECK(traj.steps[14].spacing_sim < traj.steps[6].spacing_sim);  // keeps integrating
}

TEST_CASE("rollout ramps the follower toward a constant zero-speed proposal") {
  const auto event = flat_event(5.0, 5.0, 10.0, 0.1, 21);
  kin::ConstantPredictor zero(0.0);
  const auto traj = kin::rollout(event, zero, 0.0, 0.1);

  // The follower stops after one step; the 5 m/s leader opens the gap by
  // 0.25 m over the ramp step and 0.5 m per step thereafter.
  CHECK(traj.steps[1].fv_speed_sim == 0.0);
  CHECK(traj.steps.back().spacing_sim == doctest::Approx(19.75).epsilon(1e-12));
  CHECK_FALSE(traj.collided);
}

TEST_CASE("rollout spreads a long stride across linear sub-steps") {
  const auto event = flat_event(4.0, 4.0, 12.0, 0.1, 11);
  kin::ConstantPredictor two(2.0);
  const auto traj = kin::rollout(event, two, 0.0, 0.5);  // stride = 5 sub-steps

  // fv ramps 4.0 -> 2.0 linearly over 5 steps, then stays (new window starts
  // at 2.0 and proposes 2.0).
  for (int j = 0; j <= 5; ++j) {
    CHECK(traj.steps[static_cast<std::size_t>(j)].fv_speed_sim ==
          doctest::Approx(4.0 - 0.4 * j).epsilon(1e-12));
  }
  CHECK(traj.steps[7].fv_speed_sim == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(traj.steps[10].fv_speed_sim == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("rollout validates stride and warmup") {
  const auto event = flat_event(5.0, 5.0, 10.0, 0.1, 31);
  kin::ConstantPredictor hold;

  CHECK(code_of([&] { kin::rollout(event, hold, 0.0, 0.15); }) == Errc::invalid_stride);
  CHECK(code_of([&] { kin::rollout(event, hold, 0.0, 0.0); }) == Errc::invalid_stride);
  CHECK(code_of([&] { kin::rollout(event, hold, 0.05, 0.1); }) == Errc::invalid_argument);
  CHECK(code_of([&] { kin::rollout(event, hold, 3.0, 0.1); }) == Errc::invalid_argument);

  // A predictor that needs warmup rejects a shorter one.
  models::GhrPredictor ghr(models::GhrParams{});  // tau = 0.5 s
  CHECK(code_of([&] { kin::rollout(event, ghr, 0.2, 0.1); }) == Errc::invalid_argument);
  CHECK_NOTHROW(kin::rollout(event, ghr, 0.5, 0.1));
}

TEST_CASE("rollout wraps predictor problems as predictor_failure with the time") {
  const auto event = flat_event(5.0, 5.0, 10.0, 0.1, 31);

  ProbePredictor thrower;
  thrower.throw_runtime = true;
  try {
    kin::rollout(event, thrower, 1.0, 0.1);
    FAIL("expected predictor_failure");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::predictor_failure);
    CHECK(std::string(e.what()).find("t=1") != std::string::npos);
    CHECK(std::string(e.what()).find("probe exploded") != std::string::npos);
  }

  ProbePredictor negative;
  negative.speed = -0.5;
  CHECK(code_of([&] { kin::rollout(event, negative, 0.0, 0.1); }) == Errc::predictor_failure);

  ProbePredictor nan;
  nan.speed = std::numeric_limits<double>::quiet_NaN();
  CHECK(code_of([&] { kin::rollout(event, nan, 0.0, 0.1); }) == Errc::predictor_failure);
}

TEST_CASE("constant predictor validates its fixed speed and holds by default") {
  CHECK(code_of([] { kin::ConstantPredictor(-1.0); }) == Errc::invalid_argument);
  CHECK(code_of([] { kin::ConstantPredictor(std::numeric_limits<double>::infinity()); }) ==
        Errc::invalid_argument);

  const auto event = flat_event(6.0, 6.0, 15.0, 0.1, 21);
  kin::ConstantPredictor hold;  // no fixed speed: zero acceleration
  const auto traj = kin::rollout(event, hold, 0.0, 0.1);
  for (const auto& s : traj.steps) {
    CHECK(s.fv_speed_sim == 6.0);
    CHECK(s.spacing_sim == 15.0);
  }
}

TEST_CASE("save_trajectory_csv reports a sticky collided flag") {
  const auto event = flat_event(0.0, 0.0, 1.0, 0.1, 10);
  kin::ConstantPredictor two(2.0);
  const auto traj = kin::rollout(event, two, 0.0, 0.1);

  const auto dir = fbtest::temp_dir();
  const auto path = dir / "traj.csv";
  kin::save_trajectory_csv(traj, path);
  std::istringstream in(fbtest::read_file(path));
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "event_id,t,spacing_sim,fv_speed_sim,lv_speed,rel_speed_sim,collided");
  int rows = 0;
  bool seen_one = false;
  while (std::getline(in, line)) {
    REQUIRE(!line.empty());
    const char flag = line.back();
    if (flag == '1') seen_one = true;
    if (seen_one) CHECK(flag == '1');  // once collided, stays collided
    ++rows;
  }
  CHECK(rows == 10);
  CHECK(seen_one);
  std::filesystem::remove_all(dir);
}
