#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "followbench/kinematics.hpp"

namespace followbench::models {

enum class ModelKind { idm, ghr };

// Parses "idm"/"ghr" (case-insensitive); Errc::invalid_argument otherwise.
ModelKind parse_model_kind(const std::string& name);
std::string_view model_name(ModelKind kind);

struct IdmParams {
  double v0 = 15.0;    // desired speed, m/s
  double t_hw = 1.5;   // desired time headway, s
  double a_max = 1.0;  // maximum acceleration, m/s^2
  double b = 1.5;      // comfortable deceleration, m/s^2
  double delta = 4.0;  // acceleration exponent
  double s0 = 2.0;     // jam spacing, m
};

struct GhrParams {
  double c = 1.0;      // sensitivity coefficient
  double m_exp = 0.0;  // speed exponent
  double l_exp = 1.0;  // spacing exponent
  double tau = 0.5;    // reaction delay, s
};

using ModelParams = std::variant<IdmParams, GhrParams>;

ModelKind kind_of(const ModelParams& params);

// Conservative defaults used as the safety fallback and as the generating
// model for synthetic stop-and-go traffic.
IdmParams default_idm_params();

// IDM acceleration. dv_closing is the closing speed v_fv - v_lv (note the
// sign: positive when the follower is faster), matching the model's usual
// statement; it is the negative of StepState::rel_speed.
//   a = a_max * (1 - (v/v0)^delta - (s*/s)^2)
//   s* = s0 + v*t_hw + v*dv_closing / (2*sqrt(a_max*b))
// Requires spacing > 0 (Errc::non_positive_spacing).
double idm_accel(const IdmParams& p, double v, double dv_closing, double spacing);

// GHR acceleration from the state tau seconds in the past:
//   a = c * v_now^m_exp * dv_delayed / s_delayed^l_exp
// dv_delayed is lv_speed - fv_speed at t - tau (so a braking response to a
// closing gap falls out of the sign directly). Requires s_delayed > 0.
double ghr_accel(const GhrParams& p, double v_now, double dv_delayed, double s_delayed);

struct AccelLimits {
  double b_emergency = 8.0;  // hardest allowed braking, m/s^2
  double a_hard_max = 5.0;   // hardest allowed acceleration, m/s^2
};

// One-step speed prediction for either model: evaluates the acceleration at
// the end of `history`, clamps it to `limits`, and integrates over `horizon`
// with the speed floored at zero. GHR reads the state round(tau/grid) steps
// back, where the grid spacing comes from the history timestamps; it raises
// Errc::insufficient_history when the history is shorter than tau. A
// non-positive current (or delayed) gap triggers emergency braking instead of
// a model evaluation, so post-collision continuation stays well defined.
double physics_predict(const ModelParams& params, std::span<const events::StepState> history,
                       double horizon, const AccelLimits& limits = {});

class IdmPredictor : public kin::Predictor {
 public:
  explicit IdmPredictor(IdmParams params, AccelLimits limits = {});
  double predict(std::span<const events::StepState> history, double horizon) override;
  std::string name() const override { return "idm"; }

 private:
  IdmParams params_;
  AccelLimits limits_;
};

class GhrPredictor : public kin::Predictor {
 public:
  explicit GhrPredictor(GhrParams params, AccelLimits limits = {});
  double predict(std::span<const events::StepState> history, double horizon) override;
  std::string name() const override { return "ghr"; }
  double requires_warmup() const override;

 private:
  GhrParams params_;
  AccelLimits limits_;
};

// Calibration search space: one named, bounded axis per parameter.
struct ParamBounds {
  double lo = 0.0;
  double hi = 0.0;
};

struct ParamSpace {
  ModelKind kind;
  std::vector<std::string> names;
  std::vector<ParamBounds> bounds;

  std::size_t size() const { return names.size(); }
  ModelParams decode(std::span<const double> genes) const;
  std::vector<double> encode(const ModelParams& params) const;
  bool contains(const ModelParams& params) const;
};

ParamSpace param_space(ModelKind kind);

// JSON round-trip: {"model": "idm"|"ghr", "<param>": value, ...}.
ModelParams load_params(const std::filesystem::path& path);
void save_params(const ModelParams& params, const std::filesystem::path& path);

}  // namespace followbench::models
