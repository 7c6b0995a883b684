#include "followbench/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "followbench/text.hpp"

namespace followbench::models {

ModelKind parse_model_kind(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "idm") return ModelKind::idm;
  if (lower == "ghr") return ModelKind::ghr;
  raise(Errc::invalid_argument, "unsupported model '" + name + "' (expected idm or ghr)");
}

std::string_view model_name(ModelKind kind) { return kind == ModelKind::idm ? "idm" : "ghr"; }

ModelKind kind_of(const ModelParams& params) {
  return std::holds_alternative<IdmParams>(params) ? ModelKind::idm : ModelKind::ghr;
}

IdmParams default_idm_params() { return IdmParams{15.0, 1.5, 1.0, 1.5, 4.0, 2.0}; }

double idm_accel(const IdmParams& p, double v, double dv_closing, double spacing) {
  if (!(spacing > 0.0)) {
    raise(Errc::non_positive_spacing, "idm_accel: spacing " + text::compact(spacing));
  }
  const double s_star = p.s0 + v * p.t_hw + v * dv_closing / (2.0 * std::sqrt(p.a_max * p.b));
  const double ratio = s_star / spacing;
  return p.a_max * (1.0 - std::pow(v / p.v0, p.delta) - ratio * ratio);
}

double ghr_accel(const GhrParams& p, double v_now, double dv_delayed, double s_delayed) {
  if (!(s_delayed > 0.0)) {
    raise(Errc::non_positive_spacing, "ghr_accel: delayed spacing " + text::compact(s_delayed));
  }
  return p.c * std::pow(v_now, p.m_exp) * dv_delayed / std::pow(s_delayed, p.l_exp);
}

namespace {

double integrate_speed(double v_now, double accel, double horizon, const AccelLimits& limits) {
  if (!std::isfinite(accel)) accel = 0.0;  // degenerate model output (e.g. 0^negative)
  accel = std::clamp(accel, -limits.b_emergency, limits.a_hard_max);
  return std::max(0.0, v_now + accel * horizon);
}

}  // namespace

double physics_predict(const ModelParams& params, std::span<const events::StepState> history,
                       double horizon, const AccelLimits& limits) {
  if (history.empty()) raise(Errc::invalid_argument, "physics_predict: empty history");
  if (!(horizon > 0.0)) raise(Errc::invalid_argument, "physics_predict: horizon must be positive");
  const events::StepState& now = history.back();

  if (const auto* idm = std::get_if<IdmParams>(&params)) {
    // After a simulated contact the gap can be non-positive; brake as hard as
    // allowed instead of feeding the model an out-of-domain state.
    const double accel = now.spacing > 0.0
                             ? idm_accel(*idm, now.fv_speed, now.fv_speed - now.lv_speed,
                                         now.spacing)
                             : -limits.b_emergency;
    return integrate_speed(now.fv_speed, accel, horizon, limits);
  }

  const auto& ghr = std::get<GhrParams>(params);
  std::size_t delay_steps = 0;
  if (ghr.tau > 0.0) {
    if (history.size() < 2) {
      raise(Errc::insufficient_history, "ghr: single-sample history with tau " +
                                            text::compact(ghr.tau));
    }
    const double grid = history[1].t - history[0].t;
    delay_steps = static_cast<std::size_t>(std::llround(ghr.tau / grid));
    if (history.size() <= delay_steps) {
      raise(Errc::insufficient_history,
            "ghr: history spans " + text::compact(now.t - history.front().t) +
                " s but tau is " + text::compact(ghr.tau) + " s");
    }
  }
  const events::StepState& past = history[history.size() - 1 - delay_steps];
  const double accel = past.spacing > 0.0
                           ? ghr_accel(ghr, now.fv_speed, past.rel_speed, past.spacing)
                           : -limits.b_emergency;
  return integrate_speed(now.fv_speed, accel, horizon, limits);
}

IdmPredictor::IdmPredictor(IdmParams params, AccelLimits limits)
    : params_(params), limits_(limits) {}

double IdmPredictor::predict(std::span<const events::StepState> history, double horizon) {
  return physics_predict(params_, history, horizon, limits_);
}

GhrPredictor::GhrPredictor(GhrParams params, AccelLimits limits)
    : params_(params), limits_(limits) {}

double GhrPredictor::predict(std::span<const events::StepState> history, double horizon) {
  return physics_predict(params_, history, horizon, limits_);
}

double GhrPredictor::requires_warmup() const { return params_.tau; }

ModelParams ParamSpace::decode(std::span<const double> genes) const {
  if (genes.size() != size()) {
    raise(Errc::length_mismatch, "decode: expected " + std::to_string(size()) + " genes, got " +
                                     std::to_string(genes.size()));
  }
  if (kind == ModelKind::idm) {
    return IdmParams{genes[0], genes[1], genes[2], genes[3], genes[4], genes[5]};
  }
  return GhrParams{genes[0], genes[1], genes[2], genes[3]};
}

std::vector<double> ParamSpace::encode(const ModelParams& params) const {
  if (kind_of(params) != kind) raise(Errc::invalid_argument, "encode: model kind mismatch");
  if (const auto* idm = std::get_if<IdmParams>(&params)) {
    return {idm->v0, idm->t_hw, idm->a_max, idm->b, idm->delta, idm->s0};
  }
  const auto& ghr = std::get<GhrParams>(params);
  return {ghr.c, ghr.m_exp, ghr.l_exp, ghr.tau};
}

bool ParamSpace::contains(const ModelParams& params) const {
  if (kind_of(params) != kind) return false;
  const std::vector<double> genes = encode(params);
  for (std::size_t i = 0; i < genes.size(); ++i) {
    if (genes[i] < bounds[i].lo || genes[i] > bounds[i].hi) return false;
  }
  return true;
}

ParamSpace param_space(ModelKind kind) {
  ParamSpace space;
  space.kind = kind;
  if (kind == ModelKind::idm) {
    space.names = {"v0", "t_hw", "a_max", "b", "delta", "s0"};
    space.bounds = {{1.0, 40.0}, {0.1, 5.0}, {0.1, 5.0}, {0.1, 5.0}, {1.0, 10.0}, {0.1, 10.0}};
  } else {
    space.names = {"c", "m_exp", "l_exp", "tau"};
    space.bounds = {{1e-4, 100.0}, {-2.0, 2.0}, {-1.0, 4.0}, {0.0, 2.0}};
  }
  return space;
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::io_error, "cannot open '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::io_error, "cannot parse '" + path.string() + "': " + e.what());
  }
  if (!doc.contains("model")) {
    raise(Errc::missing_column, "'" + path.string() + "' has no 'model' key");
  }
  const ModelKind kind = parse_model_kind(doc["model"].get<std::string>());
  const ParamSpace space = param_space(kind);
  std::vector<double> genes;
  for (const auto& name : space.names) {
    if (!doc.contains(name)) {
      raise(Errc::missing_column, "'" + path.string() + "' has no '" + name + "' key");
    }
    genes.push_back(doc[name].get<double>());
  }
  return space.decode(genes);
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  const ParamSpace space = param_space(kind_of(params));
  const std::vector<double> genes = space.encode(params);
  nlohmann::json doc;
  doc["model"] = std::string(model_name(space.kind));
  for (std::size_t i = 0; i < genes.size(); ++i) doc[space.names[i]] = genes[i];
  std::ofstream out(path);
  if (!out) raise(Errc::io_error, "cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
  if (!out) raise(Errc::io_error, "failed writing '" + path.string() + "'");
}

}  // namespace followbench::models
