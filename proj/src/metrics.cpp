#include "followbench/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "followbench/text.hpp"

namespace followbench::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

double mse_spacing(std::span<const std::vector<double>> observed,
                   std::span<const std::vector<double>> simulated) {
  if (observed.size() != simulated.size()) {
    raise(Errc::length_mismatch, "mse_spacing: " + std::to_string(observed.size()) +
                                     " observed vs " + std::to_string(simulated.size()) +
                                     " simulated series");
  }
  if (observed.empty()) raise(Errc::empty_input, "mse_spacing: no series");
  double total = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const auto& obs = observed[i];
    const auto& sim = simulated[i];
    if (obs.size() != sim.size()) {
      raise(Errc::length_mismatch, "mse_spacing: series " + std::to_string(i) + " has " +
                                       std::to_string(obs.size()) + " vs " +
                                       std::to_string(sim.size()) + " samples");
    }
    if (obs.empty()) raise(Errc::empty_input, "mse_spacing: series " + std::to_string(i) +
                                                  " is empty");
    double sum_sq = 0.0;
    for (std::size_t t = 0; t < obs.size(); ++t) {
      const double err = obs[t] - sim[t];
      sum_sq += err * err;
    }
    total += sum_sq / static_cast<double>(obs.size());
  }
  return total / static_cast<double>(observed.size());
}

double collision_rate(std::span<const kin::SimulatedTrajectory> trajectories) {
  if (trajectories.empty()) raise(Errc::empty_input, "collision_rate: no trajectories");
  std::size_t collided = 0;
  for (const auto& traj : trajectories) collided += traj.collided ? 1 : 0;
  return 100.0 * static_cast<double>(collided) / static_cast<double>(trajectories.size());
}

std::vector<TtcSample> ttc_series(const kin::SimulatedTrajectory& trajectory) {
  std::vector<TtcSample> out;
  out.reserve(trajectory.steps.size());
  for (const auto& s : trajectory.steps) {
    if (s.spacing_sim < 0.0) break;     // steps at/after a collision are excluded
    if (!(s.spacing_sim > 0.0)) continue;  // a grazing zero gap has no meaningful TTC
    out.push_back({s.t, s.rel_speed_sim < 0.0 ? -s.spacing_sim / s.rel_speed_sim : kInf});
  }
  return out;
}

TtcAggregation parse_ttc_aggregation(const std::string& name) {
  if (name == "mean") return TtcAggregation::mean;
  if (name == "median") return TtcAggregation::median;
  if (name == "global-min" || name == "global_min") return TtcAggregation::global_min;
  raise(Errc::invalid_argument,
        "unknown TTC aggregation '" + name + "' (expected mean, median, or global-min)");
}

std::string_view ttc_aggregation_name(TtcAggregation agg) {
  switch (agg) {
    case TtcAggregation::mean: return "mean";
    case TtcAggregation::median: return "median";
    case TtcAggregation::global_min: return "global-min";
  }
  return "mean";
}

namespace {

// Minimum finite TTC over the steps after warmup; +inf when never closing.
double event_min_ttc(const kin::SimulatedTrajectory& trajectory) {
  double best = kInf;
  for (const auto& sample : ttc_series(trajectory)) {
    if (sample.t <= trajectory.warmup_end + 1e-9) continue;
    if (std::isfinite(sample.ttc)) best = std::min(best, sample.ttc);
  }
  return best;
}

}  // namespace

TtcAggregate min_ttc_aggregate(std::span<const kin::SimulatedTrajectory> trajectories,
                               TtcAggregation aggregation) {
  if (trajectories.empty()) raise(Errc::empty_input, "min_ttc_aggregate: no trajectories");
  std::vector<double> minima;
  TtcAggregate out;
  for (const auto& traj : trajectories) {
    const double ttc = event_min_ttc(traj);
    if (std::isfinite(ttc)) {
      minima.push_back(ttc);
    } else {
      ++out.n_no_closing;
    }
  }
  if (minima.empty()) {
    out.value = kInf;
    return out;
  }
  switch (aggregation) {
    case TtcAggregation::mean: {
      double sum = 0.0;
      for (double v : minima) sum += v;
      out.value = sum / static_cast<double>(minima.size());
      break;
    }
    case TtcAggregation::median: {
      std::sort(minima.begin(), minima.end());
      const std::size_t mid = minima.size() / 2;
      out.value = minima.size() % 2 == 1 ? minima[mid] : (minima[mid - 1] + minima[mid]) / 2.0;
      break;
    }
    case TtcAggregation::global_min:
      out.value = *std::min_element(minima.begin(), minima.end());
      break;
  }
  return out;
}

EvalReport evaluate(const std::string& model, std::span<const events::CarFollowingEvent> recorded,
                    std::span<const kin::SimulatedTrajectory> trajectories,
                    TtcAggregation aggregation, int n_failed) {
  if (recorded.size() != trajectories.size()) {
    raise(Errc::length_mismatch, "evaluate: " + std::to_string(recorded.size()) + " events vs " +
                                     std::to_string(trajectories.size()) + " trajectories");
  }
  if (recorded.empty()) raise(Errc::empty_input, "evaluate: no events");

  EvalReport report;
  report.model = model;
  report.n_events = static_cast<int>(trajectories.size());
  report.n_failed = n_failed;
  report.ttc_aggregation = aggregation;

  std::vector<std::vector<double>> observed;
  std::vector<std::vector<double>> simulated;
  for (std::size_t i = 0; i < recorded.size(); ++i) {
    const auto& event = recorded[i];
    const auto& traj = trajectories[i];
    if (event.steps.size() != traj.steps.size()) {
      raise(Errc::length_mismatch, "evaluate: event '" + event.event_id + "' has " +
                                       std::to_string(event.steps.size()) + " steps vs " +
                                       std::to_string(traj.steps.size()) + " simulated");
    }
    std::vector<double> obs;
    std::vector<double> sim;
    for (std::size_t k = 0; k < traj.steps.size(); ++k) {
      if (traj.steps[k].t <= traj.warmup_end + 1e-9) continue;
      obs.push_back(event.steps[k].spacing);
      sim.push_back(traj.steps[k].spacing_sim);
    }
    if (obs.empty()) {
      raise(Errc::empty_input,
            "evaluate: event '" + event.event_id + "' has no steps after warmup");
    }
    observed.push_back(std::move(obs));
    simulated.push_back(std::move(sim));

    EventMetrics em;
    em.event_id = traj.event_id;
    double sum_sq = 0.0;
    for (std::size_t k = 0; k < observed.back().size(); ++k) {
      const double err = observed.back()[k] - simulated.back()[k];
      sum_sq += err * err;
    }
    em.mse = sum_sq / static_cast<double>(observed.back().size());
    em.collided = traj.collided;
    em.min_ttc = event_min_ttc(traj);
    report.per_event.push_back(std::move(em));
  }

  report.mse_spacing = mse_spacing(observed, simulated);
  report.collision_rate = collision_rate(trajectories);
  const TtcAggregate agg = min_ttc_aggregate(trajectories, aggregation);
  report.min_ttc = agg.value;
  report.n_no_closing = agg.n_no_closing;
  return report;
}

namespace {

std::string format_ttc(double value) {
  return std::isfinite(value) ? text::fixed(value, 2) : "inf";
}

}  // namespace

std::string render_table(std::span<const EvalReport> reports) {
  const std::string headers[4] = {"Model", "MSE of Spacing ↓", "Collision Rate (%) ↓",
                                  "Minimum TTC (s) ↑"};
  // The arrows are 3 UTF-8 bytes but one column on screen; pad by display
  // width, not byte count.
  auto display_width = [](const std::string& s) {
    std::size_t width = 0;
    for (unsigned char c : s) {
      if ((c & 0xC0) != 0x80) ++width;
    }
    return width;
  };

  std::vector<std::array<std::string, 4>> rows;
  for (const auto& r : reports) {
    rows.push_back({r.model, text::fixed(r.mse_spacing, 3), text::fixed(r.collision_rate, 1),
                    format_ttc(r.min_ttc)});
  }
  std::size_t widths[4];
  for (int c = 0; c < 4; ++c) {
    widths[c] = display_width(headers[c]);
    for (const auto& row : rows) widths[c] = std::max(widths[c], display_width(row[c]));
  }

  std::ostringstream out;
  auto emit_row = [&](const std::array<std::string, 4>& cells) {
    for (int c = 0; c < 4; ++c) {
      out << cells[c] << std::string(widths[c] - display_width(cells[c]), ' ');
      out << (c == 3 ? "\n" : "  ");
    }
  };
  emit_row({headers[0], headers[1], headers[2], headers[3]});
  std::size_t total = 0;
  for (std::size_t w : widths) total += w;
  out << std::string(total + 6, '-') << '\n';
  for (const auto& row : rows) emit_row(row);
  if (!reports.empty()) {
    out << "TTC aggregation: " << ttc_aggregation_name(reports.front().ttc_aggregation) << '\n';
  }
  return out.str();
}

namespace {

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json per_event = nlohmann::json::array();
  for (const auto& em : r.per_event) {
    per_event.push_back({{"event_id", em.event_id},
                         {"mse", em.mse},
                         {"collided", em.collided},
                         {"min_ttc", em.min_ttc}});  // non-finite dumps as null
  }
  return {{"model", r.model},
          {"n_events", r.n_events},
          {"n_failed", r.n_failed},
          {"mse_spacing", r.mse_spacing},
          {"collision_rate_pct", r.collision_rate},
          {"min_ttc_s", r.min_ttc},
          {"n_no_closing", r.n_no_closing},
          {"ttc_aggregation", std::string(ttc_aggregation_name(r.ttc_aggregation))},
          {"per_event", std::move(per_event)}};
}

}  // namespace

void write_report_json(std::span<const EvalReport> reports, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["models"] = nlohmann::json::array();
  for (const auto& r : reports) doc["models"].push_back(report_to_json(r));
  std::ofstream out(path);
  if (!out) raise(Errc::io_error, "cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
  if (!out) raise(Errc::io_error, "failed writing '" + path.string() + "'");
}

void write_report_csv(std::span<const EvalReport> reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) raise(Errc::io_error, "cannot write '" + path.string() + "'");
  out << "model,n_events,n_failed,mse_spacing,collision_rate_pct,min_ttc_s,n_no_closing,"
         "ttc_aggregation\n";
  for (const auto& r : reports) {
    out << r.model << ',' << r.n_events << ',' << r.n_failed << ','
        << text::compact(r.mse_spacing) << ',' << text::compact(r.collision_rate) << ','
        << (std::isfinite(r.min_ttc) ? text::compact(r.min_ttc) : "inf") << ','
        << r.n_no_closing << ',' << ttc_aggregation_name(r.ttc_aggregation) << '\n';
  }
  if (!out) raise(Errc::io_error, "failed writing '" + path.string() + "'");
}

}  // namespace followbench::metrics
