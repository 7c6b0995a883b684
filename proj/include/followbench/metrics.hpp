#pragma once

#include <span>
#include <string>
#include <vector>

#include "followbench/kinematics.hpp"

namespace followbench::metrics {

// Mean over series of the per-series mean squared spacing error:
//   (1/N) * sum_i (1/T_i) * sum_t (observed[i][t] - simulated[i][t])^2
// Series pair up by index and must have equal, non-zero lengths
// (Errc::length_mismatch / Errc::empty_input).
double mse_spacing(std::span<const std::vector<double>> observed,
                   std::span<const std::vector<double>> simulated);

// Percentage of trajectories whose simulated spacing ever drops below zero:
//   100 * collided / N. Requires a non-empty span (Errc::empty_input).
double collision_rate(std::span<const kin::SimulatedTrajectory> trajectories);

struct TtcSample {
  double t = 0.0;
  double ttc = 0.0;  // +infinity when the gap is not closing
};

// Time to collision -spacing / rel_speed per step while the gap is closing
// (rel_speed < 0), +infinity otherwise. Covers every step with positive
// spacing up to (not including) the first collision; warmup filtering is the
// aggregator's job.
std::vector<TtcSample> ttc_series(const kin::SimulatedTrajectory& trajectory);

enum class TtcAggregation { mean, median, global_min };

TtcAggregation parse_ttc_aggregation(const std::string& name);
std::string_view ttc_aggregation_name(TtcAggregation agg);

struct TtcAggregate {
  double value = 0.0;   // +infinity when no event ever closes
  int n_no_closing = 0; // events that never had a finite TTC after warmup
};

// Per event: the minimum finite TTC over the steps after warmup_end. Events
// with no finite TTC are counted in n_no_closing and excluded from the
// aggregate, which is the mean (default), median, or minimum of the
// per-event minima.
TtcAggregate min_ttc_aggregate(std::span<const kin::SimulatedTrajectory> trajectories,
                               TtcAggregation aggregation = TtcAggregation::mean);

struct EventMetrics {
  std::string event_id;
  double mse = 0.0;      // spacing MSE after warmup
  bool collided = false;
  double min_ttc = 0.0;  // +infinity when never closing
};

struct EvalReport {
  std::string model;
  int n_events = 0;  // events that produced a trajectory
  int n_failed = 0;  // events whose rollout raised
  double mse_spacing = 0.0;
  double collision_rate = 0.0;  // percent
  double min_ttc = 0.0;         // aggregated per-event minimum, s
  int n_no_closing = 0;
  TtcAggregation ttc_aggregation = TtcAggregation::mean;
  std::vector<EventMetrics> per_event;
};

// Scores one model's trajectories against the recorded events (paired by
// index; Errc::length_mismatch otherwise). Only steps after each
// trajectory's warmup_end enter the MSE and TTC windows.
EvalReport evaluate(const std::string& model, std::span<const events::CarFollowingEvent> recorded,
                    std::span<const kin::SimulatedTrajectory> trajectories,
                    TtcAggregation aggregation = TtcAggregation::mean, int n_failed = 0);

// Fixed-width comparison table; arrows mark the preferred direction.
std::string render_table(std::span<const EvalReport> reports);

// report.json / report.csv writers. Output is deterministic: keys are
// sorted, numbers use shortest round-trip form, and nothing time-dependent
// is recorded.
void write_report_json(std::span<const EvalReport> reports, const std::filesystem::path& path);
void write_report_csv(std::span<const EvalReport> reports, const std::filesystem::path& path);

}  // namespace followbench::metrics
