#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "followbench/baselines.hpp"

namespace followbench::ga {

struct GaConfig {
  int population = 50;
  int generations = 200;
  double crossover_rate = 0.9;    // probability of uniform crossover per child
  double mutation_rate = 0.1;     // per-gene probability of a Gaussian nudge
  double mutation_sigma = 0.1;    // nudge sigma as a fraction of each bound range
  int elitism = 2;                // incumbents copied unchanged per generation
  int tournament_k = 3;           // tournament size for parent selection
  std::uint64_t seed = 0;
};

// Calibration objective: the closed-loop spacing MSE of the model across all
// events (rollout at stride = dt, scored after `warmup`). Lower is better.
// Parameters must lie inside the model's declared bounds and `events` must be
// non-empty (Errc::invalid_argument).
//
// `fitness` evaluates events across OpenMP threads (`jobs` <= 0 picks the
// runtime default) but reduces in event order, so it returns bit-identical
// results to `fitness_serial`, the plain-loop reference kept for testing.
double fitness(const models::ModelParams& params,
               std::span<const events::CarFollowingEvent> events, double warmup = 4.0,
               int jobs = 0);
double fitness_serial(const models::ModelParams& params,
                      std::span<const events::CarFollowingEvent> events, double warmup = 4.0);

struct GaResult {
  models::ModelParams best_params;
  double best_fitness = 0.0;
  std::vector<double> history;  // best fitness per generation, non-increasing
};

// Real-coded genetic algorithm over the model's parameter space: uniform
// initialization within bounds, tournament selection, uniform crossover,
// per-gene Gaussian mutation with clipping, and elitism. All random draws
// come from one seeded generator stepped serially, so a given seed always
// returns bit-identical results; candidate evaluation fans out over OpenMP
// threads. history[g] is the best fitness in generation g's population
// (g = 0 is the random initial population).
GaResult calibrate_ga(models::ModelKind kind, std::span<const events::CarFollowingEvent> events,
                      const GaConfig& config, double warmup = 4.0, int jobs = 0);

}  // namespace followbench::ga
