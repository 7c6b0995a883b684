#include "followbench/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "followbench/text.hpp"

namespace followbench::ga {

namespace {

// Closed-loop spacing MSE of one event; the building block both fitness
// variants share so their per-event terms are identical.
double event_mse(const models::ModelParams& params, const events::CarFollowingEvent& event,
                 double warmup) {
  kin::SimulatedTrajectory traj;
  if (const auto* idm = std::get_if<models::IdmParams>(&params)) {
    models::IdmPredictor predictor(*idm);
    traj = kin::rollout(event, predictor, warmup, event.dt);
  } else {
    models::GhrPredictor predictor(std::get<models::GhrParams>(params));
    traj = kin::rollout(event, predictor, warmup, event.dt);
  }
  double sum_sq = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < traj.steps.size(); ++k) {
    if (traj.steps[k].t <= traj.warmup_end + 1e-9) continue;
    const double err = event.steps[k].spacing - traj.steps[k].spacing_sim;
    sum_sq += err * err;
    ++count;
  }
  return sum_sq / static_cast<double>(count);
}

void check_fitness_args(const models::ModelParams& params,
                        std::span<const events::CarFollowingEvent> events) {
  if (events.empty()) raise(Errc::invalid_argument, "fitness: no events");
  if (!models::param_space(models::kind_of(params)).contains(params)) {
    raise(Errc::invalid_argument, "fitness: parameters outside the declared bounds");
  }
}

// Events fan out over threads, but each result lands in its own slot and the
// sum runs in event order afterwards, so the total matches the serial loop
// bit for bit.
double fitness_unchecked(const models::ModelParams& params,
                         std::span<const events::CarFollowingEvent> events, double warmup,
                         int jobs) {
  const auto n = static_cast<std::ptrdiff_t>(events.size());
  std::vector<double> per_event(events.size(), 0.0);
  bool failed = false;
  std::string first_error;

#ifdef _OPENMP
  const int threads = jobs > 0 ? jobs : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      per_event[static_cast<std::size_t>(i)] = event_mse(params, events[i], warmup);
    } catch (const std::exception& e) {
#pragma omp critical
      {
        if (!failed) {
          failed = true;
          first_error = e.what();
        }
      }
    }
  }
#else
  (void)jobs;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      per_event[static_cast<std::size_t>(i)] = event_mse(params, events[i], warmup);
    } catch (const std::exception& e) {
      if (!failed) {
        failed = true;
        first_error = e.what();
      }
    }
  }
#endif
  if (failed) raise(Errc::predictor_failure, "fitness: " + first_error);

  double total = 0.0;
  for (double v : per_event) total += v;
  return total / static_cast<double>(events.size());
}

}  // namespace

double fitness(const models::ModelParams& params,
               std::span<const events::CarFollowingEvent> events, double warmup, int jobs) {
  check_fitness_args(params, events);
  return fitness_unchecked(params, events, warmup, jobs);
}

double fitness_serial(const models::ModelParams& params,
                      std::span<const events::CarFollowingEvent> events, double warmup) {
  check_fitness_args(params, events);
  double total = 0.0;
  for (const auto& event : events) total += event_mse(params, event, warmup);
  return total / static_cast<double>(events.size());
}

namespace {

using Genome = std::vector<double>;

void check_config(const GaConfig& config) {
  if (config.population < 2) raise(Errc::invalid_argument, "ga: population must be >= 2");
  if (config.generations < 1) raise(Errc::invalid_argument, "ga: generations must be >= 1");
  if (config.elitism < 1 || config.elitism >= config.population) {
    raise(Errc::invalid_argument, "ga: elitism must be in [1, population)");
  }
  if (config.tournament_k < 1) raise(Errc::invalid_argument, "ga: tournament_k must be >= 1");
  if (config.crossover_rate < 0.0 || config.crossover_rate > 1.0 || config.mutation_rate < 0.0 ||
      config.mutation_rate > 1.0 || config.mutation_sigma < 0.0) {
    raise(Errc::invalid_argument, "ga: rates must be probabilities and sigma non-negative");
  }
}

// Evaluates a whole population; spots are independent so the loop is
// embarrassingly parallel. Evaluation draws no random numbers.
std::vector<double> evaluate_population(const std::vector<Genome>& population,
                                        const models::ParamSpace& space,
                                        std::span<const events::CarFollowingEvent> events,
                                        double warmup, int jobs) {
  const auto n = static_cast<std::ptrdiff_t>(population.size());
  std::vector<double> scores(population.size(), 0.0);
  bool failed = false;
  std::string first_error;

#ifdef _OPENMP
  const int threads = jobs > 0 ? jobs : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#endif
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      scores[static_cast<std::size_t>(i)] =
          fitness_unchecked(space.decode(population[static_cast<std::size_t>(i)]), events,
                            warmup, 1);
    } catch (const std::exception& e) {
#ifdef _OPENMP
#pragma omp critical
#endif
      {
        if (!failed) {
          failed = true;
          first_error = e.what();
        }
      }
    }
  }
  if (failed) raise(Errc::predictor_failure, std::string("ga: ") + first_error);
  return scores;
}

}  // namespace

GaResult calibrate_ga(models::ModelKind kind, std::span<const events::CarFollowingEvent> events,
                      const GaConfig& config, double warmup, int jobs) {
  check_config(config);
  if (events.empty()) raise(Errc::invalid_argument, "ga: no events");

  const models::ParamSpace space = models::param_space(kind);
  const std::size_t dims = space.size();
  const auto pop_size = static_cast<std::size_t>(config.population);

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, pop_size - 1);

  std::vector<Genome> population(pop_size, Genome(dims, 0.0));
  for (auto& genome : population) {
    for (std::size_t d = 0; d < dims; ++d) {
      genome[d] = space.bounds[d].lo + unit(rng) * (space.bounds[d].hi - space.bounds[d].lo);
    }
  }

  std::vector<double> scores = evaluate_population(population, space, events, warmup, jobs);

  Genome best_genome = population[0];
  double best_score = scores[0];
  auto track_best = [&]() {
    for (std::size_t i = 0; i < pop_size; ++i) {
      if (scores[i] < best_score) {
        best_score = scores[i];
        best_genome = population[i];
      }
    }
  };
  track_best();

  GaResult result;
  result.history.reserve(static_cast<std::size_t>(config.generations));
  result.history.push_back(*std::min_element(scores.begin(), scores.end()));

  // Ranking indices by (score, index) keeps elite selection stable under
  // equal scores, which keeps runs reproducible.
  std::vector<std::size_t> order(pop_size);
  auto rank = [&]() {
    for (std::size_t i = 0; i < pop_size; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a] != scores[b] ? scores[a] < scores[b] : a < b;
    });
  };

  auto tournament = [&]() -> const Genome& {
    std::size_t winner = pick(rng);
    for (int i = 1; i < config.tournament_k; ++i) {
      const std::size_t challenger = pick(rng);
      if (scores[challenger] < scores[winner]) winner = challenger;
    }
    return population[winner];
  };

  for (int gen = 1; gen < config.generations; ++gen) {
    rank();
    std::vector<Genome> next;
    next.reserve(pop_size);
    for (int e = 0; e < config.elitism; ++e) next.push_back(population[order[static_cast<std::size_t>(e)]]);

    while (next.size() < pop_size) {
      const Genome& parent_a = tournament();
      const Genome& parent_b = tournament();
      Genome child = parent_a;
      if (unit(rng) < config.crossover_rate) {
        for (std::size_t d = 0; d < dims; ++d) {
          if (unit(rng) < 0.5) child[d] = parent_b[d];
        }
      }
      for (std::size_t d = 0; d < dims; ++d) {
        if (unit(rng) < config.mutation_rate) {
          const double range = space.bounds[d].hi - space.bounds[d].lo;
          child[d] += gauss(rng) * config.mutation_sigma * range;
        }
        child[d] = std::clamp(child[d], space.bounds[d].lo, space.bounds[d].hi);
      }
      next.push_back(std::move(child));
    }

    population = std::move(next);
    scores = evaluate_population(population, space, events, warmup, jobs);
    track_best();
    result.history.push_back(*std::min_element(scores.begin(), scores.end()));
  }

  result.best_params = space.decode(best_genome);
  result.best_fitness = best_score;
  return result;
}

}  // namespace followbench::ga
