#include "followbench/cli.hpp"

#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "followbench/text.hpp"

namespace followbench::cli {

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::invalid_argument:
    case Errc::invalid_stride:
      return 2;
    case Errc::timeout:
    case Errc::rate_limited:
    case Errc::auth_failure:
    case Errc::malformed_reply:
    case Errc::unparseable_reply:
    case Errc::backend_unavailable:
      return 4;
    default:
      return 3;  // data problems: ingestion, validation, rollout, metrics
  }
}

namespace {

std::vector<events::CarFollowingEvent> load_dataset(const DataArgs& data) {
  return events::load_events(data.path, events::parse_format(data.format));
}

void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                    const nlohmann::json& config) {
  nlohmann::json doc;
  doc["command"] = command;
  doc["version"] = kVersion;
  doc["config"] = config;
  std::ofstream out(out_dir / "run_manifest.json");
  if (!out) raise(Errc::io_error, "cannot write '" + (out_dir / "run_manifest.json").string() + "'");
  out << doc.dump(2) << '\n';
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) raise(Errc::io_error, "cannot create '" + dir.string() + "': " + ec.message());
}

nlohmann::json backend_config_json(const llm::BackendConfig& backend) {
  return {{"kind", backend.kind == llm::BackendConfig::Kind::mock ? "mock" : "remote"},
          {"base_url", backend.base_url},
          {"model_name", backend.model_name},
          {"api_key_env", backend.api_key_env},
          {"timeout_s", backend.timeout_s},
          {"max_retries", backend.max_retries},
          {"temperature", backend.temperature},
          {"requests_per_minute", backend.requests_per_minute}};
}

// How one benchmark/simulate model is instantiated: a per-event predictor
// factory plus its prediction stride (0 = the event's dt).
struct ModelSetup {
  std::string name;
  double stride = 0.0;
  std::function<std::unique_ptr<kin::Predictor>(const events::CarFollowingEvent&)> make;
};

models::ModelParams physics_params(models::ModelKind kind,
                                   const std::optional<std::filesystem::path>& params_path) {
  if (params_path) {
    const models::ModelParams params = models::load_params(*params_path);
    if (models::kind_of(params) != kind) {
      raise(Errc::invalid_argument, "'" + params_path->string() + "' holds " +
                                        std::string(models::model_name(models::kind_of(params))) +
                                        " parameters, expected " +
                                        std::string(models::model_name(kind)));
    }
    return params;
  }
  if (kind == models::ModelKind::idm) return models::default_idm_params();
  return models::GhrParams{};
}

ModelSetup make_model_setup(const std::string& name,
                            const std::optional<std::filesystem::path>& params_path,
                            double llm_stride, std::optional<double> constant_speed,
                            const llm::BackendConfig& backend_config) {
  ModelSetup setup;
  setup.name = name;
  if (name == "idm" || name == "ghr") {
    const models::ModelParams params =
        physics_params(models::parse_model_kind(name), params_path);
    setup.make = [params](const events::CarFollowingEvent&) -> std::unique_ptr<kin::Predictor> {
      if (const auto* idm = std::get_if<models::IdmParams>(&params)) {
        return std::make_unique<models::IdmPredictor>(*idm);
      }
      return std::make_unique<models::GhrPredictor>(std::get<models::GhrParams>(params));
    };
  } else if (name == "constant") {
    setup.make = [constant_speed](const events::CarFollowingEvent&)
        -> std::unique_ptr<kin::Predictor> {
      return constant_speed ? std::make_unique<kin::ConstantPredictor>(*constant_speed)
                            : std::make_unique<kin::ConstantPredictor>();
    };
  } else if (name == "playback") {
    setup.make = [](const events::CarFollowingEvent& event) -> std::unique_ptr<kin::Predictor> {
      return std::make_unique<kin::PlaybackPredictor>(event);
    };
  } else if (name == "genfollower") {
    auto backend = std::shared_ptr<llm::ChatBackend>(llm::make_backend(backend_config));
    auto cache = std::make_shared<llm::ReplyCache>();
    llm::GenFollowerOptions options;
    options.task.horizon = llm_stride;
    setup.stride = llm_stride;
    setup.make = [backend, cache, options](const events::CarFollowingEvent&)
        -> std::unique_ptr<kin::Predictor> {
      return std::make_unique<llm::GenFollowerPredictor>(backend, options, cache);
    };
  } else {
    raise(Errc::invalid_argument,
          "unsupported model '" + name +
              "' (expected idm, ghr, constant, playback, or genfollower)");
  }
  return setup;
}

struct RolloutBatch {
  std::vector<kin::SimulatedTrajectory> trajectories;  // successes, event order
  std::vector<events::CarFollowingEvent> scored_events;
  std::vector<std::string> failures;  // "event_id: error"
};

// Rolls one model over all events, fanning out across OpenMP threads. Failed
// events are recorded and skipped; everything else keeps event order.
RolloutBatch roll_model(const ModelSetup& setup,
                        std::span<const events::CarFollowingEvent> events, double warmup,
                        int jobs) {
  const auto n = static_cast<std::ptrdiff_t>(events.size());
  std::vector<std::optional<kin::SimulatedTrajectory>> slots(events.size());
  std::vector<std::string> errors(events.size());

#ifdef _OPENMP
  const int threads = jobs > 0 ? jobs : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#endif
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      const auto predictor = setup.make(events[idx]);
      const double stride = setup.stride > 0.0 ? setup.stride : events[idx].dt;
      slots[idx] = kin::rollout(events[idx], *predictor, warmup, stride);
    } catch (const std::exception& e) {
      errors[idx] = e.what();
    }
  }

  RolloutBatch batch;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (slots[i]) {
      batch.trajectories.push_back(std::move(*slots[i]));
      batch.scored_events.push_back(events[i]);
    } else {
      batch.failures.push_back(events[i].event_id + ": " + errors[i]);
    }
  }
  return batch;
}

void write_trajectories(const RolloutBatch& batch, const std::filesystem::path& dir) {
  ensure_dir(dir);
  for (const auto& traj : batch.trajectories) {
    kin::save_trajectory_csv(traj, dir / (traj.event_id + ".csv"));
  }
}

}  // namespace

void run_calibrate(const CalibrateArgs& args) {
  const models::ModelKind kind = models::parse_model_kind(args.model);
  const std::vector<events::CarFollowingEvent> events = load_dataset(args.data);
  ensure_dir(args.out_dir);

  ga::GaResult result;
  if (args.per_event) {
    // One independent fit per event; the summary JSON maps event ids to their
    // parameters, and the headline result is the best-scoring fit.
    nlohmann::json per_event = nlohmann::json::object();
    result.best_fitness = std::numeric_limits<double>::infinity();
    for (const auto& event : events) {
      const std::span<const events::CarFollowingEvent> one(&event, 1);
      const ga::GaResult fit = ga::calibrate_ga(kind, one, args.ga, args.warmup, args.jobs);
      const models::ParamSpace space = models::param_space(kind);
      nlohmann::json entry;
      entry["fitness"] = fit.best_fitness;
      const std::vector<double> genes = space.encode(fit.best_params);
      for (std::size_t i = 0; i < genes.size(); ++i) entry[space.names[i]] = genes[i];
      per_event[event.event_id] = std::move(entry);
      if (fit.best_fitness < result.best_fitness) result = fit;
    }
    std::ofstream out(args.out_dir / ("params_" + args.model + "_per_event.json"));
    if (!out) raise(Errc::io_error, "cannot write the per-event params file");
    out << per_event.dump(2) << '\n';
  } else {
    result = ga::calibrate_ga(kind, events, args.ga, args.warmup, args.jobs);
  }

  const std::filesystem::path params_path =
      args.out_dir / ("params_" + args.model + ".json");
  models::save_params(result.best_params, params_path);

  std::ofstream history(args.out_dir / "fitness_history.csv");
  if (!history) raise(Errc::io_error, "cannot write fitness_history.csv");
  history << "generation,best_fitness\n";
  for (std::size_t g = 0; g < result.history.size(); ++g) {
    history << g << ',' << text::compact(result.history[g]) << '\n';
  }

  write_manifest(args.out_dir, "calibrate",
                 {{"data", args.data.path.string()},
                  {"format", args.data.format},
                  {"model", args.model},
                  {"population", args.ga.population},
                  {"generations", args.ga.generations},
                  {"crossover_rate", args.ga.crossover_rate},
                  {"mutation_rate", args.ga.mutation_rate},
                  {"mutation_sigma", args.ga.mutation_sigma},
                  {"elitism", args.ga.elitism},
                  {"tournament_k", args.ga.tournament_k},
                  {"seed", args.ga.seed},
                  {"warmup", args.warmup},
                  {"per_event", args.per_event},
                  {"jobs", args.jobs}});

  std::cout << "calibrated " << args.model << " on " << events.size() << " events: fitness "
            << text::compact(result.best_fitness) << " m^2 after " << result.history.size()
            << " generations\nparams: " << params_path.string() << '\n';
}

void run_simulate(const SimulateArgs& args) {
  const std::vector<events::CarFollowingEvent> events = load_dataset(args.data);
  const ModelSetup setup = make_model_setup(args.model, args.params, args.llm_stride,
                                            args.constant_speed, args.backend);
  ensure_dir(args.out_dir);

  const RolloutBatch batch = roll_model(setup, events, args.warmup, args.jobs);
  for (const auto& failure : batch.failures) {
    std::cerr << "simulate: " << setup.name << " failed on " << failure << '\n';
  }
  if (batch.trajectories.empty()) {
    raise(Errc::predictor_failure, "model '" + setup.name + "' failed on every event");
  }
  write_trajectories(batch, args.out_dir / "trajectories" / setup.name);

  write_manifest(args.out_dir, "simulate",
                 {{"data", args.data.path.string()},
                  {"format", args.data.format},
                  {"model", args.model},
                  {"params", args.params ? args.params->string() : ""},
                  {"warmup", args.warmup},
                  {"llm_stride", args.llm_stride},
                  {"jobs", args.jobs},
                  {"backend", backend_config_json(args.backend)}});

  std::cout << "simulated " << batch.trajectories.size() << "/" << events.size()
            << " events with " << setup.name << '\n';
}

void run_benchmark(const BenchmarkArgs& args, std::ostream& table_out) {
  if (args.models.empty()) raise(Errc::invalid_argument, "benchmark needs at least one model");
  const metrics::TtcAggregation aggregation =
      metrics::parse_ttc_aggregation(args.ttc_aggregation);
  const std::vector<events::CarFollowingEvent> events = load_dataset(args.data);
  ensure_dir(args.out_dir);

  std::vector<metrics::EvalReport> reports;
  for (const auto& model : args.models) {
    std::optional<std::filesystem::path> params_path;
    if (auto it = args.params.find(model); it != args.params.end()) params_path = it->second;
    const ModelSetup setup = make_model_setup(model, params_path, args.llm_stride,
                                              args.constant_speed, args.backend);

    const RolloutBatch batch = roll_model(setup, events, args.warmup, args.jobs);
    for (const auto& failure : batch.failures) {
      std::cerr << "benchmark: " << model << " failed on " << failure << '\n';
    }
    if (batch.trajectories.empty()) {
      raise(Errc::predictor_failure, "model '" + model + "' failed on every event");
    }
    write_trajectories(batch, args.out_dir / "trajectories" / model);
    reports.push_back(metrics::evaluate(model, batch.scored_events, batch.trajectories,
                                        aggregation,
                                        static_cast<int>(batch.failures.size())));
  }

  table_out << metrics::render_table(reports);
  metrics::write_report_json(reports, args.out_dir / "report.json");
  metrics::write_report_csv(reports, args.out_dir / "report.csv");

  nlohmann::json params_json = nlohmann::json::object();
  for (const auto& [model, path] : args.params) params_json[model] = path.string();
  write_manifest(args.out_dir, "benchmark",
                 {{"data", args.data.path.string()},
                  {"format", args.data.format},
                  {"models", args.models},
                  {"params", params_json},
                  {"warmup", args.warmup},
                  {"llm_stride", args.llm_stride},
                  {"ttc_aggregation", args.ttc_aggregation},
                  {"seed", args.seed},
                  {"jobs", args.jobs},
                  {"backend", backend_config_json(args.backend)}});
}

void run_export_finetune(const ExportFinetuneArgs& args) {
  if (args.n <= 0) raise(Errc::invalid_argument, "export-finetune: --n must be >= 1");
  const std::vector<events::CarFollowingEvent> events = load_dataset(args.data);

  llm::FinetuneOptions options;
  options.n_instances = args.n;
  options.seed = args.seed;
  if (args.out.has_parent_path()) ensure_dir(args.out.parent_path());
  llm::export_finetune_dataset(events, args.out, options);

  const std::filesystem::path manifest_dir =
      args.out.has_parent_path() ? args.out.parent_path() : std::filesystem::path(".");
  write_manifest(manifest_dir, "export-finetune",
                 {{"data", args.data.path.string()},
                  {"format", args.data.format},
                  {"n", args.n},
                  {"seed", args.seed},
                  {"out", args.out.string()}});

  std::cout << "wrote " << args.n << " fine-tune examples to " << args.out.string() << '\n';
}

}  // namespace followbench::cli
