#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "followbench/cli.hpp"

namespace {

using followbench::cli::BenchmarkArgs;
using followbench::cli::CalibrateArgs;
using followbench::cli::ExportFinetuneArgs;
using followbench::cli::SimulateArgs;

void add_data_options(CLI::App& cmd, followbench::cli::DataArgs& data) {
  cmd.add_option("--data", data.path, "event dataset file")->required();
  cmd.add_option("--format", data.format, "dataset format: csv or json (default csv)");
}

void add_backend_options(CLI::App& cmd, followbench::llm::BackendConfig& backend,
                         std::string& backend_kind) {
  cmd.add_option("--backend", backend_kind, "genfollower backend: mock or remote (default mock)");
  cmd.add_option("--base-url", backend.base_url, "remote chat-completions base URL");
  cmd.add_option("--llm-model", backend.model_name, "remote model name (default gpt-4)");
  cmd.add_option("--api-key-env", backend.api_key_env,
                 "env var holding the API key (default FOLLOWBENCH_API_KEY)");
  cmd.add_option("--timeout", backend.timeout_s, "request timeout in seconds (default 30)");
  cmd.add_option("--max-retries", backend.max_retries, "transport retries (default 3)");
  cmd.add_option("--temperature", backend.temperature, "sampling temperature (default 0)");
  cmd.add_option("--rpm", backend.requests_per_minute, "request rate limit per minute");
  cmd.add_option("--llm-log", backend.log_path, "JSONL request/response log path");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"followbench: closed-loop car-following benchmark"};
  app.set_version_flag("--version", followbench::cli::kVersion);
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; command-line flags win");

  CalibrateArgs calibrate_args;
  auto* calibrate = app.add_subcommand("calibrate", "fit idm/ghr parameters with a GA");
  add_data_options(*calibrate, calibrate_args.data);
  calibrate->add_option("--model", calibrate_args.model, "model to calibrate: idm or ghr");
  calibrate->add_option("--population", calibrate_args.ga.population, "GA population (default 50)");
  calibrate->add_option("--generations", calibrate_args.ga.generations,
                        "GA generations (default 200)");
  calibrate->add_option("--crossover-rate", calibrate_args.ga.crossover_rate,
                        "crossover probability (default 0.9)");
  calibrate->add_option("--mutation-rate", calibrate_args.ga.mutation_rate,
                        "per-gene mutation probability (default 0.1)");
  calibrate->add_option("--mutation-sigma", calibrate_args.ga.mutation_sigma,
                        "mutation sigma as a fraction of each range (default 0.1)");
  calibrate->add_option("--elitism", calibrate_args.ga.elitism, "elites per generation (default 2)");
  calibrate->add_option("--tournament-k", calibrate_args.ga.tournament_k,
                        "tournament size (default 3)");
  calibrate->add_option("--seed", calibrate_args.ga.seed, "RNG seed (default 0)");
  calibrate->add_option("--warmup", calibrate_args.warmup, "warmup seconds (default 4.0)");
  calibrate->add_flag("--per-event", calibrate_args.per_event,
                      "fit each event separately instead of one global fit");
  calibrate->add_option("--jobs", calibrate_args.jobs, "worker threads (default: all cores)");
  calibrate->add_option("--out-dir", calibrate_args.out_dir, "output directory");

  SimulateArgs simulate_args;
  std::string simulate_backend_kind = "mock";
  auto* simulate = app.add_subcommand("simulate", "roll one model and dump trajectories");
  add_data_options(*simulate, simulate_args.data);
  simulate->add_option("--model", simulate_args.model,
                       "idm, ghr, constant, playback, or genfollower");
  simulate->add_option("--params", simulate_args.params, "parameter JSON for idm/ghr");
  simulate->add_option("--warmup", simulate_args.warmup, "warmup seconds (default 4.0)");
  simulate->add_option("--llm-stride", simulate_args.llm_stride,
                       "genfollower prediction stride in seconds (default 0.5)");
  simulate->add_option("--constant-speed", simulate_args.constant_speed,
                       "fixed speed for the constant model (default: hold current)");
  simulate->add_option("--jobs", simulate_args.jobs, "worker threads (default: all cores)");
  simulate->add_option("--out-dir", simulate_args.out_dir, "output directory");
  add_backend_options(*simulate, simulate_args.backend, simulate_backend_kind);

  BenchmarkArgs benchmark_args;
  std::string benchmark_backend_kind = "mock";
  auto* benchmark = app.add_subcommand("benchmark", "score models and print the metric table");
  add_data_options(*benchmark, benchmark_args.data);
  benchmark->add_option("--models", benchmark_args.models,
                        "models to evaluate (repeat or comma-separate)")
      ->delimiter(',');
  benchmark->add_option("--params", benchmark_args.params,
                        "per-model parameter files as model=path")
      ->delimiter(',');
  benchmark->add_option("--warmup", benchmark_args.warmup, "warmup seconds (default 4.0)");
  benchmark->add_option("--llm-stride", benchmark_args.llm_stride,
                        "genfollower prediction stride in seconds (default 0.5)");
  benchmark->add_option("--ttc-aggregation", benchmark_args.ttc_aggregation,
                        "mean, median, or global-min (default mean)");
  benchmark->add_option("--constant-speed", benchmark_args.constant_speed,
                        "fixed speed for the constant model (default: hold current)");
  benchmark->add_option("--seed", benchmark_args.seed, "RNG seed recorded in the manifest");
  benchmark->add_option("--jobs", benchmark_args.jobs, "worker threads (default: all cores)");
  benchmark->add_option("--out-dir", benchmark_args.out_dir, "output directory");
  add_backend_options(*benchmark, benchmark_args.backend, benchmark_backend_kind);

  ExportFinetuneArgs finetune_args;
  auto* finetune = app.add_subcommand("export-finetune", "emit a JSONL chat fine-tuning dataset");
  add_data_options(*finetune, finetune_args.data);
  finetune->add_option("--n", finetune_args.n, "number of examples (default 50)");
  finetune->add_option("--seed", finetune_args.seed, "sampling seed (default 0)");
  finetune->add_option("--out", finetune_args.out, "output JSONL path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the usage message
    return 2;
  }

  try {
    if (calibrate->parsed()) {
      followbench::cli::run_calibrate(calibrate_args);
    } else if (simulate->parsed()) {
      simulate_args.backend.kind = followbench::llm::parse_backend_kind(simulate_backend_kind);
      followbench::cli::run_simulate(simulate_args);
    } else if (benchmark->parsed()) {
      benchmark_args.backend.kind = followbench::llm::parse_backend_kind(benchmark_backend_kind);
      followbench::cli::run_benchmark(benchmark_args, std::cout);
    } else if (finetune->parsed()) {
      followbench::cli::run_export_finetune(finetune_args);
    }
  } catch (const followbench::Error& e) {
    std::cerr << "followbench: " << e.what() << '\n';
    return followbench::cli::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "followbench: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
