#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "followbench/calibrate.hpp"
#include "followbench/llm.hpp"
#include "followbench/metrics.hpp"
#include "followbench/synth.hpp"

namespace followbench::cli {

inline constexpr const char* kVersion = "0.1.0";

// 0 success, 2 usage/config, 3 data, 4 backend.
int exit_code_for(Errc code);

struct DataArgs {
  std::filesystem::path path;
  std::string format = "csv";
};

struct CalibrateArgs {
  DataArgs data;
  std::string model = "idm";  // idm | ghr
  ga::GaConfig ga;
  double warmup = 4.0;
  bool per_event = false;  // fit each event separately instead of globally
  int jobs = 0;
  std::filesystem::path out_dir = "runs/calibrate";
};

struct SimulateArgs {
  DataArgs data;
  std::string model = "idm";  // idm | ghr | constant | playback | genfollower
  std::optional<std::filesystem::path> params;
  double warmup = 4.0;
  double llm_stride = 0.5;  // prediction stride for genfollower, s
  std::optional<double> constant_speed;
  llm::BackendConfig backend;
  int jobs = 0;
  std::filesystem::path out_dir = "runs/simulate";
};

struct BenchmarkArgs {
  DataArgs data;
  std::vector<std::string> models = {"idm"};
  std::map<std::string, std::filesystem::path> params;  // per-model parameter files
  double warmup = 4.0;
  double llm_stride = 0.5;
  std::string ttc_aggregation = "mean";
  std::optional<double> constant_speed;
  llm::BackendConfig backend;
  std::uint64_t seed = 0;
  int jobs = 0;
  std::filesystem::path out_dir = "runs/benchmark";
};

struct ExportFinetuneArgs {
  DataArgs data;
  int n = 50;
  std::uint64_t seed = 0;
  std::filesystem::path out = "finetune.jsonl";
};

// Command bodies. Each writes a run_manifest.json (config, seed, version —
// nothing time-dependent) into the output directory, so a mock-backend run
// is reproducible byte for byte. Errors surface as followbench::Error; the
// binary maps them through exit_code_for.
void run_calibrate(const CalibrateArgs& args);
void run_simulate(const SimulateArgs& args);
void run_benchmark(const BenchmarkArgs& args, std::ostream& table_out);
void run_export_finetune(const ExportFinetuneArgs& args);

}  // namespace followbench::cli
