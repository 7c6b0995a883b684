#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "followbench/llm.hpp"
#include "followbench/text.hpp"

namespace followbench::llm {

void export_finetune_dataset(std::span<const events::CarFollowingEvent> events,
                             const std::filesystem::path& out_path,
                             const FinetuneOptions& options) {
  if (options.n_instances <= 0) {
    raise(Errc::invalid_argument, "export_finetune_dataset: n_instances must be >= 1");
  }

  // Every grid time with a full history window behind it and the prediction
  // horizon still inside the record is a candidate example.
  struct Candidate {
    std::size_t event;
    std::size_t index;       // prediction origin
    std::size_t future;      // index of t + horizon
  };
  std::vector<Candidate> candidates;
  for (std::size_t e = 0; e < events.size(); ++e) {
    const auto& event = events[e];
    const double dt = event.dt;
    const auto window_steps =
        static_cast<std::size_t>(std::llround(options.task.history_window / dt));
    const auto horizon_steps =
        static_cast<std::size_t>(std::llround(options.task.horizon / dt));
    if (horizon_steps == 0 || event.steps.size() <= window_steps + horizon_steps) continue;
    for (std::size_t k = window_steps; k + horizon_steps < event.steps.size(); ++k) {
      candidates.push_back({e, k, k + horizon_steps});
    }
  }
  if (candidates.size() < static_cast<std::size_t>(options.n_instances)) {
    raise(Errc::insufficient_data,
          "only " + std::to_string(candidates.size()) + " prediction points available, need " +
              std::to_string(options.n_instances));
  }

  std::mt19937_64 rng(options.seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  candidates.resize(static_cast<std::size_t>(options.n_instances));

  const std::string system_message = build_system_message(options.task);
  std::ofstream out(out_path);
  if (!out) raise(Errc::io_error, "cannot write '" + out_path.string() + "'");
  for (const auto& c : candidates) {
    const auto& event = events[c.event];
    const std::vector<events::StepState> history = events::slice_history(
        event, event.steps[c.index].t, options.task.history_window);
    const std::string user_message =
        build_user_message(history, event.dt, options.task.horizon, options.task.history_window);

    const std::string speed = text::fixed(event.steps[c.future].fv_speed, 2);
    const std::string assistant =
        "Predicted speed: " + speed +
        " m/s\nExplanation: Following the observed gap and speed trend, the following vehicle "
        "reaches " + speed + " m/s " + text::trimmed(options.task.horizon) + " seconds later.";

    nlohmann::json line;
    line["messages"] = {{{"role", "system"}, {"content", system_message}},
                        {{"role", "user"}, {"content", user_message}},
                        {{"role", "assistant"}, {"content", assistant}}};
    out << line.dump() << '\n';
  }
  if (!out) raise(Errc::io_error, "failed writing '" + out_path.string() + "'");
}

}  // namespace followbench::llm
