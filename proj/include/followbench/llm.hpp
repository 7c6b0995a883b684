#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "followbench/baselines.hpp"

namespace followbench::llm {

struct TaskConfig {
  double history_window = 4.0;  // seconds of history shown to the model
  double horizon = 0.5;         // prediction horizon, s
};

struct PromptBundle {
  std::string system_message;
  std::string user_message;
  // The combined prompt as an ordered (role, content) list.
  std::vector<std::pair<std::string, std::string>> combined() const {
    return {{"system", system_message}, {"user", user_message}};
  }
};

// Deterministic system message: role, inputs, output format, safety-first
// directive, and the delimiter conventions. Byte-stable for a given config.
std::string build_system_message(const TaskConfig& config = {});

// User message: the current-state sentence, the fenced measurement history
// (one row per sample, 2 decimals), the spacing update rule in prose, and the
// step-by-step instruction with the output-format reminder. The history must
// span at least `window` seconds (Errc::short_history).
std::string build_user_message(std::span<const events::StepState> history, double dt,
                               double horizon, double window = 4.0);

PromptBundle build_prompt(std::span<const events::StepState> history, double dt,
                          const TaskConfig& config = {});

struct BackendConfig {
  enum class Kind { mock, remote };
  Kind kind = Kind::mock;
  std::string base_url;             // e.g. https://api.example.com/v1
  std::string model_name = "gpt-4";
  std::string api_key_env = "FOLLOWBENCH_API_KEY";
  double timeout_s = 30.0;
  int max_retries = 3;
  double temperature = 0.0;
  int requests_per_minute = 60;
  std::string log_path;  // optional JSONL request/response log (key never logged)
};

BackendConfig::Kind parse_backend_kind(const std::string& name);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string chat(const PromptBundle& prompt) = 0;
  virtual std::string name() const = 0;
};

// Offline stand-in: reads the fenced history back out of the user message,
// runs the default-parameter IDM one step, and writes a reply in the
// advertised format. Pure and deterministic, so runs are reproducible
// without network access.
class MockBackend : public ChatBackend {
 public:
  std::string chat(const PromptBundle& prompt) override;
  std::string name() const override { return "mock"; }

  // The speed a mock reply advertises for `current`, after the same 2-decimal
  // formatting the reply goes through; parse_response of a mock reply returns
  // exactly this value.
  static double reference_speed(const events::StepState& current, double horizon);
};

// Chat-completions JSON client (POST {base_url}/chat/completions) with
// retries, exponential backoff, and a requests-per-minute limiter. The API
// key comes from the configured environment variable; construction fails
// with Errc::auth_failure when it is unset, before any network use.
std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config);

// One-shot convenience around make_backend(config)->chat(prompt).
std::string chat(const BackendConfig& config, const PromptBundle& prompt);

struct ParsedReply {
  enum class Method { structured, regex_fallback };
  double speed = 0.0;
  std::string explanation;
  Method method = Method::structured;
};

// Extracts (speed, explanation) from a raw reply: first the structured
// contract (`Predicted speed: <number> m/s` + `Explanation:`), then a
// tolerant scan for a number near "m/s"/"speed". Errc::unparseable_reply when
// no usable number exists or its magnitude is absurd (> 1e4 m/s).
ParsedReply parse_response(const std::string& raw);

struct SafetyLimits {
  double a_max_f = 5.0;  // max acceleration implied by the prediction, m/s^2
  double b_max_f = 8.0;  // max deceleration, m/s^2
  double v_cap = 60.0;   // absolute speed cap, m/s
};

struct FilterResult {
  double speed = 0.0;
  bool filtered = false;
  std::string reason;  // set when clamped
};

// Clamps a predicted speed into the physically reachable bracket
// [max(0, v_now - b_max_f*h), min(v_cap, v_now + a_max_f*h)]. Idempotent.
FilterResult safety_filter(double predicted, double v_now, double horizon,
                           const SafetyLimits& limits = {});

struct PredictionOutcome {
  enum class ParseMethod { structured, regex_fallback, model_fallback };
  double speed = 0.0;        // final, filtered speed, m/s
  std::string explanation;   // non-empty
  std::string raw_reply;     // last backend reply (empty if never reached)
  ParseMethod parse_method = ParseMethod::structured;
  bool filtered = false;
  std::string filter_reason;
  bool from_cache = false;
};

// Reply store shared across predictor instances of a run, keyed by the
// prompt content; internally synchronized.
class ReplyCache {
 public:
  std::optional<std::string> lookup(const std::string& key) const;
  void store(const std::string& key, const std::string& reply);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::string> replies_;
};

struct GenFollowerOptions {
  TaskConfig task;
  SafetyLimits limits;
  bool fallback_enabled = true;  // physics fallback on unusable replies
};

// The prompt -> chat -> parse -> filter pipeline behind the Predictor
// interface. Replies are cached by prompt content; an unparseable reply is
// re-asked once (bypassing the cache) and then handed to the default-IDM
// fallback with reason "llm fallback". Transport failures other than
// authentication do the same; with the fallback disabled they surface as
// errors instead.
class GenFollowerPredictor : public kin::Predictor {
 public:
  GenFollowerPredictor(std::shared_ptr<ChatBackend> backend, GenFollowerOptions options = {},
                       std::shared_ptr<ReplyCache> cache = nullptr);

  PredictionOutcome predict_full(std::span<const events::StepState> history, double horizon);
  double predict(std::span<const events::StepState> history, double horizon) override;
  std::string name() const override { return "genfollower"; }
  double requires_warmup() const override { return options_.task.history_window; }

 private:
  std::shared_ptr<ChatBackend> backend_;
  GenFollowerOptions options_;
  std::shared_ptr<ReplyCache> cache_;
};

struct FinetuneOptions {
  int n_instances = 50;
  std::uint64_t seed = 0;
  TaskConfig task;
};

// Writes n_instances JSONL chat examples (system/user/assistant). The user
// message renders a recorded history window; the assistant answer carries the
// recorded follower speed `horizon` seconds later, to 2 decimals. Prediction
// points are sampled seeded-random across all events and grid times;
// Errc::insufficient_data when fewer than n_instances exist.
void export_finetune_dataset(std::span<const events::CarFollowingEvent> events,
                             const std::filesystem::path& out_path,
                             const FinetuneOptions& options = {});

}  // namespace followbench::llm
