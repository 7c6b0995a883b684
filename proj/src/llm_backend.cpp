#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "followbench/llm.hpp"
#include "followbench/text.hpp"

namespace followbench::llm {

BackendConfig::Kind parse_backend_kind(const std::string& name) {
  if (name == "mock") return BackendConfig::Kind::mock;
  if (name == "remote") return BackendConfig::Kind::remote;
  raise(Errc::invalid_argument, "unknown backend '" + name + "' (expected mock or remote)");
}

std::optional<std::string> ReplyCache::lookup(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = replies_.find(key);
  if (it == replies_.end()) return std::nullopt;
  return it->second;
}

void ReplyCache::store(const std::string& key, const std::string& reply) {
  std::lock_guard lock(mutex_);
  replies_[key] = reply;
}

std::size_t ReplyCache::size() const {
  std::lock_guard lock(mutex_);
  return replies_.size();
}

namespace {

// Pulls the data rows back out of the user message's fenced block.
std::vector<events::StepState> parse_history_block(const std::string& user_message) {
  const std::size_t open = user_message.find("```\n");
  if (open == std::string::npos) return {};
  const std::size_t begin = open + 4;
  const std::size_t close = user_message.find("```", begin);
  if (close == std::string::npos) return {};

  std::vector<events::StepState> rows;
  std::istringstream block(user_message.substr(begin, close - begin));
  std::string line;
  while (std::getline(block, line)) {
    std::istringstream fields(line);
    std::string token;
    std::vector<double> values;
    bool ok = true;
    while (std::getline(fields, token, ',')) {
      try {
        values.push_back(text::parse_double(token, "history row"));
      } catch (const Error&) {
        ok = false;
        break;
      }
    }
    if (ok && values.size() == 5) {
      rows.push_back({values[0], values[1], values[2], values[3], values[4]});
    }
  }
  return rows;
}

double parse_horizon(const std::string& user_message) {
  static const std::regex horizon_re(
      R"(Predict the speed of the following vehicle (\d+(?:\.\d+)?) seconds from now)");
  std::smatch m;
  if (std::regex_search(user_message, m, horizon_re)) {
    return text::parse_double(m[1].str(), "horizon");
  }
  return 0.5;
}

std::string mock_reply_for(const events::StepState& current, double horizon) {
  const models::AccelLimits limits;
  double accel = -limits.b_emergency;
  if (current.spacing > 0.0) {
    accel = models::idm_accel(models::default_idm_params(), current.fv_speed,
                              current.fv_speed - current.lv_speed, current.spacing);
  }
  if (!std::isfinite(accel)) accel = 0.0;
  accel = std::clamp(accel, -limits.b_emergency, limits.a_hard_max);
  const double speed = std::max(0.0, current.fv_speed + accel * horizon);
  const std::string speed_str = text::fixed(speed, 2);

  const char* trend = current.rel_speed < -1e-9   ? "closing"
                      : current.rel_speed > 1e-9 ? "opening"
                                                 : "steady";
  std::ostringstream out;
  out << "Predicted speed: " << speed_str << " m/s\n"
      << "Explanation: The gap of " << text::fixed(current.spacing, 2) << " m is " << trend
      << " at " << text::fixed(std::abs(current.rel_speed), 2)
      << " m/s, so moving toward " << speed_str
      << " m/s keeps a safe following distance.\n";
  return out.str();
}

}  // namespace

std::string MockBackend::chat(const PromptBundle& prompt) {
  const std::vector<events::StepState> rows = parse_history_block(prompt.user_message);
  if (rows.empty()) {
    raise(Errc::malformed_reply, "mock backend found no history rows in the user message");
  }
  return mock_reply_for(rows.back(), parse_horizon(prompt.user_message));
}

double MockBackend::reference_speed(const events::StepState& current, double horizon) {
  const std::string reply = mock_reply_for(current, horizon);
  return parse_response(reply).speed;
}

namespace {

class RemoteBackend : public ChatBackend {
 public:
  explicit RemoteBackend(BackendConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) {
      raise(Errc::invalid_argument, "remote backend needs a base_url");
    }
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      raise(Errc::auth_failure,
            "environment variable " + config_.api_key_env + " is not set");
    }
    api_key_ = key;

    // Split scheme://host[:port] from any path prefix, e.g. /v1.
    const std::size_t scheme = config_.base_url.find("://");
    const std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
    const std::size_t path_start = config_.base_url.find('/', host_start);
    std::string origin = config_.base_url;
    if (path_start != std::string::npos) {
      origin = config_.base_url.substr(0, path_start);
      path_prefix_ = config_.base_url.substr(path_start);
      while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }
    client_ = std::make_unique<httplib::Client>(origin);
    const auto seconds = static_cast<time_t>(config_.timeout_s);
    const auto micros =
        static_cast<time_t>((config_.timeout_s - static_cast<double>(seconds)) * 1e6);
    client_->set_connection_timeout(seconds, micros);
    client_->set_read_timeout(seconds, micros);
    client_->set_write_timeout(seconds, micros);
  }

  std::string chat(const PromptBundle& prompt) override {
    nlohmann::json body;
    body["model"] = config_.model_name;
    body["temperature"] = config_.temperature;
    body["messages"] = nlohmann::json::array();
    for (const auto& [role, content] : prompt.combined()) {
      body["messages"].push_back({{"role", role}, {"content", content}});
    }
    const std::string payload = body.dump();
    const std::string path = path_prefix_ + "/chat/completions";
    const httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};

    std::string last_problem = "no attempt made";
    Errc last_code = Errc::backend_unavailable;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) backoff(attempt);
      wait_for_rate_limit();

      httplib::Result res = [&] {
        std::lock_guard lock(request_mutex_);
        return client_->Post(path, headers, payload, "application/json");
      }();

      if (!res) {
        const bool timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                               res.error() == httplib::Error::Read ||
                               res.error() == httplib::Error::Write;
        last_code = timed_out ? Errc::timeout : Errc::backend_unavailable;
        last_problem = "transport error: " + httplib::to_string(res.error());
        log_exchange(body, nullptr, last_problem);
        continue;  // retryable
      }
      log_exchange(body, &*res, "");
      if (res->status == 401 || res->status == 403) {
        raise(Errc::auth_failure, "backend rejected the credentials (HTTP " +
                                      std::to_string(res->status) + ")");
      }
      if (res->status == 429) {
        last_code = Errc::rate_limited;
        last_problem = "HTTP 429";
        continue;  // retryable
      }
      if (res->status == 408 || res->status >= 500) {
        last_code = Errc::backend_unavailable;
        last_problem = "HTTP " + std::to_string(res->status);
        continue;  // retryable
      }
      if (res->status != 200) {
        raise(Errc::backend_unavailable,
              "unexpected HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
      }
      return extract_content(res->body);
    }
    raise(last_code, "backend gave up after " + std::to_string(config_.max_retries + 1) +
                         " attempts; last problem: " + last_problem);
  }

  std::string name() const override { return "remote:" + config_.model_name; }

 private:
  static std::string extract_content(const std::string& body) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      raise(Errc::malformed_reply, std::string("reply is not JSON: ") + e.what());
    }
    if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty() ||
        !doc["choices"][0].contains("message") ||
        !doc["choices"][0]["message"].contains("content")) {
      raise(Errc::malformed_reply, "reply has no choices[0].message.content");
    }
    return doc["choices"][0]["message"]["content"].get<std::string>();
  }

  void wait_for_rate_limit() {
    if (config_.requests_per_minute <= 0) return;
    const auto min_gap = std::chrono::duration<double>(60.0 / config_.requests_per_minute);
    std::unique_lock lock(rate_mutex_);
    const auto now = std::chrono::steady_clock::now();
    const auto earliest = last_request_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(min_gap);
    if (last_request_.time_since_epoch().count() != 0 && earliest > now) {
      const auto wait = earliest - now;
      lock.unlock();
      std::this_thread::sleep_for(wait);
      lock.lock();
    }
    last_request_ = std::chrono::steady_clock::now();
  }

  void backoff(int attempt) {
    const double seconds = std::min(30.0, 0.5 * std::pow(2.0, attempt - 1));
    std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
  }

  void log_exchange(const nlohmann::json& request, const httplib::Response* response,
                    const std::string& problem) {
    if (config_.log_path.empty()) return;
    nlohmann::json entry;
    entry["request"] = request;  // the Authorization header is never included
    if (response != nullptr) {
      entry["status"] = response->status;
      entry["response"] = response->body;
    }
    if (!problem.empty()) entry["problem"] = problem;
    std::lock_guard lock(log_mutex_);
    std::ofstream out(config_.log_path, std::ios::app);
    if (out) out << entry.dump() << '\n';
  }

  BackendConfig config_;
  std::string api_key_;
  std::string path_prefix_;
  std::unique_ptr<httplib::Client> client_;
  std::mutex request_mutex_;
  std::mutex rate_mutex_;
  std::mutex log_mutex_;
  std::chrono::steady_clock::time_point last_request_{};
};

}  // namespace

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config) {
  if (config.kind == BackendConfig::Kind::mock) return std::make_unique<MockBackend>();
  return std::make_unique<RemoteBackend>(config);
}

std::string chat(const BackendConfig& config, const PromptBundle& prompt) {
  return make_backend(config)->chat(prompt);
}

}  // namespace followbench::llm
