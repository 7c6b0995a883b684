#include <cmath>

#include "followbench/llm.hpp"
#include "followbench/text.hpp"

namespace followbench::llm {

GenFollowerPredictor::GenFollowerPredictor(std::shared_ptr<ChatBackend> backend,
                                           GenFollowerOptions options,
                                           std::shared_ptr<ReplyCache> cache)
    : backend_(std::move(backend)), options_(options), cache_(std::move(cache)) {
  if (!backend_) raise(Errc::invalid_argument, "genfollower needs a backend");
  if (!cache_) cache_ = std::make_shared<ReplyCache>();
}

double GenFollowerPredictor::predict(std::span<const events::StepState> history, double horizon) {
  return predict_full(history, horizon).speed;
}

PredictionOutcome GenFollowerPredictor::predict_full(std::span<const events::StepState> history,
                                                     double horizon) {
  if (std::abs(horizon - options_.task.horizon) > 1e-9) {
    raise(Errc::invalid_argument, "genfollower is configured for a " +
                                      text::compact(options_.task.horizon) +
                                      " s horizon, asked for " + text::compact(horizon));
  }
  if (history.size() < 2) raise(Errc::short_history, "genfollower needs at least 2 samples");
  const double dt = history[1].t - history[0].t;
  const auto needed =
      static_cast<std::size_t>(std::llround(options_.task.history_window / dt)) + 1;
  if (history.size() < needed) {
    raise(Errc::short_history, "genfollower needs " + std::to_string(needed) +
                                   " samples, got " + std::to_string(history.size()));
  }
  const auto window = history.subspan(history.size() - needed);
  const events::StepState& now = window.back();

  const PromptBundle prompt = build_prompt(window, dt, options_.task);
  const std::string cache_key = prompt.system_message + '\x1e' + prompt.user_message;

  auto fallback = [&](const std::string& raw, const std::string& reason) -> PredictionOutcome {
    if (!options_.fallback_enabled) {
      raise(Errc::backend_unavailable, "no usable reply and the fallback is disabled: " + reason);
    }
    const double speed =
        models::physics_predict(models::default_idm_params(), window, horizon);
    const FilterResult filtered = safety_filter(speed, now.fv_speed, horizon, options_.limits);
    PredictionOutcome outcome;
    outcome.speed = filtered.speed;
    outcome.explanation =
        "Fell back to the physics baseline because the model reply was unusable (" + reason +
        ").";
    outcome.raw_reply = raw;
    outcome.parse_method = PredictionOutcome::ParseMethod::model_fallback;
    outcome.filtered = true;
    outcome.filter_reason = "llm fallback";
    return outcome;
  };

  // Fetch a reply, preferring the cache; one re-ask (bypassing the cache) is
  // allowed for replies that do not parse. Authentication problems always
  // surface — retrying or falling back would only mask a config error.
  bool from_cache = false;
  std::string raw;
  if (auto cached = cache_->lookup(cache_key)) {
    raw = *cached;
    from_cache = true;
  } else {
    try {
      raw = backend_->chat(prompt);
    } catch (const Error& e) {
      if (e.code() == Errc::auth_failure) throw;
      return fallback("", e.what());
    }
    cache_->store(cache_key, raw);
  }

  ParsedReply parsed;
  bool have_parsed = false;
  for (int attempt = 0; attempt < 2 && !have_parsed; ++attempt) {
    try {
      parsed = parse_response(raw);
      have_parsed = true;
    } catch (const Error& e) {
      if (e.code() != Errc::unparseable_reply || attempt == 1) {
        return fallback(raw, e.what());
      }
      try {
        raw = backend_->chat(prompt);  // re-ask once, past the cache
        cache_->store(cache_key, raw);
        from_cache = false;
      } catch (const Error& inner) {
        if (inner.code() == Errc::auth_failure) throw;
        return fallback(raw, inner.what());
      }
    }
  }

  const FilterResult filtered =
      safety_filter(parsed.speed, now.fv_speed, horizon, options_.limits);
  PredictionOutcome outcome;
  outcome.speed = filtered.speed;
  outcome.explanation = parsed.explanation;
  outcome.raw_reply = raw;
  outcome.parse_method = parsed.method == ParsedReply::Method::structured
                             ? PredictionOutcome::ParseMethod::structured
                             : PredictionOutcome::ParseMethod::regex_fallback;
  outcome.filtered = filtered.filtered;
  outcome.filter_reason = filtered.reason;
  outcome.from_cache = from_cache;
  return outcome;
}

}  // namespace followbench::llm
