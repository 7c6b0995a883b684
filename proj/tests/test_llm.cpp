#include <followbench/llm.hpp>
#include <followbench/synth.hpp>
#include <followbench/text.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <regex>
#include <sstream>

#include "test_util.hpp"

using namespace followbench;
using fbtest::code_of;

namespace {

// n samples at dt ending in the given state; earlier samples identical but
// shifted back in time. All values are chosen 2-decimal exact where needed.
std::vector<events::StepState> window_history(int n, double dt, events::StepState last) {
  std::vector<events::StepState> out;
  for (int i = 0; i < n; ++i) {
    events::StepState s = last;
    s.t = last.t - dt * (n - 1 - i);
    out.push_back(s);
  }
  return out;
}

std::vector<events::StepState> standard_window() {
  return window_history(41, 0.1, {4.0, 18.25, 8.25, 8.25, 0.0});
}

int fenced_row_count(const std::string& user_message) {
  const std::size_t open = user_message.find("```\n");
  REQUIRE(open != std::string::npos);
  const std::size_t begin = open + 4;
  const std::size_t close = user_message.find("```", begin);
  REQUIRE(close != std::string::npos);
  int rows = 0;
  std::istringstream block(user_message.substr(begin, close - begin));
  std::string line;
  while (std::getline(block, line)) {
    if (!line.empty()) ++rows;
  }
  return rows;
}

class CountingBackend : public llm::ChatBackend {
 public:
  int calls = 0;
  llm::MockBackend inner;
  std::string chat(const llm::PromptBundle& prompt) override {
    ++calls;
    return inner.chat(prompt);
  }
  std::string name() const override { return "counting"; }
};

class ScriptedBackend : public llm::ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  int calls = 0;
  std::string chat(const llm::PromptBundle&) override {
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(calls), replies_.size() - 1);
    ++calls;
    return replies_[idx];
  }
  std::string name() const override { return "scripted"; }

 private:
  std::vector<std::string> replies_;
};

class ThrowingBackend : public llm::ChatBackend {
 public:
  explicit ThrowingBackend(Errc code) : code_(code) {}
  int calls = 0;
  std::string chat(const llm::PromptBundle&) override {
    ++calls;
    raise(code_, "scripted transport failure");
  }
  std::string name() const override { return "throwing"; }

 private:
  Errc code_;
};

}  // namespace

TEST_CASE("the system message matches its golden fixture byte for byte") {
  const std::string golden = fbtest::read_file(fbtest::data_dir() / "system_message_golden.txt");
  CHECK(llm::build_system_message({}) == golden);
}

TEST_CASE("the system message names the task, the format, and the safety rule") {
  const std::string msg = llm::build_system_message({});
  CHECK(msg.find("past 4 seconds") != std::string::npos);
  CHECK(msg.find("0.5 seconds from now") != std::string::npos);
  CHECK(msg.find("safety is the top priority") != std::string::npos);
  CHECK(msg.find("Predicted speed: <number> m/s") != std::string::npos);
  CHECK(msg.find("Explanation:") != std::string::npos);

  llm::TaskConfig wide;
  wide.history_window = 6.0;
  wide.horizon = 1.0;
  const std::string other = llm::build_system_message(wide);
  CHECK(other.find("past 6 seconds") != std::string::npos);
  CHECK(other.find("1 seconds from now") != std::string::npos);
}

TEST_CASE("the user message states the current scene in plain numbers") {
  const auto history = window_history(41, 0.1, {4.0, 49.9, 20.8, 6.43, 20.8 - 6.43});
  const std::string msg = llm::build_user_message(history, 0.1, 0.5);

  CHECK(msg.find("The lead vehicle is traveling at 20.8 m/s, the following vehicle is "
                 "traveling at 6.43 m/s, the distance between them is 49.9 meters, and the "
                 "relative speed is 14.37 m/s.") != std::string::npos);
  CHECK(msg.find("[Current state]") != std::string::npos);
  CHECK(msg.find("[Measurement history]") != std::string::npos);
  CHECK(msg.find("[How the spacing evolves]") != std::string::npos);
  CHECK(msg.find("[Task]") != std::string::npos);
  CHECK(msg.find("Think step by step") != std::string::npos);
  CHECK(msg.find("Predict the speed of the following vehicle 0.5 seconds from now") !=
        std::string::npos);
  CHECK(msg.find("Predicted speed: <number> m/s") != std::string::npos);
  CHECK(msg.find("trapezoid of relative speeds") != std::string::npos);

  // Whole numbers lose their trailing zeros in the sentence.
  const auto calm = window_history(41, 0.1, {4.0, 30.0, 5.0, 5.0, 0.0});
  const std::string calm_msg = llm::build_user_message(calm, 0.1, 0.5);
  CHECK(calm_msg.find("traveling at 5 m/s") != std::string::npos);
  CHECK(calm_msg.find("is 30 meters") != std::string::npos);
}

TEST_CASE("the fenced history table has one 2-decimal row per sample") {
  const auto history = standard_window();
  const std::string msg = llm::build_user_message(history, 0.1, 0.5);

  CHECK(fenced_row_count(msg) == 41);
  CHECK(msg.find("0.00, 18.25, 8.25, 8.25, 0.00\n") != std::string::npos);   // first row
  CHECK(msg.find("4.00, 18.25, 8.25, 8.25, 0.00\n") != std::string::npos);   // last row
  CHECK(msg.find("one row every 0.1 seconds") != std::string::npos);
  CHECK(msg.find("covers the past 4 seconds") != std::string::npos);

  // A coarser grid means fewer rows over the same window.
  const auto coarse = window_history(9, 0.5, {4.0, 18.25, 8.25, 8.25, 0.0});
  CHECK(fenced_row_count(llm::build_user_message(coarse, 0.5, 0.5)) == 9);
}

TEST_CASE("the user message rejects histories shorter than the window") {
  const auto brief = window_history(21, 0.1, {2.0, 18.25, 8.25, 8.25, 0.0});  // spans 2 s
  CHECK(code_of([&] { llm::build_user_message(brief, 0.1, 0.5); }) == Errc::short_history);

  const auto single = window_history(1, 0.1, {0.0, 18.25, 8.25, 8.25, 0.0});
  CHECK(code_of([&] { llm::build_user_message(single, 0.1, 0.5); }) == Errc::short_history);

  CHECK_NOTHROW(llm::build_user_message(brief, 0.1, 0.5, 2.0));  // narrower window is fine
}

TEST_CASE("build_prompt pairs the system and user roles in order") {
  const auto bundle = llm::build_prompt(standard_window(), 0.1);
  const auto combined = bundle.combined();
  REQUIRE(combined.size() == 2);
  CHECK(combined[0].first == "system");
  CHECK(combined[0].second == llm::build_system_message({}));
  CHECK(combined[1].first == "user");
  CHECK(combined[1].second.find("[Task]") != std::string::npos);
}

TEST_CASE("parse_response survives the paraphrase corpus") {
  const auto doc =
      nlohmann::json::parse(fbtest::read_file(fbtest::data_dir() / "parser_fuzz.json"));
  int parseable = 0;
  int unparseable = 0;
  for (const auto& c : doc["cases"]) {
    const std::string reply = c["reply"].get<std::string>();
    if (c.value("unparseable", false)) {
      ++unparseable;
      CHECK(code_of([&] { llm::parse_response(reply); }) == Errc::unparseable_reply);
      continue;
    }
    ++parseable;
    const llm::ParsedReply parsed = llm::parse_response(reply);
    CHECK_MESSAGE(parsed.speed == c["speed"].get<double>(), "reply: ", reply);
    CHECK(!parsed.explanation.empty());
  }
  CHECK(parseable == 40);
  CHECK(unparseable == 2);
}

TEST_CASE("parse_response labels how it extracted the number") {
  const auto structured =
      llm::parse_response("Predicted speed: 4.2 m/s\nExplanation: smooth traffic ahead.");
  CHECK(structured.method == llm::ParsedReply::Method::structured);
  CHECK(structured.speed == 4.2);
  CHECK(structured.explanation == "smooth traffic ahead.");

  const auto loose = llm::parse_response("It settles around 6.1 m/s in my estimation.");
  CHECK(loose.method == llm::ParsedReply::Method::regex_fallback);
  CHECK(loose.speed == 6.1);

  CHECK(code_of([] { llm::parse_response("Predicted speed: 99999 m/s"); }) ==
        Errc::unparseable_reply);  // absurd magnitude
  CHECK(code_of([] { llm::parse_response(""); }) == Errc::unparseable_reply);
}

TEST_CASE("safety_filter clamps to the reachable speed bracket") {
  // v_now = 5, horizon 0.5: reachable is [1, 7.5].
  const auto ok = llm::safety_filter(4.2, 5.0, 0.5);
  CHECK(ok.speed == 4.2);
  CHECK_FALSE(ok.filtered);
  CHECK(ok.reason.empty());

  // v_now = 2: lo_raw = -2 so the floor is the non-negativity constraint.
  const auto negative = llm::safety_filter(-1.0, 2.0, 0.5);
  CHECK(negative.speed == 0.0);
  CHECK(negative.filtered);
  CHECK(negative.reason == "non-negative speed");

  // v_now = 12: lo = 8; a prediction of 5 would brake harder than 8 m/s^2.
  const auto brake = llm::safety_filter(5.0, 12.0, 0.5);
  CHECK(brake.speed == 8.0);
  CHECK(brake.reason == "deceleration cap");

  // v_now = 4: hi = 6.5; 30 m/s would need 52 m/s^2.
  const auto sprint = llm::safety_filter(30.0, 4.0, 0.5);
  CHECK(sprint.speed == 6.5);
  CHECK(sprint.reason == "acceleration cap");

  // v_now = 59: the absolute 60 m/s cap binds before the acceleration cap.
  const auto cap = llm::safety_filter(70.0, 59.0, 0.5);
  CHECK(cap.speed == 60.0);
  CHECK(cap.reason == "speed cap");

  const auto nan = llm::safety_filter(std::numeric_limits<double>::quiet_NaN(), 5.0, 0.5);
  CHECK(nan.speed == 1.0);  // degenerate prediction lands on the safe floor
  CHECK(nan.reason == "non-finite prediction");
}

TEST_CASE("safety_filter is idempotent and validates its inputs") {
  for (double predicted : {-3.0, 0.0, 2.0, 5.0, 7.2, 11.0, 80.0}) {
    for (double v_now : {0.0, 1.5, 8.0, 58.0}) {
      const auto once = llm::safety_filter(predicted, v_now, 0.5);
      const auto twice = llm::safety_filter(once.speed, v_now, 0.5);
      CHECK(twice.speed == once.speed);
      CHECK_FALSE(twice.filtered);
    }
  }
  CHECK(code_of([] { llm::safety_filter(5.0, -1.0, 0.5); }) == Errc::invalid_argument);
  CHECK(code_of([] { llm::safety_filter(5.0, 5.0, 0.0); }) == Errc::invalid_argument);
  CHECK(code_of([] { llm::safety_filter(5.0, 5.0, 0.5, {0.0, 8.0, 60.0}); }) ==
        Errc::invalid_argument);
}

TEST_CASE("the mock backend answers in the advertised format, deterministically") {
  llm::MockBackend mock;
  const auto prompt = llm::build_prompt(standard_window(), 0.1);

  const std::string reply = mock.chat(prompt);
  CHECK(reply == mock.chat(prompt));  // pure function of the prompt

  const auto parsed = llm::parse_response(reply);
  CHECK(parsed.method == llm::ParsedReply::Method::structured);
  CHECK(!parsed.explanation.empty());

  // The history rows are 2-decimal exact here, so the reply's speed equals
  // the reference computed straight from the final state.
  const auto window = standard_window();
  CHECK(parsed.speed == llm::MockBackend::reference_speed(window.back(), 0.5));

  // A different scene produces a different answer.
  const auto tight = window_history(41, 0.1, {4.0, 2.5, 2.0, 10.0, -8.0});
  const std::string other = mock.chat(llm::build_prompt(tight, 0.1));
  CHECK(other != reply);
  CHECK(llm::parse_response(other).speed < parsed.speed);  // braking hard

  // No fenced history to read back: the mock reports a malformed exchange.
  llm::PromptBundle empty_prompt{llm::build_system_message({}), "[Task]\nPredict."};
  CHECK(code_of([&] { mock.chat(empty_prompt); }) == Errc::malformed_reply);
}

TEST_CASE("make_backend wires the mock and validates remote configuration") {
  llm::BackendConfig mock_config;
  CHECK(llm::make_backend(mock_config)->name() == "mock");
  CHECK(llm::parse_backend_kind("mock") == llm::BackendConfig::Kind::mock);
  CHECK(llm::parse_backend_kind("remote") == llm::BackendConfig::Kind::remote);
  CHECK(code_of([] { llm::parse_backend_kind("local"); }) == Errc::invalid_argument);

  llm::BackendConfig remote;
  remote.kind = llm::BackendConfig::Kind::remote;
  remote.api_key_env = "FOLLOWBENCH_TEST_KEY";
  remote.base_url = "";
  CHECK(code_of([&] { llm::make_backend(remote); }) == Errc::invalid_argument);

  remote.base_url = "http://127.0.0.1:1/v1";
  ::unsetenv("FOLLOWBENCH_TEST_KEY");
  CHECK(code_of([&] { llm::make_backend(remote); }) == Errc::auth_failure);

  ::setenv("FOLLOWBENCH_TEST_KEY", "dummy", 1);
  CHECK(llm::make_backend(remote)->name() == "remote:gpt-4");  // no network at construction
  ::unsetenv("FOLLOWBENCH_TEST_KEY");
}

TEST_CASE("the reply cache stores by exact key") {
  llm::ReplyCache cache;
  CHECK(cache.size() == 0);
  CHECK_FALSE(cache.lookup("a").has_value());
  cache.store("a", "one");
  cache.store("b", "two");
  CHECK(cache.size() == 2);
  CHECK(cache.lookup("a") == "one");
  cache.store("a", "three");  // overwrite, no duplicate
  CHECK(cache.size() == 2);
  CHECK(cache.lookup("a") == "three");
}

TEST_CASE("genfollower asks once and serves repeats from the cache") {
  auto backend = std::make_shared<CountingBackend>();
  auto cache = std::make_shared<llm::ReplyCache>();
  llm::GenFollowerPredictor predictor(backend, {}, cache);
  const auto window = standard_window();

  const auto first = predictor.predict_full(window, 0.5);
  CHECK(backend->calls == 1);
  CHECK_FALSE(first.from_cache);
  CHECK(first.parse_method == llm::PredictionOutcome::ParseMethod::structured);
  CHECK_FALSE(first.filtered);
  CHECK(first.speed == llm::MockBackend::reference_speed(window.back(), 0.5));
  CHECK(!first.explanation.empty());
  CHECK(!first.raw_reply.empty());

  const auto second = predictor.predict_full(window, 0.5);
  CHECK(backend->calls == 1);  // served from the cache
  CHECK(second.from_cache);
  CHECK(second.speed == first.speed);

  // A second predictor sharing the cache also skips the backend.
  llm::GenFollowerPredictor sibling(backend, {}, cache);
  CHECK(sibling.predict_full(window, 0.5).speed == first.speed);
  CHECK(backend->calls == 1);
  CHECK(cache->size() == 1);

  CHECK(predictor.predict(window, 0.5) == first.speed);
  CHECK(predictor.name() == "genfollower");
  CHECK(predictor.requires_warmup() == 4.0);
}

TEST_CASE("genfollower re-asks once on an unparseable reply, then falls back") {
  const auto window = standard_window();

  SUBCASE("garbage twice lands on the physics fallback") {
    auto backend = std::make_shared<ScriptedBackend>(
        std::vector<std::string>{"no usable content", "still nothing useful"});
    llm::GenFollowerPredictor predictor(backend);
    const auto outcome = predictor.predict_full(window, 0.5);

    CHECK(backend->calls == 2);  // initial ask + one re-ask
    CHECK(outcome.parse_method == llm::PredictionOutcome::ParseMethod::model_fallback);
    CHECK(outcome.filtered);
    CHECK(outcome.filter_reason == "llm fallback");
    CHECK(outcome.explanation.find("physics baseline") != std::string::npos);

    const double physics =
        models::physics_predict(models::default_idm_params(), window, 0.5);
    CHECK(outcome.speed == llm::safety_filter(physics, window.back().fv_speed, 0.5).speed);
  }

  SUBCASE("a valid reply on the re-ask wins") {
    auto backend = std::make_shared<ScriptedBackend>(std::vector<std::string>{
        "nothing to see", "Predicted speed: 7.75 m/s\nExplanation: mild adjustment."});
    llm::GenFollowerPredictor predictor(backend);
    const auto outcome = predictor.predict_full(window, 0.5);

    CHECK(backend->calls == 2);
    CHECK(outcome.parse_method == llm::PredictionOutcome::ParseMethod::structured);
    CHECK(outcome.speed == 7.75);
    CHECK_FALSE(outcome.filtered);
    CHECK_FALSE(outcome.from_cache);
  }

  SUBCASE("the filter still guards a parsed but unsafe reply") {
    auto backend = std::make_shared<ScriptedBackend>(
        std::vector<std::string>{"Predicted speed: 55 m/s\nExplanation: floor it."});
    llm::GenFollowerPredictor predictor(backend);
    const auto outcome = predictor.predict_full(window, 0.5);
    CHECK(outcome.filtered);
    CHECK(outcome.filter_reason == "acceleration cap");
    CHECK(outcome.speed == window.back().fv_speed + 5.0 * 0.5);
  }
}

TEST_CASE("genfollower handles transport failures per policy") {
  const auto window = standard_window();

  SUBCASE("transport errors fall back when allowed") {
    auto backend = std::make_shared<ThrowingBackend>(Errc::timeout);
    llm::GenFollowerPredictor predictor(backend);
    const auto outcome = predictor.predict_full(window, 0.5);
    CHECK(backend->calls == 1);
    CHECK(outcome.parse_method == llm::PredictionOutcome::ParseMethod::model_fallback);
    CHECK(outcome.filter_reason == "llm fallback");
    CHECK(outcome.raw_reply.empty());
  }

  SUBCASE("with the fallback disabled they surface as errors") {
    auto backend = std::make_shared<ThrowingBackend>(Errc::timeout);
    llm::GenFollowerOptions options;
    options.fallback_enabled = false;
    llm::GenFollowerPredictor predictor(backend, options);
    CHECK(code_of([&] { predictor.predict_full(window, 0.5); }) == Errc::backend_unavailable);
  }

  SUBCASE("authentication failures always surface") {
    auto backend = std::make_shared<ThrowingBackend>(Errc::auth_failure);
    llm::GenFollowerPredictor predictor(backend);  // fallback enabled
    CHECK(code_of([&] { predictor.predict_full(window, 0.5); }) == Errc::auth_failure);
  }
}

TEST_CASE("genfollower validates its inputs") {
  CHECK(code_of([] { llm::GenFollowerPredictor(nullptr); }) == Errc::invalid_argument);

  auto backend = std::make_shared<llm::MockBackend>();
  llm::GenFollowerPredictor predictor(backend);

  const auto window = standard_window();
  CHECK(code_of([&] { predictor.predict_full(window, 1.0); }) == Errc::invalid_argument);

  const auto brief = window_history(30, 0.1, {2.9, 18.25, 8.25, 8.25, 0.0});
  CHECK(code_of([&] { predictor.predict_full(brief, 0.5); }) == Errc::short_history);

  // Longer histories are trimmed to the configured window: same answer.
  const auto longer = window_history(61, 0.1, {6.0, 18.25, 8.25, 8.25, 0.0});
  CHECK(predictor.predict_full(longer, 0.5).speed ==
        predictor.predict_full(window_history(41, 0.1, {6.0, 18.25, 8.25, 8.25, 0.0}), 0.5)
            .speed);
}

TEST_CASE("export_finetune_dataset writes seeded, well-formed JSONL examples") {
  events::LeaderSpec spec;
  spec.duration = 12.0;
  const auto fleet = events::synth_events(spec, models::default_idm_params(), 3, 41);
  const auto dir = fbtest::temp_dir();

  llm::FinetuneOptions options;
  options.n_instances = 50;
  options.seed = 7;
  llm::export_finetune_dataset(fleet, dir / "train.jsonl", options);

  const std::string body = fbtest::read_file(dir / "train.jsonl");
  const std::string golden_system = llm::build_system_message({});
  std::istringstream lines(body);
  std::string line;
  int count = 0;
  const std::regex assistant_re(R"(^Predicted speed: \d+\.\d\d m/s\n)");
  while (std::getline(lines, line)) {
    REQUIRE(!line.empty());
    const auto doc = nlohmann::json::parse(line);
    REQUIRE(doc.contains("messages"));
    REQUIRE(doc["messages"].size() == 3);
    CHECK(doc["messages"][0]["role"] == "system");
    CHECK(doc["messages"][0]["content"] == golden_system);
    CHECK(doc["messages"][1]["role"] == "user");
    const std::string user = doc["messages"][1]["content"].get<std::string>();
    CHECK(user.find("[Measurement history]") != std::string::npos);
    CHECK(doc["messages"][2]["role"] == "assistant");
    const std::string assistant = doc["messages"][2]["content"].get<std::string>();
    CHECK(std::regex_search(assistant, assistant_re));
    const double answer = llm::parse_response(assistant).speed;
    CHECK(answer >= 0.0);
    ++count;
  }
  CHECK(count == 50);

  // Same seed, same bytes; a different seed samples different windows.
  llm::export_finetune_dataset(fleet, dir / "again.jsonl", options);
  CHECK(fbtest::read_file(dir / "again.jsonl") == body);
  options.seed = 8;
  llm::export_finetune_dataset(fleet, dir / "other.jsonl", options);
  CHECK(fbtest::read_file(dir / "other.jsonl") != body);

  options.seed = 7;
  options.n_instances = 100000;
  CHECK(code_of([&] { llm::export_finetune_dataset(fleet, dir / "big.jsonl", options); }) ==
        Errc::insufficient_data);
  options.n_instances = 0;
  CHECK(code_of([&] { llm::export_finetune_dataset(fleet, dir / "none.jsonl", options); }) ==
        Errc::invalid_argument);

  std::filesystem::remove_all(dir);
}

TEST_CASE("the finetune answer equals the recorded speed horizon seconds later") {
  // One hand-built event: the follower speed is a recognizable ramp so the
  // label can be traced back to the record.
  std::vector<std::array<double, 4>> rows;
  for (int i = 0; i <= 50; ++i) {
    rows.push_back({0.1 * i, 30.0 + 0.05 * i, 9.0, 4.0 + 0.1 * i});
  }
  auto event = fbtest::make_event("ramp", 0.1, rows);
  event = events::validate_event(event);
  const std::vector<events::CarFollowingEvent> fleet = {event};

  const auto dir = fbtest::temp_dir();
  llm::FinetuneOptions options;
  options.n_instances = 5;
  options.seed = 3;
  llm::export_finetune_dataset(fleet, dir / "ramp.jsonl", options);

  std::istringstream lines(fbtest::read_file(dir / "ramp.jsonl"));
  std::string line;
  while (std::getline(lines, line)) {
    const auto doc = nlohmann::json::parse(line);
    const std::string user = doc["messages"][1]["content"].get<std::string>();
    const std::string assistant = doc["messages"][2]["content"].get<std::string>();

    // Recover the window's end time from the last fenced row, then check the
    // label against the recorded speed 0.5 s later, rounded to 2 decimals.
    const auto parsed_rows = [&] {
      const std::size_t open = user.find("```\n");
      const std::size_t close = user.find("```", open + 4);
      std::istringstream block(user.substr(open + 4, close - (open + 4)));
      std::vector<double> t_values;
      std::string row;
      while (std::getline(block, row)) {
        if (row.empty()) continue;
        t_values.push_back(text::parse_double(row.substr(0, row.find(',')), "t"));
      }
      return t_values;
    }();
    REQUIRE(!parsed_rows.empty());
    const double t_now = parsed_rows.back();
    const auto idx = static_cast<std::size_t>(std::llround(t_now / 0.1)) + 5;
    REQUIRE(idx < event.steps.size());
    const double label = llm::parse_response(assistant).speed;
    CHECK(label == text::parse_double(text::fixed(event.steps[idx].fv_speed, 2), "label"));
  }
  std::filesystem::remove_all(dir);
}
