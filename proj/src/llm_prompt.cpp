#include <cmath>
#include <sstream>

#include "followbench/llm.hpp"
#include "followbench/text.hpp"

namespace followbench::llm {

// The templates below are versioned output contracts: the unit suite pins the
// system message to a golden fixture and checks the user-message sentences
// verbatim, so any edit here must update those fixtures deliberately.

std::string build_system_message(const TaskConfig& config) {
  const std::string horizon = text::trimmed(config.horizon);
  const std::string window = text::trimmed(config.history_window);
  std::ostringstream out;
  out << "You are the speed controller of the following vehicle in a car-following scenario. "
         "Given the motion of your vehicle and the lead vehicle over the past "
      << window
      << " seconds — the spacing between the vehicles, the lead vehicle speed, the following "
         "vehicle speed, and the relative speed — predict the speed of the following vehicle "
      << horizon << " seconds from now.\n"
      << "\n"
         "Remember that safety is the top priority during car-following: keep a following "
         "distance that always allows a safe stop, even if comfort or speed must be "
         "sacrificed. Take particular care in extreme car-following situations, such as very "
         "small following distances or a fast-approaching lead vehicle; in those cases prefer "
         "slowing down over closing the gap further.\n"
         "\n"
         "The user message will use delimiters to clearly indicate distinct parts of the "
         "input: bracketed headers name each section, and the measurement history sits "
         "between triple-backtick lines.\n"
         "\n"
         "End your reply in exactly this format:\n"
         "Predicted speed: <number> m/s\n"
         "Explanation: <one or two sentences explaining the prediction>\n";
  return out.str();
}

std::string build_user_message(std::span<const events::StepState> history, double dt,
                               double horizon, double window) {
  if (history.size() < 2) {
    raise(Errc::short_history, "user message needs at least 2 history samples");
  }
  const double span = history.back().t - history.front().t;
  if (span < window - 1e-9) {
    raise(Errc::short_history, "history spans " + text::compact(span) + " s, need " +
                                   text::compact(window) + " s");
  }

  const events::StepState& now = history.back();
  std::ostringstream out;
  out << "[Current state]\n"
      << "The lead vehicle is traveling at " << text::trimmed(now.lv_speed)
      << " m/s, the following vehicle is traveling at " << text::trimmed(now.fv_speed)
      << " m/s, the distance between them is " << text::trimmed(now.spacing)
      << " meters, and the relative speed is " << text::trimmed(now.rel_speed) << " m/s.\n"
      << "\n"
      << "[Measurement history]\n"
      << "The table below covers the past " << text::trimmed(window) << " seconds, one row every "
      << text::trimmed(dt) << " seconds, oldest first. Columns: time (s), spacing (m), lead "
         "vehicle speed (m/s), following vehicle speed (m/s), relative speed (m/s).\n"
      << "```\n";
  for (const auto& s : history) {
    out << text::fixed(s.t, 2) << ", " << text::fixed(s.spacing, 2) << ", "
        << text::fixed(s.lv_speed, 2) << ", " << text::fixed(s.fv_speed, 2) << ", "
        << text::fixed(s.rel_speed, 2) << "\n";
  }
  out << "```\n"
      << "\n"
      << "[How the spacing evolves]\n"
      << "Over each time interval the spacing evolves by the trapezoid of relative speeds: it "
         "changes by the average of the relative speed at the start and at the end of the "
         "interval, multiplied by the interval length. The relative speed is the lead vehicle "
         "speed minus the following vehicle speed, so while it is negative the gap keeps "
         "shrinking.\n"
         "\n"
         "[Task]\n"
      << "Predict the speed of the following vehicle " << text::trimmed(horizon)
      << " seconds from now. Think step by step: first decide whether the gap is opening or "
         "closing, then consider how the lead vehicle speed has evolved, and finally judge how "
         "strongly the following vehicle should accelerate or brake to stay safe. Then answer "
         "in exactly this format:\n"
         "Predicted speed: <number> m/s\n"
         "Explanation: <one or two sentences explaining the prediction>\n";
  return out.str();
}

PromptBundle build_prompt(std::span<const events::StepState> history, double dt,
                          const TaskConfig& config) {
  return {build_system_message(config),
          build_user_message(history, dt, config.horizon, config.history_window)};
}

}  // namespace followbench::llm
