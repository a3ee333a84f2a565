#pragma once

#include <random>
#include <string>

#include "cascade/trace.hpp"

namespace testsupport {

using namespace cascade;

inline std::string random_text(std::mt19937_64& rng, int max_len = 24) {
  static constexpr std::string_view kChars = "abcdefghijklmnopqrstuvwxyz ABCXYZ0123456789\"\\/\n\t{}[]:,é✓";
  std::uniform_int_distribution<int> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, kChars.size() - 1);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) {
    const char c = kChars[pick(rng)];
    // Keep multi-byte sequences whole by never emitting a lone high byte.
    if (static_cast<unsigned char>(c) >= 0x80) continue;
    s += c;
  }
  if (rng() % 4 == 0) s += "é✓";
  return s;
}

inline double random_double(std::mt19937_64& rng) {
  switch (rng() % 4) {
    case 0: return static_cast<double>(static_cast<int>(rng() % 2000)) - 500.0;
    case 1: return std::uniform_real_distribution<double>(-1e4, 1e4)(rng);
    case 2: return std::ldexp(static_cast<double>(rng() >> 11), -60);
    default: return -0.0;
  }
}

inline Action random_action(std::mt19937_64& rng, bool allow_terminal = false) {
  const int pick = static_cast<int>(rng() % (allow_terminal ? 9 : 7));
  switch (pick) {
    case 0: return Action::click(random_double(rng), random_double(rng));
    case 1: return Action::type_text(random_text(rng));
    case 2: return Action::hotkey(random_text(rng, 8));
    case 3: return Action::scroll(random_double(rng), random_double(rng), random_double(rng));
    case 4: return {ActionKind::drag, {}, {{"x1", random_double(rng)}, {"y1", random_double(rng)}, {"x2", 3.0}, {"y2", 4.0}}};
    case 5: return {ActionKind::wait, {}, {}};
    case 6: return {ActionKind::other, "open_app", {{"app", random_text(rng, 6)}, {"n", random_double(rng)}}};
    case 7: return Action::done();
    default: return Action::fail();
  }
}

inline Episode random_episode(std::mt19937_64& rng) {
  Episode e;
  e.task.task_id = "task-" + std::to_string(rng() % 100000);
  e.task.instruction = "do " + random_text(rng) + "x";
  const int n = static_cast<int>(rng() % 12);
  e.task.max_steps = n + 1 + static_cast<int>(rng() % 5);
  if (rng() % 2) e.task.metadata["k"] = random_text(rng, 5);
  int index = 0;
  for (int i = 0; i < n; ++i) {
    Step s;
    index += 1 + static_cast<int>(rng() % 2);
    s.index = index;
    s.rationale = random_text(rng, 40);
    const bool last = i == n - 1;
    s.action = random_action(rng, last);
    s.policy = {rng() % 2 ? "sim-small" : "remote/" + random_text(rng, 6), rng() % 2 ? Tier::small : Tier::large};
    s.observation_digest = random_text(rng, 30);
    if (rng() % 2) s.screenshot_ref = "shots/" + std::to_string(i) + ".png";
    if (rng() % 2) s.stuck_score = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (rng() % 3 == 0) s.milestone_score = rng() % 2 ? 1.0 : 0.0;
    if (rng() % 2) s.events.insert(StepEvent::escalated);
    if (rng() % 3 == 0) s.events.insert(StepEvent::milestone_triggered);
    if (rng() % 5 == 0) s.events.insert(StepEvent::milestone_committed);
    if (rng() % 7 == 0) s.events.insert(StepEvent::verification_failed);
    s.latency = std::uniform_real_distribution<double>(0.0, 10.0)(rng);
    s.cost = Money::from_micros(static_cast<std::int64_t>(rng() % 100000));
    if (rng() % 2) s.tokens = TokenCounts{static_cast<std::int64_t>(rng() % 5000), static_cast<std::int64_t>(rng() % 500)};
    e.steps.push_back(std::move(s));
  }
  e.outcome = static_cast<Outcome>(rng() % 3);
  if (!e.steps.empty() && e.steps.back().action.terminal()) e.terminal_action = e.steps.back().action;
  if (rng() % 3 == 0) e.diagnostic = random_text(rng);
  return e;
}

}  // namespace testsupport
