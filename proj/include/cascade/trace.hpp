#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "cascade/util.hpp"

namespace cascade {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Actions

enum class ActionKind { click, type, hotkey, scroll, drag, wait, done, fail, other };

using ArgValue = std::variant<double, std::string>;
using ArgMap = std::map<std::string, ArgValue>;

struct Action {
  ActionKind kind = ActionKind::wait;
  std::string name;  // set only for ActionKind::other
  ArgMap args;

  static Action done() { return {ActionKind::done, {}, {}}; }
  static Action fail() { return {ActionKind::fail, {}, {}}; }
  static Action click(double x, double y) { return {ActionKind::click, {}, {{"x", x}, {"y", y}}}; }
  static Action type_text(std::string text) { return {ActionKind::type, {}, {{"text", std::move(text)}}}; }
  static Action hotkey(std::string keys) { return {ActionKind::hotkey, {}, {{"keys", std::move(keys)}}}; }
  static Action scroll(double x, double y, double amount) {
    return {ActionKind::scroll, {}, {{"x", x}, {"y", y}, {"amount", amount}}};
  }

  bool terminal() const { return kind == ActionKind::done || kind == ActionKind::fail; }

  friend bool operator==(const Action&, const Action&) = default;
};

// Wire name of the action kind ("click", ..., or the custom name for `other`).
std::string kind_name(const Action& a);

// Keys whose numeric values are screen coordinates and get quantized.
bool is_coordinate_key(std::string_view key);

// Throws std::invalid_argument when the action violates its invariants.
void validate(const Action& a);

json to_json(const Action& a);
// Throws std::invalid_argument on a malformed or invalid action object.
Action action_from_json(const json& j);

// Short human-readable rendering, e.g. `click(x=100,y=60)`.
std::string render(const Action& a);

// An action with coordinates snapped to a grid and string arguments lowercased
// and trimmed. Two actions that "do the same thing" compare equal.
struct CanonicalAction {
  Action action;

  std::string render() const { return cascade::render(action); }
  friend bool operator==(const CanonicalAction&, const CanonicalAction&) = default;
};

inline constexpr double kDefaultGrid = 20.0;

// Coordinates snap to the nearest multiple of `grid` (cells are centred on
// the multiples; halfway values round up). Idempotent and total.
CanonicalAction canonicalize_action(const Action& a, double grid = kDefaultGrid);
inline CanonicalAction canonicalize_action(const CanonicalAction& a, double grid = kDefaultGrid) {
  return canonicalize_action(a.action, grid);
}

// ---------------------------------------------------------------------------
// Policies, steps, episodes

enum class Tier { small, large };

std::string_view to_string(Tier t);
Tier tier_from_string(std::string_view s);

struct PolicyId {
  std::string name;
  Tier tier = Tier::small;

  friend bool operator==(const PolicyId&, const PolicyId&) = default;
};

enum class StepEvent : std::uint8_t {
  escalated = 1,
  milestone_triggered = 2,
  milestone_committed = 4,
  verification_failed = 8,
};

std::string_view to_string(StepEvent e);

class EventSet {
 public:
  EventSet() = default;
  EventSet(std::initializer_list<StepEvent> events) {
    for (auto e : events) insert(e);
  }

  void insert(StepEvent e) { bits_ |= static_cast<std::uint8_t>(e); }
  bool contains(StepEvent e) const { return (bits_ & static_cast<std::uint8_t>(e)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::vector<StepEvent> list() const;

  friend bool operator==(EventSet, EventSet) = default;

 private:
  std::uint8_t bits_ = 0;
};

struct TokenCounts {
  std::int64_t prompt = 0;
  std::int64_t completion = 0;

  friend bool operator==(const TokenCounts&, const TokenCounts&) = default;
};

struct TaskSpec {
  std::string task_id;
  std::string instruction;
  int max_steps = 1;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

void validate(const TaskSpec& t);

struct Step {
  int index = 0;
  std::string rationale;
  Action action;
  PolicyId policy;
  // Digest of the observation produced by executing `action`.
  std::string observation_digest;
  std::optional<std::string> screenshot_ref;
  std::optional<double> stuck_score;
  std::optional<double> milestone_score;
  EventSet events;
  double latency = 0.0;  // seconds
  Money cost;            // everything spent at this step
  std::optional<TokenCounts> tokens;

  friend bool operator==(const Step&, const Step&) = default;
};

enum class Outcome { success, failure, budget_exhausted };

std::string_view to_string(Outcome o);

struct Episode {
  TaskSpec task;
  std::vector<Step> steps;
  Outcome outcome = Outcome::failure;
  std::optional<Action> terminal_action;
  std::optional<std::string> diagnostic;

  bool succeeded() const { return outcome == Outcome::success; }
  // Failed although the agent itself declared completion.
  bool done_but_failed() const {
    return !succeeded() && terminal_action && terminal_action->kind == ActionKind::done;
  }

  friend bool operator==(const Episode&, const Episode&) = default;
};

// Throws std::invalid_argument if step indices or scores break the invariants.
void validate(const Episode& e);

// ---------------------------------------------------------------------------
// Monitor windows

struct WindowEntry {
  std::string rationale;
  Action action;

  friend bool operator==(const WindowEntry&, const WindowEntry&) = default;
};

struct Window {
  std::vector<WindowEntry> entries;
  int end_index = 0;

  std::size_t size() const { return entries.size(); }
  friend bool operator==(const Window&, const Window&) = default;
};

// Current step plus up to five predecessors.
inline constexpr int kDefaultWindowLength = 6;

// Last min(K, t) (rationale, action) pairs ending at 1-based step t.
// Throws std::out_of_range for t outside [1, steps.size()].
Window build_window(std::span<const Step> steps, int t, int K = kDefaultWindowLength);
inline Window build_window(const Episode& e, int t, int K = kDefaultWindowLength) {
  return build_window(std::span<const Step>(e.steps), t, K);
}

// ---------------------------------------------------------------------------
// Trace files: one header line followed by one line per step.

// Run-level fields carried in the header of a recorded episode.
struct TraceMeta {
  std::string config_digest;
  std::uint64_t seed = 0;
  int verifier_calls = 0;
  int monitor_calls = 0;

  friend bool operator==(const TraceMeta&, const TraceMeta&) = default;
};

inline constexpr std::string_view kTraceSchema = "cascade-trace/1";

class TraceParseError : public std::runtime_error {
 public:
  TraceParseError(std::size_t line, const std::string& what)
      : std::runtime_error("trace line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

json to_json(const TaskSpec& t);
TaskSpec task_from_json(const json& j);
json to_json(const Step& s);
Step step_from_json(const json& j);

std::string serialize_trace(const Episode& e, const TraceMeta* meta = nullptr);
Episode parse_trace(std::string_view text);
std::pair<Episode, std::optional<TraceMeta>> parse_trace_with_meta(std::string_view text);

}  // namespace cascade
