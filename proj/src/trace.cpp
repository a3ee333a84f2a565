#include "cascade/trace.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace cascade {

namespace {

constexpr std::array<std::pair<ActionKind, std::string_view>, 8> kKindNames{{
    {ActionKind::click, "click"},
    {ActionKind::type, "type"},
    {ActionKind::hotkey, "hotkey"},
    {ActionKind::scroll, "scroll"},
    {ActionKind::drag, "drag"},
    {ActionKind::wait, "wait"},
    {ActionKind::done, "done"},
    {ActionKind::fail, "fail"},
}};

std::optional<ActionKind> builtin_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  return std::nullopt;
}

double snap(double v, double grid) { return grid * std::floor(v / grid + 0.5); }

}  // namespace

std::string kind_name(const Action& a) {
  if (a.kind == ActionKind::other) return a.name;
  for (const auto& [k, n] : kKindNames)
    if (k == a.kind) return std::string(n);
  return "unknown";
}

bool is_coordinate_key(std::string_view key) {
  static constexpr std::array<std::string_view, 8> kKeys{"x", "y", "x1", "y1", "x2", "y2", "to_x", "to_y"};
  return std::find(kKeys.begin(), kKeys.end(), key) != kKeys.end();
}

void validate(const Action& a) {
  if (a.terminal() && !a.args.empty()) throw std::invalid_argument(kind_name(a) + " action must not carry arguments");
  if (a.kind == ActionKind::other) {
    if (a.name.empty()) throw std::invalid_argument("custom action needs a name");
    if (builtin_kind(a.name)) throw std::invalid_argument("custom action name shadows builtin kind: " + a.name);
  } else if (!a.name.empty()) {
    throw std::invalid_argument("only custom actions carry a name");
  }
  for (const auto& [key, value] : a.args) {
    if (const double* d = std::get_if<double>(&value); d && !std::isfinite(*d))
      throw std::invalid_argument("argument '" + key + "' is not finite");
  }
}

json to_json(const Action& a) {
  json args = json::object();
  for (const auto& [key, value] : a.args) {
    std::visit([&](const auto& v) { args[key] = v; }, value);
  }
  return json{{"kind", kind_name(a)}, {"args", std::move(args)}};
}

Action action_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("action must be an object");
  auto kind_it = j.find("kind");
  if (kind_it == j.end() || !kind_it->is_string()) throw std::invalid_argument("action.kind must be a string");
  Action a;
  const std::string kind = kind_it->get<std::string>();
  if (auto k = builtin_kind(kind)) {
    a.kind = *k;
  } else {
    a.kind = ActionKind::other;
    a.name = kind;
  }
  if (auto args_it = j.find("args"); args_it != j.end() && !args_it->is_null()) {
    if (!args_it->is_object()) throw std::invalid_argument("action.args must be an object");
    for (const auto& [key, value] : args_it->items()) {
      if (value.is_number()) {
        a.args.emplace(key, value.get<double>());
      } else if (value.is_string()) {
        a.args.emplace(key, value.get<std::string>());
      } else {
        throw std::invalid_argument("action argument '" + key + "' must be a number or string");
      }
    }
  }
  validate(a);
  return a;
}

std::string render(const Action& a) {
  std::string out = kind_name(a);
  if (a.args.empty()) return out;
  out += '(';
  bool first = true;
  for (const auto& [key, value] : a.args) {
    if (!first) out += ',';
    first = false;
    out += key;
    out += '=';
    if (const double* d = std::get_if<double>(&value)) {
      out += format_double(*d);
    } else {
      out += '"';
      out += std::get<std::string>(value);
      out += '"';
    }
  }
  out += ')';
  return out;
}

CanonicalAction canonicalize_action(const Action& a, double grid) {
  CanonicalAction c{a};
  for (auto& [key, value] : c.action.args) {
    if (double* d = std::get_if<double>(&value)) {
      if (is_coordinate_key(key) && grid > 0) *d = snap(*d, grid);
      if (*d == 0.0) *d = 0.0;  // fold -0
    } else {
      auto& s = std::get<std::string>(value);
      s = to_lower(trim(s));
    }
  }
  return c;
}

std::string_view to_string(Tier t) { return t == Tier::small ? "small" : "large"; }

Tier tier_from_string(std::string_view s) {
  if (s == "small") return Tier::small;
  if (s == "large") return Tier::large;
  throw std::invalid_argument("unknown tier: " + std::string(s));
}

std::string_view to_string(StepEvent e) {
  switch (e) {
    case StepEvent::escalated: return "escalated";
    case StepEvent::milestone_triggered: return "milestone_triggered";
    case StepEvent::milestone_committed: return "milestone_committed";
    case StepEvent::verification_failed: return "verification_failed";
  }
  return "unknown";
}

std::vector<StepEvent> EventSet::list() const {
  std::vector<StepEvent> out;
  for (auto e : {StepEvent::escalated, StepEvent::milestone_triggered, StepEvent::milestone_committed,
                 StepEvent::verification_failed})
    if (contains(e)) out.push_back(e);
  return out;
}

namespace {
StepEvent event_from_string(std::string_view s) {
  for (auto e : {StepEvent::escalated, StepEvent::milestone_triggered, StepEvent::milestone_committed,
                 StepEvent::verification_failed})
    if (to_string(e) == s) return e;
  throw std::invalid_argument("unknown step event: " + std::string(s));
}

Outcome outcome_from_string(std::string_view s) {
  for (auto o : {Outcome::success, Outcome::failure, Outcome::budget_exhausted})
    if (to_string(o) == s) return o;
  throw std::invalid_argument("unknown outcome: " + std::string(s));
}

bool unit_interval(double v) { return v >= 0.0 && v <= 1.0; }
}  // namespace

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::success: return "success";
    case Outcome::failure: return "failure";
    case Outcome::budget_exhausted: return "budget_exhausted";
  }
  return "unknown";
}

void validate(const TaskSpec& t) {
  if (t.instruction.empty()) throw std::invalid_argument("task instruction must not be empty");
  if (t.max_steps < 1) throw std::invalid_argument("task max_steps must be >= 1");
}

void validate(const Episode& e) {
  validate(e.task);
  if (static_cast<int>(e.steps.size()) > e.task.max_steps)
    throw std::invalid_argument("episode has more steps than the task budget");
  int prev = 0;
  for (const auto& s : e.steps) {
    if (s.index <= prev) throw std::invalid_argument("step indices must strictly increase");
    prev = s.index;
    if (s.stuck_score && !unit_interval(*s.stuck_score)) throw std::invalid_argument("stuck score outside [0,1]");
    if (s.milestone_score && !unit_interval(*s.milestone_score))
      throw std::invalid_argument("milestone score outside [0,1]");
    validate(s.action);
  }
}

Window build_window(std::span<const Step> steps, int t, int K) {
  if (K < 1) throw std::invalid_argument("window length K must be >= 1");
  if (t < 1 || t > static_cast<int>(steps.size()))
    throw std::out_of_range("window end " + std::to_string(t) + " outside [1, " + std::to_string(steps.size()) + "]");
  Window w;
  w.end_index = steps[static_cast<std::size_t>(t - 1)].index;
  const int first = std::max(1, t - K + 1);
  w.entries.reserve(static_cast<std::size_t>(t - first + 1));
  for (int i = first; i <= t; ++i) {
    const Step& s = steps[static_cast<std::size_t>(i - 1)];
    w.entries.push_back({s.rationale, s.action});
  }
  return w;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

template <typename T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> opt_get(const json& j, const char* key) {
  const json& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<T>();
}

}  // namespace

json to_json(const TaskSpec& t) {
  return json{{"task_id", t.task_id}, {"instruction", t.instruction}, {"max_steps", t.max_steps}, {"metadata", t.metadata}};
}

TaskSpec task_from_json(const json& j) {
  TaskSpec t;
  t.task_id = j.at("task_id").get<std::string>();
  t.instruction = j.at("instruction").get<std::string>();
  t.max_steps = j.at("max_steps").get<int>();
  if (auto it = j.find("metadata"); it != j.end() && !it->is_null())
    t.metadata = it->get<std::map<std::string, std::string>>();
  validate(t);
  return t;
}

json to_json(const Step& s) {
  json events = json::array();
  for (auto e : s.events.list()) events.push_back(to_string(e));
  json tokens = nullptr;
  if (s.tokens) tokens = json{{"prompt", s.tokens->prompt}, {"completion", s.tokens->completion}};
  return json{{"type", "step"},
              {"index", s.index},
              {"rationale", s.rationale},
              {"action", to_json(s.action)},
              {"policy", {{"name", s.policy.name}, {"tier", to_string(s.policy.tier)}}},
              {"observation_digest", s.observation_digest},
              {"screenshot_ref", opt_json(s.screenshot_ref)},
              {"stuck_score", opt_json(s.stuck_score)},
              {"milestone_score", opt_json(s.milestone_score)},
              {"events", std::move(events)},
              {"latency", s.latency},
              {"cost_micros", s.cost.micros()},
              {"tokens", std::move(tokens)}};
}

Step step_from_json(const json& j) {
  if (j.value("type", "") != "step") throw std::invalid_argument("expected a step record");
  Step s;
  s.index = j.at("index").get<int>();
  s.rationale = j.at("rationale").get<std::string>();
  s.action = action_from_json(j.at("action"));
  s.policy.name = j.at("policy").at("name").get<std::string>();
  s.policy.tier = tier_from_string(j.at("policy").at("tier").get<std::string>());
  s.observation_digest = j.at("observation_digest").get<std::string>();
  s.screenshot_ref = opt_get<std::string>(j, "screenshot_ref");
  s.stuck_score = opt_get<double>(j, "stuck_score");
  s.milestone_score = opt_get<double>(j, "milestone_score");
  for (const auto& e : j.at("events")) s.events.insert(event_from_string(e.get<std::string>()));
  s.latency = j.at("latency").get<double>();
  s.cost = Money::from_micros(j.at("cost_micros").get<std::int64_t>());
  if (const json& tk = j.at("tokens"); !tk.is_null())
    s.tokens = TokenCounts{tk.at("prompt").get<std::int64_t>(), tk.at("completion").get<std::int64_t>()};
  if (s.stuck_score && !unit_interval(*s.stuck_score)) throw std::invalid_argument("stuck_score outside [0,1]");
  if (s.milestone_score && !unit_interval(*s.milestone_score))
    throw std::invalid_argument("milestone_score outside [0,1]");
  return s;
}

std::string serialize_trace(const Episode& e, const TraceMeta* meta) {
  json header{{"type", "header"},
              {"schema", kTraceSchema},
              {"task", to_json(e.task)},
              {"outcome", to_string(e.outcome)},
              {"terminal_action", e.terminal_action ? to_json(*e.terminal_action) : json(nullptr)},
              {"diagnostic", opt_json(e.diagnostic)},
              {"num_steps", e.steps.size()}};
  if (meta) {
    header["record"] = json{{"config_digest", meta->config_digest},
                            {"seed", meta->seed},
                            {"verifier_calls", meta->verifier_calls},
                            {"monitor_calls", meta->monitor_calls}};
  }
  std::string out = header.dump();
  out += '\n';
  for (const auto& s : e.steps) {
    out += to_json(s).dump();
    out += '\n';
  }
  return out;
}

std::pair<Episode, std::optional<TraceMeta>> parse_trace_with_meta(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  if (lines.empty()) throw TraceParseError(1, "missing header");

  auto parse_line = [&](std::size_t lineno) -> json {
    try {
      return json::parse(lines[lineno - 1]);
    } catch (const json::exception& ex) {
      throw TraceParseError(lineno, std::string("malformed record: ") + ex.what());
    }
  };

  Episode e;
  std::optional<TraceMeta> meta;
  std::size_t num_steps = 0;
  {
    json h = parse_line(1);
    try {
      if (h.value("type", "") != "header") throw std::invalid_argument("first record must be the header");
      if (h.value("schema", "") != kTraceSchema) throw std::invalid_argument("unsupported schema");
      e.task = task_from_json(h.at("task"));
      e.outcome = outcome_from_string(h.at("outcome").get<std::string>());
      if (const json& ta = h.at("terminal_action"); !ta.is_null()) e.terminal_action = action_from_json(ta);
      e.diagnostic = opt_get<std::string>(h, "diagnostic");
      num_steps = h.at("num_steps").get<std::size_t>();
      if (auto it = h.find("record"); it != h.end()) {
        TraceMeta m;
        m.config_digest = it->at("config_digest").get<std::string>();
        m.seed = it->at("seed").get<std::uint64_t>();
        m.verifier_calls = it->at("verifier_calls").get<int>();
        m.monitor_calls = it->at("monitor_calls").get<int>();
        meta = m;
      }
    } catch (const TraceParseError&) {
      throw;
    } catch (const std::exception& ex) {
      throw TraceParseError(1, ex.what());
    }
  }

  if (lines.size() - 1 < num_steps)
    throw TraceParseError(lines.size() + 1, "missing step record (header declares " + std::to_string(num_steps) + ")");
  for (std::size_t i = 2; i <= lines.size(); ++i) {
    if (lines[i - 1].empty() && i == lines.size()) break;
    if (i - 1 > num_steps) throw TraceParseError(i, "unexpected record after declared steps");
    json j = parse_line(i);
    try {
      e.steps.push_back(step_from_json(j));
    } catch (const std::exception& ex) {
      throw TraceParseError(i, ex.what());
    }
  }
  try {
    validate(e);
  } catch (const std::exception& ex) {
    throw TraceParseError(1, ex.what());
  }
  return {std::move(e), std::move(meta)};
}

Episode parse_trace(std::string_view text) { return parse_trace_with_meta(text).first; }

}  // namespace cascade
