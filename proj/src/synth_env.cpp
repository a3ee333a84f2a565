#include "cascade/synth_env.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace cascade::synth {

namespace {

enum Stream : std::uint64_t { kStall = 1, kLoopLength = 2, kDrift = 3, kProgress = 4, kPlan = 5 };

void require_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string("failure profile: ") + name + " must be in [0,1]");
}

constexpr std::array<std::string_view, 10> kVerbs{"open", "select", "rename", "enable", "export",
                                                  "attach", "sort", "filter", "archive", "share"};
constexpr std::array<std::string_view, 10> kObjects{"settings", "report", "folder", "contact", "invoice",
                                                    "tab", "sheet", "image", "calendar", "draft"};

std::string subgoal_phrase(std::string_view id) {
  std::string s(id);
  if (auto dash = s.find('-'); dash != std::string::npos) s.replace(dash, 1, " the ");
  return s;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = s.find(sep, start);
    out.emplace_back(s.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

int parse_int(std::string_view s) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument("bad integer '" + std::string(s) + "'");
  return v;
}

std::string mode_field(const EnvState& s) {
  switch (s.mode) {
    case Mode::normal: return "normal";
    case Mode::looping: return "loop:" + std::to_string(s.loop_remaining);
    case Mode::drifting: return "drift:" + std::to_string(s.phantom_subgoals) + "." + std::to_string(s.phantom_units);
  }
  return "normal";
}

std::uint64_t task_hash(std::string_view task_id) { return hash_string(task_id, 0x5eed); }

}  // namespace

void FailureProfile::validate() const {
  require_unit(p_stall, "p_stall");
  require_unit(p_drift, "p_drift");
  require_unit(p_correct_small, "p_correct_small");
  require_unit(p_correct_large, "p_correct_large");
  if (p_correct_large < p_correct_small)
    throw std::invalid_argument("failure profile: p_correct_large must be >= p_correct_small");
  if (!(loop_mean >= 1.0) || !std::isfinite(loop_mean)) throw std::invalid_argument("failure profile: loop_mean must be >= 1");
  if (units_per_subgoal < 1) throw std::invalid_argument("failure profile: units_per_subgoal must be >= 1");
}

json FailureProfile::to_json() const {
  return json{{"p_stall", p_stall},
              {"loop_mean", loop_mean},
              {"p_drift", p_drift},
              {"p_correct_small", p_correct_small},
              {"p_correct_large", p_correct_large},
              {"large_recovers", large_recovers},
              {"units_per_subgoal", units_per_subgoal}};
}

FailureProfile FailureProfile::from_json(const json& j) {
  static const std::set<std::string> kKnown{"p_stall", "loop_mean", "p_drift", "p_correct_small",
                                            "p_correct_large", "large_recovers", "units_per_subgoal"};
  if (!j.is_object()) throw std::invalid_argument("failure profile must be an object");
  for (const auto& [key, _] : j.items())
    if (!kKnown.contains(key)) throw std::invalid_argument("failure profile: unknown key '" + key + "'");
  FailureProfile p;
  p.p_stall = j.value("p_stall", p.p_stall);
  p.loop_mean = j.value("loop_mean", p.loop_mean);
  p.p_drift = j.value("p_drift", p.p_drift);
  p.p_correct_small = j.value("p_correct_small", p.p_correct_small);
  p.p_correct_large = j.value("p_correct_large", p.p_correct_large);
  p.large_recovers = j.value("large_recovers", p.large_recovers);
  p.units_per_subgoal = j.value("units_per_subgoal", p.units_per_subgoal);
  p.validate();
  return p;
}

SynthTask generate_task(std::uint64_t seed, int G, const FailureProfile& profile, int max_steps) {
  if (G < 1) throw std::invalid_argument("generate_task: G must be >= 1");
  if (max_steps < 1) throw std::invalid_argument("generate_task: max_steps must be >= 1");
  profile.validate();

  SynthTask t;
  t.seed = seed;
  t.profile = profile;
  std::set<std::string> used;
  for (int i = 0; used.size() < static_cast<std::size_t>(G); ++i) {
    const std::uint64_t h = hash_combine(hash_combine(seed, kPlan), static_cast<std::uint64_t>(i));
    std::string id = std::string(kVerbs[h % kVerbs.size()]) + "-" + std::string(kObjects[(h >> 16) % kObjects.size()]);
    if (used.size() >= kVerbs.size() * kObjects.size()) id += "-" + std::to_string(i);
    if (used.insert(id).second) t.subgoals.push_back(std::move(id));
  }

  std::string instruction = "In order: ";
  std::string joined;
  for (int i = 0; i < G; ++i) {
    if (i > 0) {
      instruction += "; then ";
      joined += ",";
    }
    instruction += subgoal_phrase(t.subgoals[static_cast<std::size_t>(i)]);
    joined += t.subgoals[static_cast<std::size_t>(i)];
  }
  instruction += ".";

  t.task.task_id = "synth-" + hex64(seed);
  t.task.instruction = std::move(instruction);
  t.task.max_steps = max_steps;
  t.task.metadata["subgoals"] = joined;
  t.task.metadata["units_per_subgoal"] = std::to_string(profile.units_per_subgoal);
  return t;
}

std::string state_digest(const std::string& task_id, int G, const EnvState& s) {
  std::string body = "t=" + task_id + ";v=" + std::to_string(s.subgoal_index) + ";u=" + std::to_string(s.unit) +
                     ";m=" + mode_field(s) + ";g=" + std::to_string(G) + ";s=" + std::to_string(s.step);
  return body + "#" + hex64(hash_string(body));
}

EnvState parse_digest(std::string_view digest) {
  const auto hash_pos = digest.rfind('#');
  if (hash_pos == std::string_view::npos) throw std::invalid_argument("observation digest has no hash suffix");
  const std::string_view body = digest.substr(0, hash_pos);
  if (digest.substr(hash_pos + 1) != hex64(hash_string(body)))
    throw std::invalid_argument("observation digest hash mismatch");

  EnvState s;
  for (const auto& field : split(body, ';')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("malformed digest field '" + field + "'");
    const std::string key = field.substr(0, eq);
    const std::string val = field.substr(eq + 1);
    if (key == "v") s.subgoal_index = parse_int(val);
    else if (key == "u") s.unit = parse_int(val);
    else if (key == "s") s.step = parse_int(val);
    else if (key == "m") {
      if (val == "normal") {
        s.mode = Mode::normal;
      } else if (val.rfind("loop:", 0) == 0) {
        s.mode = Mode::looping;
        s.loop_remaining = parse_int(std::string_view(val).substr(5));
      } else if (val.rfind("drift:", 0) == 0) {
        s.mode = Mode::drifting;
        const auto parts = split(std::string_view(val).substr(6), '.');
        if (parts.size() != 2) throw std::invalid_argument("malformed drift field '" + val + "'");
        s.phantom_subgoals = parse_int(parts[0]);
        s.phantom_units = parse_int(parts[1]);
      } else {
        throw std::invalid_argument("unknown mode '" + val + "'");
      }
    }
  }
  return s;
}

StepDraws draws_at(std::uint64_t seed, int step, double loop_mean) {
  auto u = [&](Stream stream) {
    return to_unit(hash_combine(hash_combine(seed, stream), static_cast<std::uint64_t>(step)));
  };
  StepDraws d;
  d.stall = u(kStall);
  d.drift = u(kDrift);
  d.progress = u(kProgress);
  if (loop_mean > 1.0) {
    // Geometric on {1, 2, ...} with the requested mean.
    const double q = 1.0 - 1.0 / loop_mean;
    const double v = 1.0 - u(kLoopLength);  // (0, 1]
    d.loop_length = 1 + static_cast<int>(std::floor(std::log(v) / std::log(q)));
  }
  return d;
}

StepResult env_step(const EnvState& s, const Action& a, Tier tier, const FailureProfile& p, int G,
                    std::uint64_t seed) {
  validate(a);
  StepResult r{s, {}};
  EnvState& n = r.state;
  StepTruth& truth = r.truth;
  ++n.step;
  const int apparent_before = s.apparent_subgoals();
  const bool recovers = tier == Tier::large && p.large_recovers;
  const double p_correct = tier == Tier::small ? p.p_correct_small : p.p_correct_large;

  if (!a.terminal()) {
    const StepDraws d = draws_at(seed, n.step, p.loop_mean);
    switch (s.mode) {
      case Mode::looping:
        if (recovers) {
          n.mode = Mode::normal;
          n.loop_remaining = 0;
        } else {
          truth.in_stuck_region = true;
          if (--n.loop_remaining == 0) n.mode = Mode::normal;
        }
        break;
      case Mode::drifting:
        if (recovers) {
          n.mode = Mode::normal;
          n.phantom_subgoals = 0;
          n.phantom_units = 0;
        } else if (d.progress < p_correct && n.apparent_subgoals() < G) {
          if (++n.phantom_units == p.units_per_subgoal) {
            n.phantom_units = 0;
            ++n.phantom_subgoals;
          }
        }
        break;
      case Mode::normal:
        if (n.subgoal_index >= G) break;
        if (tier == Tier::small && d.stall < p.p_stall) {
          n.mode = Mode::looping;
          n.loop_remaining = d.loop_length;
          truth.in_stuck_region = true;
        } else if (tier == Tier::small && d.drift < p.p_drift) {
          n.mode = Mode::drifting;
          n.phantom_subgoals = 1;
          n.phantom_units = 0;
        } else if (d.progress < p_correct) {
          if (++n.unit == p.units_per_subgoal) {
            n.unit = 0;
            ++n.subgoal_index;
          }
        }
        break;
    }
  }

  truth.drift_active = n.mode == Mode::drifting;
  truth.completes_milestone = n.apparent_subgoals() > apparent_before;
  truth.progress = n.progress(p.units_per_subgoal);
  return r;
}

bool evaluate_episode(const SynthTask& task, const Episode& e) {
  if (e.steps.empty() || !e.terminal_action || e.terminal_action->kind != ActionKind::done) return false;
  if (static_cast<int>(e.steps.size()) > task.task.max_steps) return false;
  const EnvState last = parse_digest(e.steps.back().observation_digest);
  return last.mode != Mode::drifting && last.subgoal_index == task.G();
}

std::vector<StepTruth> reconstruct_truth(const Episode& e, const FailureProfile& p) {
  std::vector<StepTruth> out{StepTruth{}};
  EnvState prev;
  for (const Step& step : e.steps) {
    const EnvState cur = parse_digest(step.observation_digest);
    StepTruth t;
    t.drift_active = cur.mode == Mode::drifting;
    t.completes_milestone = cur.apparent_subgoals() > prev.apparent_subgoals();
    t.progress = cur.progress(p.units_per_subgoal);
    const bool recovered = step.policy.tier == Tier::large && p.large_recovers;
    t.in_stuck_region = !step.action.terminal() &&
                        (cur.mode == Mode::looping || (prev.mode == Mode::looping && !recovered));
    out.push_back(t);
    prev = cur;
  }
  return out;
}

// ---------------------------------------------------------------------------

SynthEnvironment::SynthEnvironment(SynthTask task) : task_(std::move(task)), truths_{StepTruth{}} {
  task_.profile.validate();
}

Observation SynthEnvironment::observe() const {
  return {state_digest(task_.task.task_id, task_.G(), state_), std::nullopt, std::nullopt};
}

void SynthEnvironment::execute(const Action& a, Tier tier) {
  StepResult r = env_step(state_, a, tier, task_.profile, task_.G(), task_.seed);
  state_ = r.state;
  truths_.push_back(r.truth);
}

std::optional<StepTruth> SynthEnvironment::truth_at(int step) const {
  if (step < 0 || step >= static_cast<int>(truths_.size())) return std::nullopt;
  return truths_[static_cast<std::size_t>(step)];
}

// ---------------------------------------------------------------------------

SimPolicy::SimPolicy(Tier tier, std::uint64_t seed, std::string name)
    : id_{name.empty() ? std::string("sim-") + std::string(to_string(tier)) : std::move(name), tier}, seed_(seed) {}

namespace {

Action progress_action(std::string_view task_id, int subgoal, int unit) {
  const std::uint64_t h = hash_combine(hash_combine(task_hash(task_id), static_cast<std::uint64_t>(subgoal)),
                                       static_cast<std::uint64_t>(unit));
  if (unit % 3 == 2) return Action::type_text("value-" + hex64(h).substr(0, 6));
  return Action::click(20.0 * static_cast<double>(2 + h % 90), 20.0 * static_cast<double>(2 + (h >> 20) % 50));
}

Action drift_action(std::string_view task_id, int step) {
  const std::uint64_t h = hash_combine(task_hash(task_id) ^ 0xd1f7, static_cast<std::uint64_t>(step));
  if (step % 2 == 0) return Action::type_text("note-" + hex64(h).substr(0, 8));
  return Action::click(static_cast<double>(40 + h % 1800), static_cast<double>(40 + (h >> 24) % 1000));
}

}  // namespace

PolicyResponse SimPolicy::next_step(const PolicyRequest& req) {
  const auto sg_it = req.task.metadata.find("subgoals");
  const auto units_it = req.task.metadata.find("units_per_subgoal");
  if (sg_it == req.task.metadata.end() || units_it == req.task.metadata.end())
    throw PolicyError("task carries no synthetic plan metadata");
  const std::vector<std::string> subgoals = split(sg_it->second, ',');
  const int G = static_cast<int>(subgoals.size());
  const int units = parse_int(units_it->second);

  EnvState s;
  try {
    s = parse_digest(req.observation_digest);
  } catch (const std::invalid_argument& ex) {
    throw PolicyError(std::string("unreadable observation: ") + ex.what());
  }
  auto name_of = [&](int i) { return subgoal_phrase(subgoals[static_cast<std::size_t>(std::clamp(i, 0, G - 1))]); };

  auto closing = [&](int unit, int subgoal) {
    return unit + 1 == units ? " This completes '" + name_of(subgoal) + "'." : std::string();
  };
  const bool large = id_.tier == Tier::large;

  PolicyResponse r;
  switch (s.mode) {
    case Mode::normal:
      if (s.subgoal_index >= G) {
        r.rationale = "Everything in the task is done.";
        r.action = Action::done();
      } else {
        r.action = progress_action(req.task.task_id, s.subgoal_index, s.unit);
        r.rationale = "Working on '" + name_of(s.subgoal_index) + "', part " + std::to_string(s.unit + 1) + " of " +
                      std::to_string(units) + ": " + render(r.action) + "." + closing(s.unit, s.subgoal_index);
      }
      break;
    case Mode::looping:
      if (large) {
        r.action = Action::hotkey("escape");
        r.rationale = "The same click keeps failing on '" + name_of(s.subgoal_index) + "'; backing out to retry.";
      } else {
        Action a = progress_action(req.task.task_id, s.subgoal_index, s.unit);
        if (a.kind == ActionKind::click) {
          const std::uint64_t h = hash_combine(hash_combine(seed_, task_hash(req.task.task_id)),
                                               static_cast<std::uint64_t>(req.step_index));
          std::get<double>(a.args["x"]) += std::round((to_unit(h) * 2.0 - 1.0) * 9.0);
          std::get<double>(a.args["y"]) += std::round((to_unit(mix64(h)) * 2.0 - 1.0) * 9.0);
        }
        r.action = std::move(a);
        r.rationale = "The page has not reacted yet; retrying '" + name_of(s.subgoal_index) + "'.";
      }
      break;
    case Mode::drifting:
      if (large) {
        r.action = Action::hotkey("alt+left");
        r.rationale = "This screen does not belong to the task; returning to '" + name_of(s.subgoal_index) + "'.";
      } else if (s.apparent_subgoals() >= G) {
        r.rationale = "Everything in the task is done.";
        r.action = Action::done();
      } else {
        r.action = drift_action(req.task.task_id, req.step_index);
        r.rationale = "Working on '" + name_of(s.apparent_subgoals()) + "' from this view: " + render(r.action) + "." +
                      closing(s.phantom_units, s.apparent_subgoals());
      }
      break;
  }
  return r;
}

// ---------------------------------------------------------------------------

void SuiteSpec::validate() const {
  if (num_tasks < 1) throw std::invalid_argument("suite: num_tasks must be >= 1");
  if (min_subgoals < 1 || max_subgoals < min_subgoals) throw std::invalid_argument("suite: need 1 <= min_subgoals <= max_subgoals");
  if (max_steps < 1) throw std::invalid_argument("suite: max_steps must be >= 1");
  profile.validate();
}

json SuiteSpec::to_json() const {
  return json{{"seed", seed},
              {"num_tasks", num_tasks},
              {"min_subgoals", min_subgoals},
              {"max_subgoals", max_subgoals},
              {"max_steps", max_steps},
              {"profile", profile.to_json()}};
}

SuiteSpec SuiteSpec::from_json(const json& j) {
  static const std::set<std::string> kKnown{"seed", "num_tasks", "min_subgoals", "max_subgoals", "max_steps", "profile"};
  if (!j.is_object()) throw std::invalid_argument("suite must be an object");
  for (const auto& [key, _] : j.items())
    if (!kKnown.contains(key)) throw std::invalid_argument("suite: unknown key '" + key + "'");
  SuiteSpec s;
  s.seed = j.value("seed", s.seed);
  s.num_tasks = j.value("num_tasks", s.num_tasks);
  s.min_subgoals = j.value("min_subgoals", s.min_subgoals);
  s.max_subgoals = j.value("max_subgoals", s.max_subgoals);
  s.max_steps = j.value("max_steps", s.max_steps);
  if (auto it = j.find("profile"); it != j.end()) s.profile = FailureProfile::from_json(*it);
  s.validate();
  return s;
}

Suite make_suite(const SuiteSpec& spec) {
  spec.validate();
  Suite s;
  s.spec = spec;
  const auto span = static_cast<std::uint64_t>(spec.max_subgoals - spec.min_subgoals + 1);
  for (int i = 0; i < spec.num_tasks; ++i) {
    const std::uint64_t seed = hash_combine(spec.seed, static_cast<std::uint64_t>(i));
    s.entries.push_back({seed, spec.min_subgoals + static_cast<int>(mix64(seed ^ kPlan) % span)});
  }
  return s;
}

SynthTask Suite::task(std::size_t i) const {
  const SuiteEntry& e = entries.at(i);
  return generate_task(e.seed, e.G, spec.profile, spec.max_steps);
}

json Suite::manifest() const {
  json tasks = json::array();
  for (const auto& e : entries) tasks.push_back(json{{"seed", e.seed}, {"G", e.G}});
  return json{{"suite", spec.to_json()}, {"tasks", std::move(tasks)}};
}

Suite Suite::from_manifest(const json& j) {
  const json& spec = j.at("suite");
  const json& profile = spec.at("profile");
  for (const char* key : {"p_stall", "loop_mean", "p_drift", "p_correct_small", "p_correct_large", "large_recovers",
                          "units_per_subgoal"})
    if (!profile.contains(key)) throw std::invalid_argument(std::string("manifest profile is missing '") + key + "'");
  Suite s;
  s.spec = SuiteSpec::from_json(spec);
  for (const auto& t : j.at("tasks")) s.entries.push_back({t.at("seed").get<std::uint64_t>(), t.at("G").get<int>()});
  if (static_cast<int>(s.entries.size()) != s.spec.num_tasks)
    throw std::invalid_argument("manifest lists " + std::to_string(s.entries.size()) + " tasks but num_tasks is " +
                                std::to_string(s.spec.num_tasks));
  for (const auto& e : s.entries)
    if (e.G < 1) throw std::invalid_argument("manifest task with G < 1");
  return s;
}

}  // namespace cascade::synth
