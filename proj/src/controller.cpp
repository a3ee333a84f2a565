#include "cascade/controller.hpp"

#include <chrono>
#include <cmath>
#include <set>

namespace cascade {

std::string_view to_string(ControlMode m) { return m == ControlMode::basic ? "basic" : "hysteresis"; }

std::string_view to_string(Routing r) {
  switch (r) {
    case Routing::cascade: return "cascade";
    case Routing::small_only: return "small-only";
    case Routing::large_only: return "large-only";
  }
  return "unknown";
}

void CascadeConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("cascade config: ") + what);
  };
  require(std::isfinite(theta_s) && theta_s >= 0.0, "theta_s must be a finite number >= 0");
  require(std::isfinite(theta_m) && theta_m >= 0.0, "theta_m must be a finite number >= 0");
  require(window >= 1, "window must be >= 1");
  require(consecutive_fires_to_escalate >= 1, "consecutive_fires_to_escalate must be >= 1");
  require(min_large_steps >= 1, "min_large_steps must be >= 1");
  require(std::isfinite(deescalate_gap) && deescalate_gap >= 0.0, "deescalate_gap must be >= 0");
  require(recovery_budget >= 1, "recovery_budget must be >= 1");
  require(verification_fail_escalation_steps >= 1, "verification_fail_escalation_steps must be >= 1");
  require(!periodic_k || *periodic_k >= 1, "periodic_k must be >= 1");
  require(grid > 0.0, "grid must be > 0");
  if (mode == ControlMode::hysteresis) {
    require(theta_s - deescalate_gap >= 0.0, "theta_s - deescalate_gap must be >= 0 in hysteresis mode");
  } else {
    require(recovery_budget == kUnlimited, "recovery_budget requires hysteresis mode");
  }
}

json CascadeConfig::to_json() const {
  return json{{"theta_s", theta_s},
              {"theta_m", theta_m},
              {"window", window},
              {"mode", to_string(mode)},
              {"routing", to_string(routing)},
              {"consecutive_fires_to_escalate", consecutive_fires_to_escalate},
              {"min_large_steps", min_large_steps},
              {"deescalate_gap", deescalate_gap},
              {"recovery_budget", recovery_budget == kUnlimited ? json(nullptr) : json(recovery_budget)},
              {"verification_fail_escalation_steps", verification_fail_escalation_steps},
              {"periodic_k", periodic_k ? json(*periodic_k) : json(nullptr)},
              {"grid", grid},
              {"handoff", handoff == HandoffScope::full ? "full" : "window"},
              {"monitor_failure", monitor_failure == FailurePolicy::fail_open ? "fail_open" : "fail_closed"}};
}

CascadeConfig CascadeConfig::from_json(const json& j) {
  static const std::set<std::string> kKnown{"theta_s",
                                            "theta_m",
                                            "window",
                                            "mode",
                                            "routing",
                                            "consecutive_fires_to_escalate",
                                            "min_large_steps",
                                            "deescalate_gap",
                                            "recovery_budget",
                                            "verification_fail_escalation_steps",
                                            "periodic_k",
                                            "grid",
                                            "handoff",
                                            "monitor_failure"};
  if (!j.is_object()) throw std::invalid_argument("cascade config must be an object");
  for (const auto& [key, _] : j.items())
    if (!kKnown.contains(key)) throw std::invalid_argument("cascade config: unknown key '" + key + "'");

  CascadeConfig c;
  c.theta_s = j.value("theta_s", c.theta_s);
  c.theta_m = j.value("theta_m", c.theta_m);
  c.window = j.value("window", c.window);
  if (auto it = j.find("mode"); it != j.end()) {
    const auto s = it->get<std::string>();
    if (s == "basic") c.mode = ControlMode::basic;
    else if (s == "hysteresis") c.mode = ControlMode::hysteresis;
    else throw std::invalid_argument("cascade config: unknown mode '" + s + "'");
  }
  if (auto it = j.find("routing"); it != j.end()) {
    const auto s = it->get<std::string>();
    if (s == "cascade") c.routing = Routing::cascade;
    else if (s == "small-only") c.routing = Routing::small_only;
    else if (s == "large-only") c.routing = Routing::large_only;
    else throw std::invalid_argument("cascade config: unknown routing '" + s + "'");
  }
  c.consecutive_fires_to_escalate = j.value("consecutive_fires_to_escalate", c.consecutive_fires_to_escalate);
  c.min_large_steps = j.value("min_large_steps", c.min_large_steps);
  c.deescalate_gap = j.value("deescalate_gap", c.deescalate_gap);
  if (auto it = j.find("recovery_budget"); it != j.end() && !it->is_null()) c.recovery_budget = it->get<int>();
  c.verification_fail_escalation_steps =
      j.value("verification_fail_escalation_steps", c.verification_fail_escalation_steps);
  if (auto it = j.find("periodic_k"); it != j.end() && !it->is_null()) c.periodic_k = it->get<int>();
  c.grid = j.value("grid", c.grid);
  if (auto it = j.find("handoff"); it != j.end()) {
    const auto s = it->get<std::string>();
    if (s == "full") c.handoff = HandoffScope::full;
    else if (s == "window") c.handoff = HandoffScope::window;
    else throw std::invalid_argument("cascade config: unknown handoff scope '" + s + "'");
  }
  if (auto it = j.find("monitor_failure"); it != j.end()) {
    const auto s = it->get<std::string>();
    if (s == "fail_open") c.monitor_failure = FailurePolicy::fail_open;
    else if (s == "fail_closed") c.monitor_failure = FailurePolicy::fail_closed;
    else throw std::invalid_argument("cascade config: unknown monitor_failure '" + s + "'");
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Routing automaton

Tier decide_route(const ControllerState& state, const CascadeConfig& cfg, int t) {
  if (cfg.routing == Routing::small_only) return Tier::small;
  if (cfg.routing == Routing::large_only) return Tier::large;
  if (t <= state.forced_escalation_until) return Tier::large;
  return state.escalated ? Tier::large : Tier::small;
}

bool periodic_should_check(int t, int k) {
  if (k < 1) throw std::invalid_argument("periodic k must be >= 1");
  return t % k == 0;
}

ControlDecision on_step_end(ControllerState& state, const CascadeConfig& cfg, double p_stuck, double p_mile, int t) {
  ControlDecision d;
  if (cfg.periodic_k) {
    d.trigger_verification = periodic_should_check(t, *cfg.periodic_k);
  } else {
    d.trigger_verification = cfg.milestone_enabled() && p_mile >= cfg.theta_m;
  }

  const bool fire = !cfg.periodic_k && cfg.stuck_enabled() && p_stuck >= cfg.theta_s;
  if (cfg.mode == ControlMode::basic) {
    if (fire && !state.escalated) ++state.escalations_used;
    state.escalated = fire;
    d.set_escalation = fire;
    return d;
  }

  if (!state.escalated) {
    state.consecutive_fires = fire ? state.consecutive_fires + 1 : 0;
    if (state.consecutive_fires >= cfg.consecutive_fires_to_escalate &&
        state.escalations_used < cfg.recovery_budget) {
      state.escalated = true;
      ++state.escalations_used;
      state.steps_on_large = 0;
      state.calm_large_steps = 0;
      state.consecutive_fires = 0;
    }
  } else {
    ++state.steps_on_large;
    state.calm_large_steps = p_stuck < cfg.theta_s - cfg.deescalate_gap ? state.calm_large_steps + 1 : 0;
    if (state.calm_large_steps >= cfg.min_large_steps) {
      state.escalated = false;
      state.steps_on_large = 0;
      state.calm_large_steps = 0;
      state.consecutive_fires = 0;
    }
  }
  d.set_escalation = state.escalated;
  return d;
}

void apply_verdict(ControllerState& state, const CascadeConfig& cfg, const Verdict& v, int t) {
  if (v.success) {
    state.tau = t;
  } else {
    state.forced_escalation_until = std::max(state.forced_escalation_until, t + cfg.verification_fail_escalation_steps);
  }
}

// ---------------------------------------------------------------------------
// Records

std::string serialize_record(const EpisodeRecord& r) {
  const TraceMeta m = r.meta();
  return serialize_trace(r.episode, &m);
}

EpisodeRecord parse_record(std::string_view text) {
  auto [episode, meta] = parse_trace_with_meta(text);
  if (!meta) throw TraceParseError(1, "header carries no record fields");
  EpisodeRecord r;
  r.episode = std::move(episode);
  r.config_digest = meta->config_digest;
  r.seed = meta->seed;
  r.verifier_calls = meta->verifier_calls;
  r.monitor_calls = meta->monitor_calls;
  return r;
}

std::string record_digest(const EpisodeRecord& r) { return sha256_hex(serialize_record(r)); }

// ---------------------------------------------------------------------------
// Episode loop

namespace {

Evidence evidence_of(const Observation& o) {
  return o.screenshot ? Evidence::image(*o.screenshot) : Evidence::digest(o.digest);
}

class StepMeter {
 public:
  explicit StepMeter(bool simulated) : simulated_(simulated) {}

  void charge(const PriceEntry& price, const std::optional<TokenCounts>& tokens, double measured_seconds) {
    cost_ += price.cost(tokens);
    latency_ += simulated_ ? price.latency_per_call : measured_seconds;
  }

  Money cost() const { return cost_; }
  double latency() const { return latency_; }

 private:
  bool simulated_;
  Money cost_;
  double latency_ = 0.0;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

EpisodeRecord run_episode(Environment& env, const PolicyPair& policies, const MonitorPair& monitors,
                          Verifier* verifier, const RunContext& ctx, std::uint64_t seed) {
  const CascadeConfig& cfg = ctx.config;
  cfg.validate();

  EpisodeRecord rec;
  rec.seed = seed;
  rec.config_digest = ctx.config_digest;
  Episode& e = rec.episode;
  e.task = env.task();
  validate(e.task);

  const bool monitored = cfg.routing == Routing::cascade && !cfg.periodic_k;
  const bool run_stuck = monitored && cfg.stuck_enabled() && monitors.stuck;
  const bool run_milestone = monitored && cfg.milestone_enabled() && monitors.milestone && verifier;
  const bool can_verify = cfg.routing == Routing::cascade && verifier;

  ControllerState state;
  EvidenceStore evidence;
  Observation obs = env.observe();
  evidence.put(0, evidence_of(obs));

  bool terminated = false;
  bool aborted = false;
  for (int t = 1; t <= e.task.max_steps; ++t) {
    const Tier tier = decide_route(state, cfg, t);
    Policy* policy = tier == Tier::small ? policies.small : policies.large;
    if (!policy) throw std::invalid_argument(std::string("no ") + std::string(to_string(tier)) + " policy configured");

    PolicyRequest req;
    req.task = e.task;
    req.step_index = t;
    req.observation_digest = obs.digest;
    req.screenshot = obs.screenshot;
    std::span<const Step> history(e.steps);
    if (cfg.handoff == HandoffScope::window && history.size() > static_cast<std::size_t>(cfg.window))
      history = history.last(static_cast<std::size_t>(cfg.window));
    req.transcript = serialize_handoff(history, cfg.grid);

    Step s;
    s.index = t;
    s.policy = policy->id();
    if (tier == Tier::large && cfg.routing == Routing::cascade) s.events.insert(StepEvent::escalated);

    StepMeter meter(ctx.simulated_latency);
    PolicyResponse resp;
    try {
      const auto start = std::chrono::steady_clock::now();
      resp = policy->next_step(req);
      const double wall = seconds_since(start);
      validate(resp.action);
      meter.charge(ctx.prices.policy(s.policy), resp.tokens, resp.latency > 0.0 ? resp.latency : wall);
    } catch (const AccountingError&) {
      throw;
    } catch (const std::exception& ex) {
      e.outcome = Outcome::failure;
      e.diagnostic = "policy '" + s.policy.name + "' failed at step " + std::to_string(t) + ": " + ex.what();
      aborted = true;
      break;
    }
    s.rationale = std::move(resp.rationale);
    s.action = std::move(resp.action);
    s.tokens = resp.tokens;

    env.execute(s.action, tier);
    obs = env.observe();
    s.observation_digest = obs.digest;
    s.screenshot_ref = obs.screenshot_ref;
    e.steps.push_back(s);

    if (s.action.terminal()) {
      e.terminal_action = s.action;
      e.steps.back().cost = meter.cost();
      e.steps.back().latency = meter.latency();
      terminated = true;
      break;
    }

    double p_stuck = 0.0;
    double p_mile = 0.0;
    if (run_stuck || run_milestone) {
      const Window w = build_window(std::span<const Step>(e.steps), t, cfg.window);
      auto score = [&](auto&& call, std::optional<double>& slot) -> double {
        ++rec.monitor_calls;
        const auto start = std::chrono::steady_clock::now();
        try {
          const MonitorScore ms = call();
          meter.charge(ctx.prices.monitor, std::nullopt, seconds_since(start));
          slot = ms.value;
          return ms.value;
        } catch (const MonitorError& ex) {
          meter.charge(ctx.prices.monitor, std::nullopt, seconds_since(start));
          if (cfg.monitor_failure == FailurePolicy::fail_closed) throw;
          log_warning(std::string("monitor failure treated as score 0: ") + ex.what());
          return 0.0;
        }
      };
      try {
        if (run_stuck) p_stuck = score([&] { return monitors.stuck->score(w); }, e.steps.back().stuck_score);
        if (run_milestone)
          p_mile = score([&] { return monitors.milestone->score(e.task.instruction, w); }, e.steps.back().milestone_score);
      } catch (const MonitorError& ex) {
        e.outcome = Outcome::failure;
        e.diagnostic = std::string("monitor failed at step ") + std::to_string(t) + ": " + ex.what();
        e.steps.back().cost = meter.cost();
        e.steps.back().latency = meter.latency();
        aborted = true;
        break;
      }
    }

    const ControlDecision d = on_step_end(state, cfg, p_stuck, p_mile, t);
    Step& cur = e.steps.back();
    if (d.trigger_verification && can_verify) {
      cur.events.insert(StepEvent::milestone_triggered);
      evidence.put(t, evidence_of(obs));
      Verdict v;
      try {
        const MilestonePacket packet = build_milestone_packet(e, e.task, state.tau, t, evidence);
        ++rec.verifier_calls;
        const auto start = std::chrono::steady_clock::now();
        try {
          v = verifier->verify(packet);
        } catch (const std::exception&) {
          meter.charge(ctx.prices.verifier, std::nullopt, seconds_since(start));
          throw;
        }
        meter.charge(ctx.prices.verifier, std::nullopt, seconds_since(start));
      } catch (const std::exception& ex) {
        log_warning(std::string("verification treated as failed: ") + ex.what());
        v = Verdict::make(false, false, ex.what());
      }
      apply_verdict(state, cfg, v, t);
      cur.events.insert(v.success ? StepEvent::milestone_committed : StepEvent::verification_failed);
      evidence.retain(0, state.tau);
    }
    cur.cost = meter.cost();
    cur.latency = meter.latency();
  }

  if (!aborted) {
    if (!terminated) e.outcome = Outcome::budget_exhausted;
    else e.outcome = env.evaluate(e) ? Outcome::success : Outcome::failure;
  }
  return rec;
}

}  // namespace cascade
