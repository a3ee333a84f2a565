#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include "cascade/monitor.hpp"
#include "cascade/policy.hpp"
#include "cascade/pricing.hpp"
#include "cascade/trace.hpp"
#include "cascade/verifier.hpp"

namespace cascade {

enum class ControlMode { basic, hysteresis };
// Which policies may act. `cascade` is the monitored two-tier loop; the
// other two are single-model baselines that run no monitors.
enum class Routing { cascade, small_only, large_only };
enum class FailurePolicy { fail_open, fail_closed };

std::string_view to_string(ControlMode m);
std::string_view to_string(Routing r);

inline constexpr int kUnlimited = std::numeric_limits<int>::max();

struct CascadeConfig {
  // A threshold above 1 can never be reached; that monitor is not called.
  double theta_s = 0.5;
  double theta_m = 0.5;
  int window = kDefaultWindowLength;
  ControlMode mode = ControlMode::basic;
  Routing routing = Routing::cascade;

  // Hysteresis parameters.
  int consecutive_fires_to_escalate = 1;  // m
  int min_large_steps = 3;                // R
  double deescalate_gap = 0.1;            // delta
  int recovery_budget = kUnlimited;       // B

  int verification_fail_escalation_steps = 3;  // R_v
  // Verify every k steps instead of on milestone events; no monitors run.
  std::optional<int> periodic_k;

  double grid = kDefaultGrid;
  HandoffScope handoff = HandoffScope::full;
  FailurePolicy monitor_failure = FailurePolicy::fail_open;

  bool stuck_enabled() const { return theta_s <= 1.0; }
  bool milestone_enabled() const { return theta_m <= 1.0; }

  // Throws std::invalid_argument when the parameters are inconsistent.
  void validate() const;
  json to_json() const;
  static CascadeConfig from_json(const json& j);
};

struct ControllerState {
  bool escalated = false;  // E_t
  int consecutive_fires = 0;
  int steps_on_large = 0;  // since the current escalation began
  int calm_large_steps = 0;
  int escalations_used = 0;
  int tau = 0;  // last committed milestone
  int forced_escalation_until = 0;

  friend bool operator==(const ControllerState&, const ControllerState&) = default;
};

struct ControlDecision {
  bool set_escalation = false;  // next step goes to the large policy
  bool trigger_verification = false;
};

// Tier for step t given the state left by step t-1.
Tier decide_route(const ControllerState& state, const CascadeConfig& cfg, int t);

// Updates escalation state from the scores observed at step t.
ControlDecision on_step_end(ControllerState& state, const CascadeConfig& cfg, double p_stuck, double p_mile, int t);

// Pass commits tau <- t; fail forces the large policy for steps t+1..t+R_v.
void apply_verdict(ControllerState& state, const CascadeConfig& cfg, const Verdict& v, int t);

bool periodic_should_check(int t, int k);

// ---------------------------------------------------------------------------
// Episode execution

struct Observation {
  std::string digest;
  std::optional<std::string> screenshot;  // raw bytes when a real screen exists
  std::optional<std::string> screenshot_ref;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual const TaskSpec& task() const = 0;
  virtual Observation observe() const = 0;
  virtual void execute(const Action& a, Tier tier) = 0;
  // Called once the episode has terminated.
  virtual bool evaluate(const Episode& e) const = 0;
};

struct PolicyPair {
  Policy* small = nullptr;
  Policy* large = nullptr;
};

struct MonitorPair {
  StuckMonitor* stuck = nullptr;
  MilestoneMonitor* milestone = nullptr;
};

struct EpisodeRecord {
  Episode episode;
  int verifier_calls = 0;
  int monitor_calls = 0;
  std::string config_digest;
  std::uint64_t seed = 0;

  TraceMeta meta() const { return {config_digest, seed, verifier_calls, monitor_calls}; }
};

std::string serialize_record(const EpisodeRecord& r);
EpisodeRecord parse_record(std::string_view text);
// SHA-256 of the serialized record.
std::string record_digest(const EpisodeRecord& r);

struct RunContext {
  CascadeConfig config;
  PriceTable prices;
  bool simulated_latency = true;  // price-table latencies instead of wall clock
  std::string config_digest;
};

// Runs one episode to done/fail/budget. Adapter failures are folded into the
// record according to each module's failure policy; the partial trace is
// always returned.
EpisodeRecord run_episode(Environment& env, const PolicyPair& policies, const MonitorPair& monitors,
                          Verifier* verifier, const RunContext& ctx, std::uint64_t seed);

}  // namespace cascade
