#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cascade/controller.hpp"
#include "cascade/ground_truth.hpp"
#include "cascade/policy.hpp"
#include "cascade/trace.hpp"

namespace cascade::synth {

struct FailureProfile {
  double p_stall = 0.08;  // small tier, per step, normal mode
  double loop_mean = 1000.0;  // mean of the geometric loop length
  double p_drift = 0.05;
  double p_correct_small = 0.9;
  double p_correct_large = 0.95;
  bool large_recovers = true;
  // Successful actions needed to finish one subgoal.
  int units_per_subgoal = 6;

  void validate() const;
  json to_json() const;
  static FailureProfile from_json(const json& j);
  friend bool operator==(const FailureProfile&, const FailureProfile&) = default;
};

struct SynthTask {
  TaskSpec task;
  std::vector<std::string> subgoals;
  FailureProfile profile;
  std::uint64_t seed = 0;

  int G() const { return static_cast<int>(subgoals.size()); }
};

// Deterministic in (seed, G, profile). Throws std::invalid_argument for G < 1.
SynthTask generate_task(std::uint64_t seed, int G, const FailureProfile& profile, int max_steps = 80);

enum class Mode { normal, looping, drifting };

struct EnvState {
  int subgoal_index = 0;  // valid subgoals completed
  int unit = 0;           // valid units inside the current subgoal
  Mode mode = Mode::normal;
  int loop_remaining = 0;
  int phantom_subgoals = 0;  // believed-complete subgoals on a drifted branch
  int phantom_units = 0;
  int step = 0;

  int apparent_subgoals() const { return subgoal_index + (mode == Mode::drifting ? phantom_subgoals : 0); }
  int progress(int units_per_subgoal) const { return subgoal_index * units_per_subgoal + unit; }
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

// "t=<id>;v=<sg>;u=<unit>;m=<mode>;g=<G>;s=<step>#<hash>". Every field is
// readable so traces can be re-scanned offline.
std::string state_digest(const std::string& task_id, int G, const EnvState& s);
// Throws std::invalid_argument on anything state_digest could not produce.
EnvState parse_digest(std::string_view digest);

// Per-step uniform draws, one independent stream per failure mechanism.
struct StepDraws {
  double stall = 0.0;
  int loop_length = 1;
  double drift = 0.0;
  double progress = 0.0;
};
StepDraws draws_at(std::uint64_t seed, int step, double loop_mean);

struct StepResult {
  EnvState state;
  StepTruth truth;
};

StepResult env_step(const EnvState& s, const Action& a, Tier tier, const FailureProfile& p, int G,
                    std::uint64_t seed);

// Success iff the episode ends with done, within budget, with all subgoals
// validly complete.
bool evaluate_episode(const SynthTask& task, const Episode& e);

// Ground-truth flags rebuilt from a recorded trace alone.
std::vector<StepTruth> reconstruct_truth(const Episode& e, const FailureProfile& p);

class SynthEnvironment final : public Environment, public GroundTruth {
 public:
  explicit SynthEnvironment(SynthTask task);

  const TaskSpec& task() const override { return task_.task; }
  Observation observe() const override;
  void execute(const Action& a, Tier tier) override;
  bool evaluate(const Episode& e) const override { return evaluate_episode(task_, e); }

  std::optional<StepTruth> truth_at(int step) const override;

  const EnvState& state() const { return state_; }
  const SynthTask& synth_task() const { return task_; }

 private:
  SynthTask task_;
  EnvState state_;
  std::vector<StepTruth> truths_;  // [0] is the initial state
};

// Scripted agent. Reads the state from the observation digest and the plan
// from the task metadata, so its output is a pure function of the request.
class SimPolicy final : public Policy {
 public:
  SimPolicy(Tier tier, std::uint64_t seed, std::string name = {});
  PolicyId id() const override { return id_; }
  PolicyResponse next_step(const PolicyRequest& req) override;

 private:
  PolicyId id_;
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Task suites

struct SuiteEntry {
  std::uint64_t seed = 0;
  int G = 1;
};

struct SuiteSpec {
  std::uint64_t seed = 0;
  int num_tasks = 500;
  int min_subgoals = 3;
  int max_subgoals = 6;
  int max_steps = 80;
  FailureProfile profile;

  void validate() const;
  json to_json() const;
  static SuiteSpec from_json(const json& j);
};

struct Suite {
  SuiteSpec spec;
  std::vector<SuiteEntry> entries;

  SynthTask task(std::size_t i) const;
  // Manifest listing (seed, G, profile) for every task.
  json manifest() const;
  static Suite from_manifest(const json& j);
};

Suite make_suite(const SuiteSpec& spec);

}  // namespace cascade::synth
