#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cascade/trace.hpp"

namespace cascade {

// One history step re-rendered for whichever policy takes over next.
struct HandoffEntry {
  int step_index = 0;
  std::string rationale;
  CanonicalAction action;
  std::string observation_digest;

  json to_json() const;
  // Compact JSON with sorted keys; byte-stable.
  std::string render() const { return to_json().dump(); }

  friend bool operator==(const HandoffEntry&, const HandoffEntry&) = default;
};

std::vector<HandoffEntry> serialize_handoff(std::span<const Step> history, double grid = kDefaultGrid);

enum class HandoffScope { full, window };

struct PolicyRequest {
  TaskSpec task;
  std::vector<HandoffEntry> transcript;
  std::string observation_digest;
  std::optional<std::string> screenshot;  // raw image bytes
  int step_index = 1;                      // the step about to be generated

  // Wire form; the screenshot travels base64-encoded.
  json to_json() const;
};

struct PolicyResponse {
  std::string rationale;
  Action action;
  double latency = 0.0;
  std::optional<TokenCounts> tokens;
};

class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Validates a response body of the form {"rationale": ..., "action": {...}}.
// Throws PolicyError on anything else.
PolicyResponse parse_policy_response(const json& body);

class Policy {
 public:
  virtual ~Policy() = default;
  virtual PolicyId id() const = 0;
  virtual PolicyResponse next_step(const PolicyRequest& req) = 0;
};

class AlwaysDonePolicy final : public Policy {
 public:
  explicit AlwaysDonePolicy(PolicyId id) : id_(std::move(id)) {}
  PolicyId id() const override { return id_; }
  PolicyResponse next_step(const PolicyRequest&) override { return {"finish", Action::done(), 0.0, std::nullopt}; }

 private:
  PolicyId id_;
};

// Re-issues one target forever, jittered inside its grid cell so raw
// coordinates differ while the canonical action stays fixed.
class LoopingPolicy final : public Policy {
 public:
  LoopingPolicy(PolicyId id, double x, double y, std::uint64_t seed, double grid = kDefaultGrid);
  PolicyId id() const override { return id_; }
  PolicyResponse next_step(const PolicyRequest& req) override;

 private:
  PolicyId id_;
  double x_;
  double y_;
  std::uint64_t seed_;
  double grid_;
};

}  // namespace cascade
