#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cascade/ground_truth.hpp"
#include "cascade/trace.hpp"

namespace cascade {

// Visual evidence for a checkpoint: real screenshot bytes, or the
// simulator's observation digest standing in for one.
struct Evidence {
  enum class Kind { image, digest };

  Kind kind = Kind::digest;
  std::string data;

  static Evidence image(std::string bytes) { return {Kind::image, std::move(bytes)}; }
  static Evidence digest(std::string text) { return {Kind::digest, std::move(text)}; }

  json to_json() const;
  friend bool operator==(const Evidence&, const Evidence&) = default;
};

// Evidence by step index; step 0 holds the initial state.
class EvidenceStore {
 public:
  void put(int step, Evidence e) { items_[step] = std::move(e); }
  const Evidence* find(int step) const {
    auto it = items_.find(step);
    return it == items_.end() ? nullptr : &it->second;
  }
  // Drops everything except the given steps.
  void retain(int keep_a, int keep_b);
  std::size_t size() const { return items_.size(); }

 private:
  std::map<int, Evidence> items_;
};

struct MilestonePacket {
  TaskSpec task;
  std::vector<WindowEntry> segment;  // steps tau+1 .. t
  Evidence before;                   // checkpoint at tau
  Evidence after;                    // state at t
  int tau = 0;
  int t = 0;

  // Body of POST /verify.
  json to_json() const;
};

struct Verdict {
  bool progress_valid = false;
  bool intent_consistent = false;
  bool success = false;
  std::string reasoning;
  std::string inferred_milestone;

  static Verdict make(bool progress_valid, bool intent_consistent, std::string reasoning = {},
                      std::string inferred_milestone = {}) {
    return {progress_valid, intent_consistent, progress_valid && intent_consistent, std::move(reasoning),
            std::move(inferred_milestone)};
  }
};

class PacketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VerifierError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws std::invalid_argument unless 0 <= tau < t <= |steps|, and
// PacketError when the checkpoint evidence at tau is missing or the two
// evidence kinds differ. Evidence for t falls back to step t's digest.
MilestonePacket build_milestone_packet(const Episode& e, const TaskSpec& task, int tau, int t,
                                       const EvidenceStore& evidence);

class Verifier {
 public:
  virtual ~Verifier() = default;
  virtual Verdict verify(const MilestonePacket& p) = 0;
};

// Progress is valid when ground-truth progress strictly increased over the
// segment; intent is consistent when no drift is active at t.
class OracleVerifier final : public Verifier {
 public:
  explicit OracleVerifier(const GroundTruth& truth) : truth_(&truth) {}
  Verdict verify(const MilestonePacket& p) override;

 private:
  const GroundTruth* truth_;
};

// Validates {"inferred_milestone": string, "success": bool, "reasoning": string}.
// The single success flag is mapped onto both checks.
Verdict parse_verdict_response(const json& body);

// Verification prompt for generative verifier backends.
std::string verification_instruction();
std::string verification_input(const MilestonePacket& p);

}  // namespace cascade
