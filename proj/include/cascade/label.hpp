#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cascade/ground_truth.hpp"
#include "cascade/trace.hpp"

namespace cascade {

enum class DetectorKind { stuck, milestone };

std::string_view to_string(DetectorKind k);
DetectorKind detector_kind_from_string(std::string_view s);

struct Provenance {
  std::string trajectory_id;
  int step_index = 0;
  int votes = 0;
  int runs = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct LabeledWindow {
  DetectorKind kind = DetectorKind::stuck;
  std::optional<std::string> task_instruction;  // milestone samples only
  std::vector<WindowEntry> entries;
  bool label = false;
  Provenance provenance;

  Window window() const { return {entries, provenance.step_index}; }
  json to_json() const;
  static LabeledWindow from_json(const json& j);
  friend bool operator==(const LabeledWindow&, const LabeledWindow&) = default;
};

inline constexpr int kDefaultContextLength = 5;
inline constexpr int kDefaultTeacherRuns = 5;

// One unlabeled candidate per step: the step plus up to `context_len`
// predecessors. `trajectory_id` defaults to the task id.
std::vector<LabeledWindow> extract_windows(const Episode& e, DetectorKind kind, int context_len = kDefaultContextLength,
                                           std::string trajectory_id = {});

enum class Consensus { positive, negative, discard };

// ceil(3 * runs / 5)
int consensus_threshold(int runs);
// Throws std::invalid_argument unless runs >= 1 and 0 <= votes <= runs.
Consensus aggregate_consensus(int votes, int runs = kDefaultTeacherRuns);

struct TeacherRunResult {
  int run_index = 0;
  std::set<int> stuck_steps;
  std::set<int> milestone_steps;
  std::string raw;
  bool flagged = false;  // schema-invalid response, recorded as empty
  std::string error;
};

class Teacher {
 public:
  virtual ~Teacher() = default;
  virtual TeacherRunResult label(const Episode& e, int run_index) = 0;
};

// Returns ground truth with each per-step label flipped independently with
// probability epsilon, keyed on (seed, run, step, kind).
class OracleTeacher final : public Teacher {
 public:
  using TruthFn = std::function<std::vector<StepTruth>(const Episode&)>;
  OracleTeacher(TruthFn truth, double epsilon, std::uint64_t seed);
  TeacherRunResult label(const Episode& e, int run_index) override;

 private:
  TruthFn truth_;
  double epsilon_;
  std::uint64_t seed_;
};

// Exactly `runs` results, in run order. Logs a warning when some were flagged.
std::vector<TeacherRunResult> run_teacher(Teacher& teacher, const Episode& e, int runs = kDefaultTeacherRuns);

// Applies the consensus rule per step and keeps the decisive windows.
// A flagged run counts as a run with no positive votes.
std::vector<LabeledWindow> consensus_label(const Episode& e, std::span<const TeacherRunResult> results, DetectorKind kind,
                                           int context_len = kDefaultContextLength, std::string trajectory_id = {});

// Prompt texts and response schemas for generative teachers.
std::string stuck_labeling_instruction();
std::string stuck_labeling_input(const Episode& e);
std::string milestone_labeling_instruction();
std::string milestone_labeling_input(const Episode& e);
// Parse a teacher response (bare JSON or one fenced JSON block) into step
// numbers. Throws std::invalid_argument on prose or schema violations.
std::set<int> parse_stuck_labels(std::string_view text, int num_steps);
std::set<int> parse_milestone_labels(std::string_view text, int num_steps);

struct ClassCounts {
  int positive = 0;
  int negative = 0;
};

struct DatasetSplit {
  std::vector<LabeledWindow> train;
  std::vector<LabeledWindow> eval;
  std::vector<std::string> train_trajectories;
  std::vector<std::string> eval_trajectories;
  ClassCounts train_counts;
  ClassCounts eval_counts;
  std::vector<std::string> warnings;
};

// Deterministic keyed shuffle of trajectory ids; every window of one
// trajectory lands on the same side. Throws std::invalid_argument on empty input.
DatasetSplit export_dataset(std::span<const LabeledWindow> samples, double train_fraction = 0.8, std::uint64_t seed = 0);

std::string dataset_lines(std::span<const LabeledWindow> samples);
std::vector<LabeledWindow> parse_dataset_lines(std::string_view text);

}  // namespace cascade
