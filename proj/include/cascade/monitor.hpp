#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cascade/ground_truth.hpp"
#include "cascade/trace.hpp"

namespace cascade {

enum class ScoreSource { heuristic, oracle, remote };

std::string_view to_string(ScoreSource s);

struct MonitorScore {
  double value = 0.0;
  ScoreSource source = ScoreSource::heuristic;

  // Throws std::invalid_argument unless 0 <= value <= 1.
  static MonitorScore make(double value, ScoreSource source);
};

class MonitorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// S(w): sees only the recent window.
class StuckMonitor {
 public:
  virtual ~StuckMonitor() = default;
  virtual MonitorScore score(const Window& w) = 0;
};

// M(u, w): additionally conditioned on the task instruction.
class MilestoneMonitor {
 public:
  virtual ~MilestoneMonitor() = default;
  virtual MonitorScore score(std::string_view instruction, const Window& w) = 0;
};

// (c - 1) / (|w| - 1) where c is the largest multiplicity of any canonical
// action in the window; 0 for a single-entry window.
double heuristic_stuck_score(const Window& w, double grid = kDefaultGrid);

class HeuristicStuckMonitor final : public StuckMonitor {
 public:
  explicit HeuristicStuckMonitor(double grid = kDefaultGrid) : grid_(grid) {}
  MonitorScore score(const Window& w) override;

 private:
  double grid_;
};

// Fires when the latest rationale announces a completed step ("finished",
// "completes", ...).
class HeuristicMilestoneMonitor final : public MilestoneMonitor {
 public:
  HeuristicMilestoneMonitor();
  explicit HeuristicMilestoneMonitor(std::vector<std::string> cues) : cues_(std::move(cues)) {}
  MonitorScore score(std::string_view instruction, const Window& w) override;

 private:
  std::vector<std::string> cues_;
};

// Oracles read simulator ground truth at the window's last step.
class OracleStuckMonitor final : public StuckMonitor {
 public:
  explicit OracleStuckMonitor(const GroundTruth& truth) : truth_(&truth) {}
  MonitorScore score(const Window& w) override;

 private:
  const GroundTruth* truth_;
};

class OracleMilestoneMonitor final : public MilestoneMonitor {
 public:
  explicit OracleMilestoneMonitor(const GroundTruth& truth) : truth_(&truth) {}
  MonitorScore score(std::string_view instruction, const Window& w) override;

 private:
  const GroundTruth* truth_;
};

// ---------------------------------------------------------------------------
// Detector evaluation

struct Confusion {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct DetectorMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  Confusion confusion;
};

// Undefined ratios (zero denominators) are reported as 0.
DetectorMetrics metrics_from_confusion(const Confusion& c);

// Predictions are positive when >= threshold. Throws std::invalid_argument on
// empty or mismatched inputs.
DetectorMetrics evaluate_detector(std::span<const double> predictions, std::span<const bool> labels,
                                  double threshold = 0.5);

}  // namespace cascade
