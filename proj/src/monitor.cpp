#include "cascade/monitor.hpp"

#include <algorithm>
#include <cmath>

namespace cascade {

std::string_view to_string(ScoreSource s) {
  switch (s) {
    case ScoreSource::heuristic: return "heuristic";
    case ScoreSource::oracle: return "oracle";
    case ScoreSource::remote: return "remote";
  }
  return "unknown";
}

MonitorScore MonitorScore::make(double value, ScoreSource source) {
  if (!(value >= 0.0 && value <= 1.0)) throw std::invalid_argument("monitor score outside [0,1]: " + format_double(value));
  return {value, source};
}

double heuristic_stuck_score(const Window& w, double grid) {
  const std::size_t n = w.entries.size();
  if (n <= 1) return 0.0;
  std::vector<CanonicalAction> canon;
  canon.reserve(n);
  for (const auto& e : w.entries) canon.push_back(canonicalize_action(e.action, grid));
  std::size_t top = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(std::count(canon.begin(), canon.end(), canon[i]));
    top = std::max(top, c);
  }
  const double v = static_cast<double>(top - 1) / static_cast<double>(n - 1);
  return std::clamp(v, 0.0, 1.0);
}

MonitorScore HeuristicStuckMonitor::score(const Window& w) {
  if (w.entries.empty()) throw std::invalid_argument("stuck monitor needs a non-empty window");
  return MonitorScore::make(heuristic_stuck_score(w, grid_), ScoreSource::heuristic);
}

HeuristicMilestoneMonitor::HeuristicMilestoneMonitor()
    : cues_{"finished", "completed", "completes", "is complete", "successfully", "now done"} {}

MonitorScore HeuristicMilestoneMonitor::score(std::string_view instruction, const Window& w) {
  if (w.entries.empty()) throw std::invalid_argument("milestone monitor needs a non-empty window");
  if (instruction.empty()) throw std::invalid_argument("milestone monitor needs the task instruction");
  const std::string last = to_lower(w.entries.back().rationale);
  const bool hit = std::any_of(cues_.begin(), cues_.end(),
                               [&](const std::string& cue) { return last.find(to_lower(cue)) != std::string::npos; });
  return MonitorScore::make(hit ? 1.0 : 0.0, ScoreSource::heuristic);
}

namespace {
StepTruth require_truth(const GroundTruth& truth, int step) {
  auto t = truth.truth_at(step);
  if (!t) throw MonitorError("no ground truth recorded for step " + std::to_string(step));
  return *t;
}
}  // namespace

MonitorScore OracleStuckMonitor::score(const Window& w) {
  if (w.entries.empty()) throw std::invalid_argument("stuck monitor needs a non-empty window");
  return MonitorScore::make(require_truth(*truth_, w.end_index).in_stuck_region ? 1.0 : 0.0, ScoreSource::oracle);
}

MonitorScore OracleMilestoneMonitor::score(std::string_view instruction, const Window& w) {
  if (w.entries.empty()) throw std::invalid_argument("milestone monitor needs a non-empty window");
  if (instruction.empty()) throw std::invalid_argument("milestone monitor needs the task instruction");
  return MonitorScore::make(require_truth(*truth_, w.end_index).completes_milestone ? 1.0 : 0.0, ScoreSource::oracle);
}

DetectorMetrics metrics_from_confusion(const Confusion& c) {
  auto ratio = [](std::int64_t num, std::int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  DetectorMetrics m;
  m.confusion = c;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = (m.precision + m.recall) == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

DetectorMetrics evaluate_detector(std::span<const double> predictions, std::span<const bool> labels, double threshold) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("predictions and labels differ in length (" + std::to_string(predictions.size()) +
                                " vs " + std::to_string(labels.size()) + ")");
  if (predictions.empty()) throw std::invalid_argument("cannot evaluate a detector on zero samples");
  Confusion c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred = predictions[i] >= threshold;
    if (pred && labels[i]) ++c.tp;
    else if (pred) ++c.fp;
    else if (labels[i]) ++c.fn;
    else ++c.tn;
  }
  return metrics_from_confusion(c);
}

}  // namespace cascade
