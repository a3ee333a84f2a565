#pragma once

#include <optional>

namespace cascade {

// Per-step simulator ground truth, as seen after the step's action executed.
struct StepTruth {
  bool in_stuck_region = false;
  bool completes_milestone = false;
  bool drift_active = false;
  int progress = 0;  // valid progress units completed so far

  friend bool operator==(const StepTruth&, const StepTruth&) = default;
};

// Step 0 is the initial state.
class GroundTruth {
 public:
  virtual ~GroundTruth() = default;
  virtual std::optional<StepTruth> truth_at(int step) const = 0;
};

}  // namespace cascade
