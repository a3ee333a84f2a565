#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cascade/controller.hpp"
#include "cascade/pricing.hpp"

namespace cascade {

inline constexpr int kDefaultLookback = 3;

// Fraction of steps t >= 2 whose canonical action equals one of the previous
// `lookback` canonical actions. 0 for fewer than two steps.
double action_repetition_rate(const Episode& e, int lookback = kDefaultLookback, double grid = kDefaultGrid);

struct FailureSignatures {
  int episodes = 0;
  int succeeded = 0;
  int failed = 0;
  std::optional<double> avg_steps_success;
  std::optional<double> avg_steps_failed;
  std::optional<double> rep_rate_success;
  std::optional<double> rep_rate_failed;
  std::optional<double> done_but_failed_rate;  // among failed episodes
  int lookback = kDefaultLookback;

  std::optional<double> length_ratio() const;
  std::optional<double> repetition_ratio() const;
};

// Throws std::invalid_argument on empty input.
FailureSignatures failure_signatures(std::span<const Episode> episodes, int lookback = kDefaultLookback,
                                     double grid = kDefaultGrid);

// "2.8×"
std::string format_ratio(double ratio);

// Every policy call, monitor call and verifier call at list price.
Money compute_cost(const EpisodeRecord& r, const PriceTable& p);

struct RunReport {
  std::string label;
  int tasks = 0;
  int succeeded = 0;
  long steps = 0;
  long large_steps = 0;
  int switched = 0;  // tasks with at least one large step
  long verifier_calls = 0;
  long monitor_calls = 0;
  Money total_cost;
  double total_latency = 0.0;

  double accuracy() const { return tasks ? static_cast<double>(succeeded) / tasks : 0.0; }
  double avg_steps() const { return tasks ? static_cast<double>(steps) / tasks : 0.0; }
  double cost_per_task() const { return tasks ? total_cost.dollars() / tasks : 0.0; }
  double latency_per_request() const { return steps ? total_latency / static_cast<double>(steps) : 0.0; }
  double switched_fraction() const { return tasks ? static_cast<double>(switched) / tasks : 0.0; }
  double a2_share() const { return steps ? static_cast<double>(large_steps) / static_cast<double>(steps) : 0.0; }
  double a1_share() const { return steps ? 1.0 - a2_share() : 0.0; }
  double verifier_calls_per_task() const { return tasks ? static_cast<double>(verifier_calls) / tasks : 0.0; }

  json to_json() const;
  static RunReport from_json(const json& j);
};

// Costs and latencies come from the per-step values stored in the records.
RunReport cascade_stats(std::span<const EpisodeRecord> records, std::string label = {});

struct FrontierPoint {
  double theta_s = 0.0;
  double theta_m = 0.0;
  RunReport report;
  bool pareto = false;
};

using SweepRunner = std::function<RunReport(double theta_s, double theta_m)>;

// Sorted by cost; a point is Pareto-optimal when no other point has accuracy
// at least as high and cost at most as high with one of them strict.
std::vector<FrontierPoint> sweep_frontier(std::span<const std::pair<double, double>> grid, const SweepRunner& run);
void mark_pareto(std::vector<FrontierPoint>& points);

// Table columns: Lat./Req., Cost/Task, Acc., Avg Step, Switched, A1 Share, A2 Share.
std::string report_csv(std::span<const RunReport> reports);
std::string report_table(std::span<const RunReport> reports);
std::string frontier_csv(std::span<const FrontierPoint> points);
std::string signatures_table(const FailureSignatures& s);

}  // namespace cascade
