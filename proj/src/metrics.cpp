#include "cascade/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace cascade {

double action_repetition_rate(const Episode& e, int lookback, double grid) {
  if (lookback < 1) throw std::invalid_argument("lookback must be >= 1");
  const std::size_t n = e.steps.size();
  if (n < 2) return 0.0;
  std::vector<CanonicalAction> canon;
  canon.reserve(n);
  for (const auto& s : e.steps) canon.push_back(canonicalize_action(s.action, grid));
  std::size_t hits = 0;
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t from = i >= static_cast<std::size_t>(lookback) ? i - static_cast<std::size_t>(lookback) : 0;
    if (std::find(canon.begin() + static_cast<long>(from), canon.begin() + static_cast<long>(i), canon[i]) !=
        canon.begin() + static_cast<long>(i))
      ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n - 1);
}

std::optional<double> FailureSignatures::length_ratio() const {
  if (!avg_steps_success || !avg_steps_failed || *avg_steps_success == 0.0) return std::nullopt;
  return *avg_steps_failed / *avg_steps_success;
}

std::optional<double> FailureSignatures::repetition_ratio() const {
  if (!rep_rate_success || !rep_rate_failed || *rep_rate_success == 0.0) return std::nullopt;
  return *rep_rate_failed / *rep_rate_success;
}

FailureSignatures failure_signatures(std::span<const Episode> episodes, int lookback, double grid) {
  if (episodes.empty()) throw std::invalid_argument("failure_signatures needs at least one episode");
  FailureSignatures s;
  s.lookback = lookback;
  s.episodes = static_cast<int>(episodes.size());
  double len_ok = 0, len_bad = 0, rep_ok = 0, rep_bad = 0;
  int dbf = 0;
  for (const auto& e : episodes) {
    const double len = static_cast<double>(e.steps.size());
    const double rep = action_repetition_rate(e, lookback, grid);
    if (e.succeeded()) {
      ++s.succeeded;
      len_ok += len;
      rep_ok += rep;
    } else {
      ++s.failed;
      len_bad += len;
      rep_bad += rep;
      if (e.done_but_failed()) ++dbf;
    }
  }
  if (s.succeeded) {
    s.avg_steps_success = len_ok / s.succeeded;
    s.rep_rate_success = rep_ok / s.succeeded;
  }
  if (s.failed) {
    s.avg_steps_failed = len_bad / s.failed;
    s.rep_rate_failed = rep_bad / s.failed;
    s.done_but_failed_rate = static_cast<double>(dbf) / s.failed;
  }
  return s;
}

std::string format_ratio(double ratio) { return format_fixed(ratio, 1) + "×"; }

Money compute_cost(const EpisodeRecord& r, const PriceTable& p) {
  Money total;
  for (const auto& s : r.episode.steps) total += p.policy(s.policy).cost(s.tokens);
  total += p.monitor.cost() * r.monitor_calls;
  total += p.verifier.cost() * r.verifier_calls;
  return total;
}

json RunReport::to_json() const {
  return json{{"label", label},
              {"tasks", tasks},
              {"succeeded", succeeded},
              {"accuracy", accuracy()},
              {"avg_steps", avg_steps()},
              {"cost_per_task", cost_per_task()},
              {"total_cost_micros", total_cost.micros()},
              {"latency_per_request", latency_per_request()},
              {"switched", switched},
              {"switched_fraction", switched_fraction()},
              {"a1_share", a1_share()},
              {"a2_share", a2_share()},
              {"verifier_calls_per_task", verifier_calls_per_task()},
              {"monitor_calls", monitor_calls},
              {"steps", steps},
              {"large_steps", large_steps},
              {"verifier_calls", verifier_calls},
              {"total_latency", total_latency}};
}

RunReport RunReport::from_json(const json& j) {
  RunReport r;
  r.label = j.at("label").get<std::string>();
  r.tasks = j.at("tasks").get<int>();
  r.succeeded = j.at("succeeded").get<int>();
  r.steps = j.at("steps").get<long>();
  r.large_steps = j.at("large_steps").get<long>();
  r.switched = j.at("switched").get<int>();
  r.verifier_calls = j.at("verifier_calls").get<long>();
  r.monitor_calls = j.at("monitor_calls").get<long>();
  r.total_cost = Money::from_micros(j.at("total_cost_micros").get<std::int64_t>());
  r.total_latency = j.at("total_latency").get<double>();
  return r;
}

RunReport cascade_stats(std::span<const EpisodeRecord> records, std::string label) {
  RunReport r;
  r.label = std::move(label);
  for (const auto& rec : records) {
    ++r.tasks;
    if (rec.episode.succeeded()) ++r.succeeded;
    bool used_large = false;
    for (const auto& s : rec.episode.steps) {
      ++r.steps;
      if (s.policy.tier == Tier::large) {
        ++r.large_steps;
        used_large = true;
      }
      r.total_cost += s.cost;
      r.total_latency += s.latency;
    }
    if (used_large) ++r.switched;
    r.verifier_calls += rec.verifier_calls;
    r.monitor_calls += rec.monitor_calls;
  }
  return r;
}

void mark_pareto(std::vector<FrontierPoint>& points) {
  for (auto& p : points) {
    p.pareto = std::none_of(points.begin(), points.end(), [&](const FrontierPoint& q) {
      const double qa = q.report.accuracy(), pa = p.report.accuracy();
      const auto qc = q.report.total_cost.micros() * p.report.tasks;
      const auto pc = p.report.total_cost.micros() * q.report.tasks;
      return qa >= pa && qc <= pc && (qa > pa || qc < pc);
    });
  }
}

std::vector<FrontierPoint> sweep_frontier(std::span<const std::pair<double, double>> grid, const SweepRunner& run) {
  if (grid.empty()) throw std::invalid_argument("sweep grid is empty");
  std::vector<FrontierPoint> out;
  for (const auto& [ts, tm] : grid) out.push_back({ts, tm, run(ts, tm), false});
  mark_pareto(out);
  std::stable_sort(out.begin(), out.end(), [](const FrontierPoint& a, const FrontierPoint& b) {
    return a.report.cost_per_task() < b.report.cost_per_task();
  });
  return out;
}

namespace {

std::string switched_cell(const RunReport& r) {
  return std::to_string(r.switched) + " (" + format_fixed(100.0 * r.switched_fraction(), 1) + "%)";
}

std::string pct(double v) { return format_fixed(100.0 * v, 1) + "%"; }

constexpr const char* kCsvHeader =
    "label,tasks,lat_per_req_s,cost_per_task_usd,accuracy,avg_steps,switched,switched_fraction,a1_share,a2_share,"
    "verifier_calls_per_task";

std::string csv_row(const RunReport& r) {
  std::ostringstream os;
  os << r.label << ',' << r.tasks << ',' << format_fixed(r.latency_per_request(), 3) << ','
     << format_fixed(r.cost_per_task(), 6) << ',' << format_fixed(r.accuracy(), 4) << ','
     << format_fixed(r.avg_steps(), 2) << ',' << r.switched << ',' << format_fixed(r.switched_fraction(), 4) << ','
     << format_fixed(r.a1_share(), 4) << ',' << format_fixed(r.a2_share(), 4) << ','
     << format_fixed(r.verifier_calls_per_task(), 3);
  return os.str();
}

}  // namespace

std::string report_csv(std::span<const RunReport> reports) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : reports) out += csv_row(r) + "\n";
  return out;
}

std::string report_table(std::span<const RunReport> reports) {
  const std::vector<std::string> head{"Method", "Lat./Req.", "Cost/Task", "Acc.", "Avg Step",
                                      "Switched", "A1 Share", "A2 Share", "Verif./Task"};
  std::vector<std::vector<std::string>> rows{head};
  for (const auto& r : reports) {
    rows.push_back({r.label, format_fixed(r.latency_per_request(), 2) + "s", "$" + format_fixed(r.cost_per_task(), 4),
                    pct(r.accuracy()), format_fixed(r.avg_steps(), 1), r.a2_share() > 0 ? switched_cell(r) : "-",
                    pct(r.a1_share()), pct(r.a2_share()), format_fixed(r.verifier_calls_per_task(), 2)});
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  std::ostringstream os;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t i = 0; i < rows[k].size(); ++i) {
      const auto pad = std::string(width[i] - rows[k][i].size(), ' ');
      if (i == 0) os << rows[k][i] << pad;
      else os << "  " << pad << rows[k][i];
    }
    os << '\n';
    if (k == 0) {
      std::size_t total = std::accumulate(width.begin(), width.end(), std::size_t{0}) + 2 * (width.size() - 1);
      os << std::string(total, '-') << '\n';
    }
  }
  return os.str();
}

std::string frontier_csv(std::span<const FrontierPoint> points) {
  std::string out = std::string("theta_s,theta_m,") + kCsvHeader + ",pareto\n";
  for (const auto& p : points)
    out += format_double(p.theta_s) + "," + format_double(p.theta_m) + "," + csv_row(p.report) + "," +
           (p.pareto ? "1" : "0") + "\n";
  return out;
}

std::string signatures_table(const FailureSignatures& s) {
  auto cell = [](const std::optional<double>& v, int d) { return v ? format_fixed(*v, d) : std::string("n/a"); };
  std::ostringstream os;
  os << "episodes " << s.episodes << " (success " << s.succeeded << ", failed " << s.failed << ")\n";
  os << "avg steps        success " << cell(s.avg_steps_success, 1) << "  failed " << cell(s.avg_steps_failed, 1);
  if (auto r = s.length_ratio()) os << "  " << format_ratio(*r);
  os << "\nrepetition rate  success " << cell(s.rep_rate_success, 3) << "  failed " << cell(s.rep_rate_failed, 3);
  if (auto r = s.repetition_ratio()) os << "  " << format_ratio(*r);
  os << "  (lookback " << s.lookback << ")\n";
  os << "done-but-failed  " << (s.done_but_failed_rate ? pct(*s.done_but_failed_rate) : std::string("n/a")) << '\n';
  return os.str();
}

}  // namespace cascade
