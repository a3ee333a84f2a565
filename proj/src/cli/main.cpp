#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"

#include "cascade/bench.hpp"
#include "cascade/config.hpp"
#include "cascade/label.hpp"
#include "cascade/metrics.hpp"
#include "cascade/remote.hpp"

namespace fs = std::filesystem;
using namespace cascade;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + p.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << content;
}

AppConfig load_config(const Common& c) {
  AppConfig cfg = c.config_path.empty() ? AppConfig::from_json(default_config_json()) : AppConfig::load(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void write_manifest(const Common& c, const AppConfig& cfg, const std::string& command, json extra = json::object()) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream ts;
  ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
  json m{{"command", command},
         {"config_path", c.config_path.empty() ? json("<built-in defaults>") : json(c.config_path)},
         {"config_digest", cfg.digest},
         {"seed", cfg.seed},
         {"output_directory", c.out},
         {"tool_version", kToolVersion},
         {"created", ts.str()}};
  m.update(extra);
  write_file(fs::path(c.out) / "manifest.json", m.dump(2) + "\n");
}

synth::Suite load_suite(const std::string& manifest_path, const AppConfig& cfg) {
  if (manifest_path.empty()) {
    synth::SuiteSpec spec = cfg.suite;
    spec.seed = cfg.seed;
    return synth::make_suite(spec);
  }
  json j = json::parse(read_file(manifest_path), nullptr, false);
  if (j.is_discarded()) throw UsageError("suite manifest '" + manifest_path + "' is not valid JSON");
  try {
    return synth::Suite::from_manifest(j);
  } catch (const std::exception& ex) {
    throw UsageError("invalid suite manifest '" + manifest_path + "': " + ex.what());
  }
}

std::string trace_name(std::size_t i, const EpisodeRecord& r) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << i << '-' << r.episode.task.task_id << ".jsonl";
  return os.str();
}

void write_traces(const fs::path& dir, const std::vector<EpisodeRecord>& records) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < records.size(); ++i) write_file(dir / trace_name(i, records[i]), serialize_record(records[i]));
}

std::vector<EpisodeRecord> read_traces(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<EpisodeRecord> out;
  for (const auto& f : files) {
    try {
      out.push_back(parse_record(read_file(f)));
    } catch (const TraceParseError& ex) {
      throw std::runtime_error(f.string() + ": " + ex.what());
    }
  }
  if (out.empty()) throw UsageError("no .jsonl traces in '" + dir.string() + "'");
  return out;
}

std::vector<EpisodeRecord> run_with_progress(const synth::Suite& suite, const RunContext& ctx, const AdapterFactory& f,
                                             std::uint64_t seed, int jobs, const std::string& label) {
  log_info(label + ": " + std::to_string(suite.entries.size()) + " episodes, " + std::to_string(jobs) + " job(s)");
  auto records = run_suite(suite, ctx, f, seed, jobs);
  log_info(label + ": done");
  return records;
}

std::string routing_label(const CascadeConfig& c) {
  if (c.routing != Routing::cascade) return std::string(to_string(c.routing));
  if (c.periodic_k) return "periodic-" + std::to_string(*c.periodic_k);
  return "cascade";
}

// ---------------------------------------------------------------------------

int cmd_suite(const Common& c) {
  const AppConfig cfg = load_config(c);
  const synth::Suite suite = load_suite({}, cfg);
  write_file(fs::path(c.out) / "suite.json", suite.manifest().dump(2) + "\n");
  write_manifest(c, cfg, "suite", {{"tasks", suite.entries.size()}});
  return 0;
}

int cmd_simulate(const Common& c, const std::string& suite_path) {
  const AppConfig cfg = load_config(c);
  const synth::Suite suite = load_suite(suite_path, cfg);
  RunContext ctx = cfg.run_context();
  ctx.config.routing = Routing::small_only;
  auto records = run_with_progress(suite, ctx, cfg.adapter_factory(), cfg.seed, c.jobs, "simulate");
  write_traces(fs::path(c.out) / "traces", records);
  std::vector<Episode> episodes;
  for (const auto& r : records) episodes.push_back(r.episode);
  const FailureSignatures sig = failure_signatures(episodes);
  write_file(fs::path(c.out) / "signatures.txt", signatures_table(sig));
  std::cout << signatures_table(sig);
  write_manifest(c, cfg, "simulate", {{"suite", suite.manifest().at("suite")}, {"episodes", records.size()}});
  return 0;
}

int cmd_run(const Common& c, const std::string& suite_path, const std::string& mode, std::optional<int> periodic_k,
            const std::string& label) {
  AppConfig cfg = load_config(c);
  const synth::Suite suite = load_suite(suite_path, cfg);
  if (mode == "small-only") cfg.cascade.routing = Routing::small_only;
  else if (mode == "large-only") cfg.cascade.routing = Routing::large_only;
  else if (mode == "cascade") cfg.cascade.routing = Routing::cascade;
  else throw UsageError("--mode must be cascade, small-only or large-only");
  if (periodic_k) {
    if (cfg.cascade.routing != Routing::cascade) throw UsageError("--periodic-k needs --mode cascade");
    cfg.cascade.periodic_k = *periodic_k;
  }
  try {
    cfg.cascade.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  const RunContext ctx = cfg.run_context();
  const std::string name = label.empty() ? routing_label(cfg.cascade) : label;
  auto records = run_with_progress(suite, ctx, cfg.adapter_factory(), cfg.seed, c.jobs, name);
  write_traces(fs::path(c.out) / "traces", records);

  const RunReport report = cascade_stats(records, name);
  const std::vector<RunReport> reports{report};
  write_file(fs::path(c.out) / "report.json", report.to_json().dump(2) + "\n");
  write_file(fs::path(c.out) / "report.csv", report_csv(reports));
  write_file(fs::path(c.out) / "report.txt", report_table(reports));
  std::cout << report_table(reports);

  const auto aborted = std::count_if(records.begin(), records.end(),
                                     [](const EpisodeRecord& r) { return r.episode.diagnostic.has_value(); });
  write_manifest(c, cfg, "run", {{"mode", mode}, {"label", name}, {"aborted_episodes", aborted}});
  if (aborted * 10 > static_cast<long>(records.size())) {
    std::cerr << "error: " << aborted << " of " << records.size() << " episodes aborted\n";
    return 1;
  }
  return 0;
}

int cmd_label(const Common& c, const std::string& traces_dir) {
  const AppConfig cfg = load_config(c);
  const auto records = read_traces(traces_dir);
  const synth::FailureProfile profile = cfg.suite.profile;

  std::unique_ptr<Teacher> teacher;
  if (cfg.adapters.teacher_endpoint)
    teacher = std::make_unique<RemoteTeacher>(*cfg.adapters.teacher_endpoint, cfg.adapters.teacher_temperature);
  else
    teacher = std::make_unique<OracleTeacher>([profile](const Episode& e) { return synth::reconstruct_truth(e, profile); },
                                              cfg.adapters.teacher_noise, hash_combine(cfg.seed, 0x7eac));

  std::vector<LabeledWindow> stuck, milestone;
  int flagged = 0;
  for (const auto& r : records) {
    if (r.episode.steps.empty()) continue;
    const auto results = run_teacher(*teacher, r.episode, cfg.labeling.runs);
    flagged += static_cast<int>(std::count_if(results.begin(), results.end(), [](const auto& x) { return x.flagged; }));
    for (auto& w : consensus_label(r.episode, results, DetectorKind::stuck, cfg.labeling.context_len)) stuck.push_back(std::move(w));
    for (auto& w : consensus_label(r.episode, results, DetectorKind::milestone, cfg.labeling.context_len))
      milestone.push_back(std::move(w));
  }

  json summary = json::object();
  auto emit = [&](const std::vector<LabeledWindow>& samples, const std::string& kind) {
    if (samples.empty()) throw std::runtime_error("no " + kind + " samples survived the consensus filter");
    const DatasetSplit split = export_dataset(samples, cfg.labeling.train_fraction, cfg.seed);
    for (const auto& w : split.warnings) log_warning(kind + ": " + w);
    write_file(fs::path(c.out) / (kind + "_train.jsonl"), dataset_lines(split.train));
    write_file(fs::path(c.out) / (kind + "_eval.jsonl"), dataset_lines(split.eval));
    summary[kind] = {{"train", {{"positive", split.train_counts.positive}, {"negative", split.train_counts.negative}}},
                     {"eval", {{"positive", split.eval_counts.positive}, {"negative", split.eval_counts.negative}}},
                     {"train_trajectories", split.train_trajectories.size()},
                     {"eval_trajectories", split.eval_trajectories.size()},
                     {"warnings", split.warnings}};
  };
  emit(stuck, "stuck");
  emit(milestone, "milestone");
  summary["flagged_runs"] = flagged;
  summary["runs_per_trajectory"] = cfg.labeling.runs;
  write_file(fs::path(c.out) / "label_report.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << '\n';
  write_manifest(c, cfg, "label", {{"traces", traces_dir}, {"trajectories", records.size()}});
  return 0;
}

// Oracle scores for dataset windows come from re-scanning the source traces.
class TraceTruth {
 public:
  TraceTruth(const std::vector<EpisodeRecord>& records, const synth::FailureProfile& p) {
    for (const auto& r : records) truth_[r.episode.task.task_id] = synth::reconstruct_truth(r.episode, p);
  }
  const StepTruth& at(const Provenance& p) const {
    auto it = truth_.find(p.trajectory_id);
    if (it == truth_.end() || p.step_index < 1 || p.step_index >= static_cast<int>(it->second.size()))
      throw std::runtime_error("no trace ground truth for " + p.trajectory_id + " step " + std::to_string(p.step_index));
    return it->second[static_cast<std::size_t>(p.step_index)];
  }

 private:
  std::map<std::string, std::vector<StepTruth>> truth_;
};

int cmd_eval_detectors(const Common& c, const std::string& data_path, const std::string& traces_dir,
                       const std::string& monitor, double threshold) {
  const AppConfig cfg = load_config(c);
  const auto samples = parse_dataset_lines(read_file(data_path));
  if (samples.empty()) throw UsageError("dataset '" + data_path + "' is empty");

  std::optional<TraceTruth> truth;
  if (monitor == "oracle") {
    if (traces_dir.empty()) throw UsageError("--monitor oracle needs --traces");
    truth.emplace(read_traces(traces_dir), cfg.suite.profile);
  } else if (monitor == "remote" && !cfg.adapters.monitor_endpoint) {
    throw UsageError("--monitor remote needs adapters.monitor_endpoint in the config");
  } else if (monitor != "heuristic" && monitor != "remote") {
    throw UsageError("--monitor must be oracle, heuristic or remote");
  }
  HeuristicStuckMonitor h_stuck(cfg.cascade.grid);
  HeuristicMilestoneMonitor h_mile;
  std::unique_ptr<RemoteStuckMonitor> r_stuck;
  std::unique_ptr<RemoteMilestoneMonitor> r_mile;
  if (monitor == "remote") {
    r_stuck = std::make_unique<RemoteStuckMonitor>(*cfg.adapters.monitor_endpoint);
    r_mile = std::make_unique<RemoteMilestoneMonitor>(*cfg.adapters.monitor_endpoint);
  }

  std::map<DetectorKind, std::pair<std::vector<double>, std::vector<char>>> by_kind;
  for (const auto& s : samples) {
    double score = 0.0;
    const Window w = s.window();
    if (truth) {
      const StepTruth& t = truth->at(s.provenance);
      score = (s.kind == DetectorKind::stuck ? t.in_stuck_region : t.completes_milestone) ? 1.0 : 0.0;
    } else if (s.kind == DetectorKind::stuck) {
      score = (r_stuck ? r_stuck->score(w) : h_stuck.score(w)).value;
    } else {
      score = (r_mile ? r_mile->score(*s.task_instruction, w) : h_mile.score(*s.task_instruction, w)).value;
    }
    by_kind[s.kind].first.push_back(score);
    by_kind[s.kind].second.push_back(s.label ? 1 : 0);
  }

  json out = json::object();
  for (const auto& [kind, data] : by_kind) {
    const std::size_t n = data.second.size();
    auto labels = std::make_unique<bool[]>(n);
    std::copy(data.second.begin(), data.second.end(), labels.get());
    const DetectorMetrics m = evaluate_detector(data.first, std::span<const bool>(labels.get(), n), threshold);
    out[std::string(to_string(kind))] = {{"accuracy", m.accuracy},
                                         {"precision", m.precision},
                                         {"recall", m.recall},
                                         {"f1", m.f1},
                                         {"tp", m.confusion.tp},
                                         {"fp", m.confusion.fp},
                                         {"tn", m.confusion.tn},
                                         {"fn", m.confusion.fn}};
    std::cout << to_string(kind) << ": acc " << format_fixed(m.accuracy, 4) << "  prec " << format_fixed(m.precision, 4)
              << "  rec " << format_fixed(m.recall, 4) << "  f1 " << format_fixed(m.f1, 4) << "  (n=" << n
              << ", threshold " << format_double(threshold) << ")\n";
  }
  out["monitor"] = monitor;
  out["threshold"] = threshold;
  write_file(fs::path(c.out) / "detector_metrics.json", out.dump(2) + "\n");
  write_manifest(c, cfg, "eval-detectors", {{"data", data_path}, {"monitor", monitor}});
  return 0;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError("not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("empty threshold list");
  return out;
}

int cmd_sweep(const Common& c, const std::string& suite_path, const std::string& grid_s, const std::string& grid_m) {
  const AppConfig cfg = load_config(c);
  const synth::Suite suite = load_suite(suite_path, cfg);
  std::vector<std::pair<double, double>> grid;
  for (double s : parse_list(grid_s))
    for (double m : parse_list(grid_m)) grid.emplace_back(s, m);
  const AdapterFactory factory = cfg.adapter_factory();
  auto points = sweep_frontier(grid, [&](double ts, double tm) {
    RunContext ctx = cfg.run_context();
    ctx.config.routing = Routing::cascade;
    ctx.config.periodic_k.reset();
    ctx.config.theta_s = ts;
    ctx.config.theta_m = tm;
    const std::string name = "theta=(" + format_double(ts) + "," + format_double(tm) + ")";
    return cascade_stats(run_with_progress(suite, ctx, factory, cfg.seed, c.jobs, name), name);
  });
  write_file(fs::path(c.out) / "frontier.csv", frontier_csv(points));
  std::vector<RunReport> reports;
  for (const auto& p : points) {
    reports.push_back(p.report);
    if (p.pareto) reports.back().label += " *";
  }
  write_file(fs::path(c.out) / "frontier.txt", report_table(reports));
  std::cout << report_table(reports) << "* Pareto-optimal (accuracy vs cost)\n";
  write_manifest(c, cfg, "sweep", {{"grid_points", grid.size()}});
  return 0;
}

int cmd_report(const Common& c, const std::vector<std::string>& runs) {
  const AppConfig cfg = load_config(c);
  std::vector<RunReport> reports;
  for (const auto& dir : runs) {
    const fs::path p = fs::path(dir) / "report.json";
    json j = json::parse(read_file(p), nullptr, false);
    if (j.is_discarded()) throw UsageError("'" + p.string() + "' is not valid JSON");
    reports.push_back(RunReport::from_json(j));
  }
  write_file(fs::path(c.out) / "comparison.csv", report_csv(reports));
  write_file(fs::path(c.out) / "comparison.txt", report_table(reports));
  std::cout << report_table(reports)
            << "A1/A2 shares count policy-executed steps only; monitor and verifier calls are not steps.\n";
  write_manifest(c, cfg, "report", {{"runs", runs}});
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON config file (defaults built in)")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Override the config seed");
  sub->add_option("--out", c.out, "Output directory")->required();
  sub->add_option("--jobs", c.jobs, "Parallel episodes")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-tier agent cascade: simulate, run, label, evaluate, sweep, report"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Common common;
  std::string suite_path, mode = "cascade", label, traces_dir, data_path, monitor = "oracle";
  std::string grid_s = "0.3,0.5,0.7", grid_m = "0.3,0.5,0.7";
  std::optional<int> periodic_k;
  double threshold = 0.5;
  std::vector<std::string> runs;

  auto* suite = app.add_subcommand("suite", "Write the task-suite manifest");
  add_common(suite, common);

  auto* simulate = app.add_subcommand("simulate", "Roll out the scripted small policy and report failure signatures");
  add_common(simulate, common);
  simulate->add_option("--suite", suite_path, "Suite manifest (default: generated from config)")->check(CLI::ExistingFile);

  auto* run = app.add_subcommand("run", "Run the cascade or a baseline over the suite");
  add_common(run, common);
  run->add_option("--suite", suite_path, "Suite manifest")->check(CLI::ExistingFile);
  run->add_option("--mode", mode, "cascade | small-only | large-only");
  run->add_option("--periodic-k", periodic_k, "Verify every k steps instead of on milestone events")
      ->check(CLI::PositiveNumber);
  run->add_option("--label", label, "Row label in reports");

  auto* lbl = app.add_subcommand("label", "Teacher labeling with consensus filtering and dataset export");
  add_common(lbl, common);
  lbl->add_option("--traces", traces_dir, "Directory of episode traces")->required();

  auto* eval = app.add_subcommand("eval-detectors", "Score a labeled dataset with a monitor");
  add_common(eval, common);
  eval->add_option("--data", data_path, "Dataset file (.jsonl)")->required()->check(CLI::ExistingFile);
  eval->add_option("--traces", traces_dir, "Source traces (needed for oracle monitors)");
  eval->add_option("--monitor", monitor, "oracle | heuristic | remote");
  eval->add_option("--threshold", threshold, "Decision threshold");

  auto* sweep = app.add_subcommand("sweep", "Threshold grid sweep with Pareto flags");
  add_common(sweep, common);
  sweep->add_option("--suite", suite_path, "Suite manifest")->check(CLI::ExistingFile);
  sweep->add_option("--theta-s", grid_s, "Comma-separated stuck thresholds");
  sweep->add_option("--theta-m", grid_m, "Comma-separated milestone thresholds");

  auto* report = app.add_subcommand("report", "Merge run reports into one comparison table");
  add_common(report, common);
  report->add_option("--runs", runs, "Run output directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*suite) return cmd_suite(common);
    if (*simulate) return cmd_simulate(common, suite_path);
    if (*run) return cmd_run(common, suite_path, mode, periodic_k, label);
    if (*lbl) return cmd_label(common, traces_dir);
    if (*eval) return cmd_eval_detectors(common, data_path, traces_dir, monitor, threshold);
    if (*sweep) return cmd_sweep(common, suite_path, grid_s, grid_m);
    if (*report) return cmd_report(common, runs);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
