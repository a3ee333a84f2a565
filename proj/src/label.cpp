#include "cascade/label.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace cascade {

std::string_view to_string(DetectorKind k) { return k == DetectorKind::stuck ? "stuck" : "milestone"; }

DetectorKind detector_kind_from_string(std::string_view s) {
  if (s == "stuck") return DetectorKind::stuck;
  if (s == "milestone") return DetectorKind::milestone;
  throw std::invalid_argument("unknown detector kind '" + std::string(s) + "'");
}

json LabeledWindow::to_json() const {
  json entries_json = json::array();
  for (const auto& e : entries) entries_json.push_back(json{{"rationale", e.rationale}, {"action", cascade::to_json(e.action)}});
  json j{{"kind", to_string(kind)},
         {"entries", std::move(entries_json)},
         {"label", label},
         {"provenance",
          {{"trajectory_id", provenance.trajectory_id},
           {"step_index", provenance.step_index},
           {"votes", provenance.votes},
           {"runs", provenance.runs}}}};
  if (task_instruction) j["task"] = *task_instruction;
  return j;
}

LabeledWindow LabeledWindow::from_json(const json& j) {
  LabeledWindow w;
  w.kind = detector_kind_from_string(j.at("kind").get<std::string>());
  if (auto it = j.find("task"); it != j.end()) w.task_instruction = it->get<std::string>();
  if ((w.kind == DetectorKind::milestone) != w.task_instruction.has_value())
    throw std::invalid_argument("milestone samples carry the task, stuck samples do not");
  for (const auto& e : j.at("entries"))
    w.entries.push_back({e.at("rationale").get<std::string>(), action_from_json(e.at("action"))});
  w.label = j.at("label").get<bool>();
  const auto& p = j.at("provenance");
  w.provenance = {p.at("trajectory_id").get<std::string>(), p.at("step_index").get<int>(), p.at("votes").get<int>(),
                  p.at("runs").get<int>()};
  if (w.provenance.votes > w.provenance.runs) throw std::invalid_argument("votes exceed runs");
  return w;
}

std::vector<LabeledWindow> extract_windows(const Episode& e, DetectorKind kind, int context_len,
                                           std::string trajectory_id) {
  if (e.steps.empty()) throw std::invalid_argument("extract_windows needs a non-empty episode");
  if (context_len < 0) throw std::invalid_argument("context_len must be >= 0");
  if (trajectory_id.empty()) trajectory_id = e.task.task_id;
  std::vector<LabeledWindow> out;
  out.reserve(e.steps.size());
  for (int t = 1; t <= static_cast<int>(e.steps.size()); ++t) {
    LabeledWindow w;
    w.kind = kind;
    if (kind == DetectorKind::milestone) w.task_instruction = e.task.instruction;
    w.entries = build_window(e, t, context_len + 1).entries;
    w.provenance = {trajectory_id, t, 0, 0};
    out.push_back(std::move(w));
  }
  return out;
}

int consensus_threshold(int runs) { return (3 * runs + 4) / 5; }

Consensus aggregate_consensus(int votes, int runs) {
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (votes < 0 || votes > runs)
    throw std::invalid_argument("votes " + std::to_string(votes) + " outside [0, " + std::to_string(runs) + "]");
  if (votes == 0) return Consensus::negative;
  return votes >= consensus_threshold(runs) ? Consensus::positive : Consensus::discard;
}

OracleTeacher::OracleTeacher(TruthFn truth, double epsilon, std::uint64_t seed)
    : truth_(std::move(truth)), epsilon_(epsilon), seed_(seed) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("label noise must be in [0,1]");
}

TeacherRunResult OracleTeacher::label(const Episode& e, int run_index) {
  const std::vector<StepTruth> truth = truth_(e);
  TeacherRunResult r;
  r.run_index = run_index;
  const std::uint64_t base = hash_combine(hash_combine(seed_, hash_string(e.task.task_id)), static_cast<std::uint64_t>(run_index));
  for (int t = 1; t <= static_cast<int>(e.steps.size()) && t < static_cast<int>(truth.size()); ++t) {
    const std::uint64_t h = hash_combine(base, static_cast<std::uint64_t>(t));
    const bool flip_stuck = to_unit(h) < epsilon_;
    const bool flip_mile = to_unit(mix64(h ^ 0x6d696c65)) < epsilon_;
    if (truth[static_cast<std::size_t>(t)].in_stuck_region != flip_stuck) r.stuck_steps.insert(t);
    if (truth[static_cast<std::size_t>(t)].completes_milestone != flip_mile) r.milestone_steps.insert(t);
  }
  json raw{{"stuck_steps", r.stuck_steps}, {"milestone_steps", r.milestone_steps}};
  r.raw = raw.dump();
  return r;
}

std::vector<TeacherRunResult> run_teacher(Teacher& teacher, const Episode& e, int runs) {
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  std::vector<TeacherRunResult> out;
  int flagged = 0;
  for (int i = 0; i < runs; ++i) {
    TeacherRunResult r;
    try {
      r = teacher.label(e, i);
    } catch (const std::exception& ex) {
      r = TeacherRunResult{};
      r.flagged = true;
      r.error = ex.what();
    }
    r.run_index = i;
    if (r.flagged) {
      r.stuck_steps.clear();
      r.milestone_steps.clear();
      ++flagged;
    }
    out.push_back(std::move(r));
  }
  if (flagged)
    log_warning("trajectory " + e.task.task_id + ": " + std::to_string(runs - flagged) + " of " + std::to_string(runs) +
                " teacher runs valid");
  return out;
}

std::vector<LabeledWindow> consensus_label(const Episode& e, std::span<const TeacherRunResult> results, DetectorKind kind,
                                           int context_len, std::string trajectory_id) {
  const int runs = static_cast<int>(results.size());
  std::vector<LabeledWindow> kept;
  for (auto& w : extract_windows(e, kind, context_len, std::move(trajectory_id))) {
    const int t = w.provenance.step_index;
    int votes = 0;
    for (const auto& r : results) {
      const auto& steps = kind == DetectorKind::stuck ? r.stuck_steps : r.milestone_steps;
      if (steps.contains(t)) ++votes;
    }
    const Consensus c = aggregate_consensus(votes, runs);
    if (c == Consensus::discard) continue;
    w.label = c == Consensus::positive;
    w.provenance.votes = votes;
    w.provenance.runs = runs;
    kept.push_back(std::move(w));
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Teacher prompts

namespace {

std::string trajectory_text(const Episode& e) {
  std::ostringstream os;
  for (const auto& s : e.steps) os << "Step " << s.index << ": " << s.rationale << "\n  Action: " << render(s.action) << '\n';
  return os.str();
}

json extract_json(std::string_view text) {
  std::string_view body = text;
  if (auto fence = text.find("```"); fence != std::string_view::npos) {
    auto start = text.find('\n', fence);
    auto end = start == std::string_view::npos ? start : text.find("```", start);
    if (end == std::string_view::npos) throw std::invalid_argument("unterminated code fence in teacher response");
    body = text.substr(start + 1, end - start - 1);
  }
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw std::invalid_argument("teacher response is not a JSON object");
  return j;
}

int checked_step(const json& v, int num_steps) {
  if (!v.is_number_integer()) throw std::invalid_argument("step numbers must be integers");
  const int s = v.get<int>();
  if (s < 1 || s > num_steps)
    throw std::invalid_argument("step " + std::to_string(s) + " outside [1, " + std::to_string(num_steps) + "]");
  return s;
}

}  // namespace

std::string stuck_labeling_instruction() {
  return "You are an expert AI agent evaluator. Your task is to analyze computer use agent trajectories and identify "
         "if the agent got stuck during execution.\n\n"
         "An agent is considered \"stuck\" if:\n"
         "1. It repeats the same action multiple times without progress\n"
         "2. It enters an error loop or infinite loop\n"
         "3. It failed to make meaningful progress for several steps\n\n"
         "Analyze the trajectory and return a JSON response in this exact format:\n"
         "{\n"
         "  \"is_stuck\": true/false,\n"
         "  \"stuck_steps\": [list of step numbers where agent appears stuck],\n"
         "  \"reasons\": [list of reasons explaining why each step is stuck],\n"
         "  \"severity\": \"low/medium/high\",\n"
         "  \"summary\": \"brief summary of the issue\"\n"
         "}\n\n"
         "If the agent is not stuck, return:\n"
         "{\n"
         "  \"is_stuck\": false,\n"
         "  \"stuck_steps\": [],\n"
         "  \"reasons\": [],\n"
         "  \"severity\": \"none\",\n"
         "  \"summary\": \"Agent completed task successfully\"\n"
         "}\n";
}

std::string stuck_labeling_input(const Episode& e) {
  return "Analyze the following agent trajectory for task ID: " + e.task.task_id + "\n\nTotal steps: " +
         std::to_string(e.steps.size()) + "\n\nTrajectory:\n" + trajectory_text(e) +
         "\nProvide your analysis in JSON format as specified.\n";
}

std::string milestone_labeling_instruction() {
  return "You are labeling a GUI agent trajectory to identify milestone steps---steps where meaningful, verifiable "
         "progress is achieved.\n\n"
         "1. If the trajectory is short/simple, like 5 or 6 steps, you may output only the final step as a milestone.\n"
         "2. If the trajectory is long, you may list multiple milestones, but don't list too many, and each two "
         "milestones should be at least 3 steps apart.\n"
         "3. If the trajectory becomes stuck (repetition/no progress), ignore steps inside the stuck region unless a "
         "milestone occurs later.\n\n"
         "Rules:\n"
         "- A milestone must be meaningful and verifiable from the given step text (action/response/done/fail).\n"
         "- Prefer higher-level progress markers.\n"
         "- Do NOT invent UI details you cannot support from the trajectory text.\n"
         "- For EACH milestone step, provide a clear reasoning explaining why this step represents meaningful "
         "progress.\n\n"
         "Schema: {\"milestones\": [{\"step\": <step number>, \"reasoning\": \"<why>\"}]}\n";
}

std::string milestone_labeling_input(const Episode& e) {
  return "Task ID: " + e.task.task_id + "\nTotal steps: " + std::to_string(e.steps.size()) + "\n\nTrajectory:\n" +
         trajectory_text(e) +
         "\nReturn JSON only, matching the schema. For each milestone step, provide the step number AND a reasoning "
         "explaining why it's a milestone.\n";
}

std::set<int> parse_stuck_labels(std::string_view text, int num_steps) {
  const json j = extract_json(text);
  auto is_stuck = j.find("is_stuck");
  auto steps = j.find("stuck_steps");
  if (is_stuck == j.end() || !is_stuck->is_boolean()) throw std::invalid_argument("missing boolean \"is_stuck\"");
  if (steps == j.end() || !steps->is_array()) throw std::invalid_argument("missing array \"stuck_steps\"");
  for (const char* key : {"reasons", "severity", "summary"})
    if (!j.contains(key)) throw std::invalid_argument(std::string("missing \"") + key + "\"");
  std::set<int> out;
  for (const auto& v : *steps) out.insert(checked_step(v, num_steps));
  if (!is_stuck->get<bool>() && !out.empty()) throw std::invalid_argument("is_stuck is false but stuck_steps is not empty");
  return out;
}

std::set<int> parse_milestone_labels(std::string_view text, int num_steps) {
  const json j = extract_json(text);
  auto ms = j.find("milestones");
  if (ms == j.end() || !ms->is_array()) throw std::invalid_argument("missing array \"milestones\"");
  std::set<int> out;
  for (const auto& m : *ms) {
    if (!m.is_object() || !m.contains("step") || !m.contains("reasoning"))
      throw std::invalid_argument("each milestone needs \"step\" and \"reasoning\"");
    out.insert(checked_step(m.at("step"), num_steps));
  }
  return out;
}

// ---------------------------------------------------------------------------

DatasetSplit export_dataset(std::span<const LabeledWindow> samples, double train_fraction, std::uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("export_dataset needs at least one sample");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw std::invalid_argument("train fraction must be in (0,1]");

  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.provenance.trajectory_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::stable_sort(ids.begin(), ids.end(), [seed](const std::string& a, const std::string& b) {
    return hash_string(a, seed) < hash_string(b, seed);
  });

  DatasetSplit out;
  std::size_t n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
  if (ids.size() == 1) {
    out.warnings.push_back("only one trajectory; cannot split, everything goes to train");
    n_train = 1;
  }
  n_train = std::clamp<std::size_t>(n_train, 1, ids.size());
  std::set<std::string> train_ids(ids.begin(), ids.begin() + static_cast<long>(n_train));
  out.train_trajectories.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
  out.eval_trajectories.assign(ids.begin() + static_cast<long>(n_train), ids.end());

  for (const auto& s : samples) {
    const bool train = train_ids.contains(s.provenance.trajectory_id);
    (train ? out.train : out.eval).push_back(s);
    ClassCounts& c = train ? out.train_counts : out.eval_counts;
    (s.label ? c.positive : c.negative)++;
  }
  auto check = [&](const ClassCounts& c, const char* side) {
    if (c.positive == 0) out.warnings.push_back(std::string(side) + " split has no positive samples");
    if (c.negative == 0) out.warnings.push_back(std::string(side) + " split has no negative samples");
  };
  check(out.train_counts, "train");
  check(out.eval_counts, "eval");
  return out;
}

std::string dataset_lines(std::span<const LabeledWindow> samples) {
  std::string out;
  for (const auto& s : samples) out += s.to_json().dump() + "\n";
  return out;
}

std::vector<LabeledWindow> parse_dataset_lines(std::string_view text) {
  std::vector<LabeledWindow> out;
  std::size_t line = 0, start = 0;
  while (start < text.size()) {
    ++line;
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view row = text.substr(start, end - start);
    start = end + 1;
    if (row.empty()) continue;
    try {
      out.push_back(LabeledWindow::from_json(json::parse(row)));
    } catch (const std::exception& ex) {
      throw std::invalid_argument("dataset line " + std::to_string(line) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace cascade
