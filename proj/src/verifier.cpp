#include "cascade/verifier.hpp"

#include <sstream>

namespace cascade {

json Evidence::to_json() const {
  if (kind == Kind::image) return json{{"kind", "image"}, {"data", base64_encode(data)}};
  return json{{"kind", "digest"}, {"data", data}};
}

void EvidenceStore::retain(int keep_a, int keep_b) {
  std::erase_if(items_, [&](const auto& kv) { return kv.first != keep_a && kv.first != keep_b; });
}

json MilestonePacket::to_json() const {
  json trace = json::array();
  for (const auto& e : segment) trace.push_back(json{{"rationale", e.rationale}, {"action", cascade::to_json(e.action)}});
  return json{{"task", task.instruction}, {"trace", std::move(trace)}, {"before", before.to_json()}, {"after", after.to_json()}};
}

MilestonePacket build_milestone_packet(const Episode& e, const TaskSpec& task, int tau, int t,
                                       const EvidenceStore& evidence) {
  if (tau < 0) throw std::invalid_argument("milestone packet: tau must be >= 0");
  if (tau >= t)
    throw std::invalid_argument("milestone packet: tau (" + std::to_string(tau) + ") must be < t (" + std::to_string(t) + ")");
  if (t > static_cast<int>(e.steps.size()))
    throw std::invalid_argument("milestone packet: t beyond recorded steps");

  const Evidence* before = evidence.find(tau);
  if (!before) throw PacketError("no checkpoint evidence saved at step " + std::to_string(tau));
  const Step& last = e.steps[static_cast<std::size_t>(t - 1)];
  Evidence after = Evidence::digest(last.observation_digest);
  if (const Evidence* stored = evidence.find(t)) after = *stored;
  if (before->kind != after.kind) throw PacketError("before/after evidence kinds differ");

  MilestonePacket p;
  p.task = task;
  p.tau = tau;
  p.t = t;
  p.before = *before;
  p.after = std::move(after);
  p.segment.reserve(static_cast<std::size_t>(t - tau));
  for (int i = tau + 1; i <= t; ++i) {
    const Step& s = e.steps[static_cast<std::size_t>(i - 1)];
    p.segment.push_back({s.rationale, s.action});
  }
  return p;
}

Verdict OracleVerifier::verify(const MilestonePacket& p) {
  auto at_tau = truth_->truth_at(p.tau);
  auto at_t = truth_->truth_at(p.t);
  if (!at_tau || !at_t) throw VerifierError("oracle verifier has no ground truth for the packet span");
  const bool progress = at_t->progress > at_tau->progress;
  const bool intent = !at_t->drift_active;
  std::string why = progress ? "progress advanced" : "no valid progress since last milestone";
  why += intent ? "; state matches the task" : "; state has drifted from the task";
  return Verdict::make(progress, intent, why, "segment " + std::to_string(p.tau + 1) + ".." + std::to_string(p.t));
}

Verdict parse_verdict_response(const json& body) {
  if (!body.is_object()) throw VerifierError("verifier response is not a JSON object");
  auto inferred = body.find("inferred_milestone");
  auto success = body.find("success");
  auto reasoning = body.find("reasoning");
  if (inferred == body.end() || !inferred->is_string())
    throw VerifierError("verifier response missing string \"inferred_milestone\"");
  if (success == body.end() || !success->is_boolean()) throw VerifierError("verifier response missing boolean \"success\"");
  if (reasoning == body.end() || !reasoning->is_string())
    throw VerifierError("verifier response missing string \"reasoning\"");
  const bool ok = success->get<bool>();
  return Verdict::make(ok, ok, reasoning->get<std::string>(), inferred->get<std::string>());
}

std::string verification_instruction() {
  return "You are an expert evaluator of GUI agent progress. Your task is to determine whether the attempted "
         "milestone was successfully achieved.\n\n"
         "You are given:\n"
         "1. The task description\n"
         "2. The actions taken since the previous milestone\n"
         "3. A BEFORE screenshot from the previous milestone\n"
         "4. An AFTER screenshot from the current step\n\n"
         "Instructions:\n"
         "- Infer what milestone the agent was attempting to achieve from the task description and the recent "
         "actions.\n"
         "- Compare the BEFORE and AFTER screenshots to determine whether the intended milestone was actually "
         "achieved.\n"
         "- Use the action history as supporting evidence, but base your judgment primarily on whether the AFTER "
         "state reflects meaningful progress relative to the BEFORE state.\n"
         "- Mark \"success\" as true only if the milestone appears clearly achieved.\n"
         "- Mark \"success\" as false if the screenshots do not support that the milestone was completed, if the "
         "state is inconsistent with the intended progress, or if the evidence suggests failure.\n"
         "- Do NOT invent UI details that are not supported by the screenshots or action history.\n"
         "- For each decision, provide a concise reasoning explaining why the milestone succeeded or failed.\n";
}

std::string verification_input(const MilestonePacket& p) {
  std::ostringstream os;
  os << "## Task Description\n" << p.task.instruction << "\n\n## Actions Since Previous Milestone\n";
  for (std::size_t i = 0; i < p.segment.size(); ++i) {
    os << "Step " << (p.tau + 1 + static_cast<int>(i)) << ": " << p.segment[i].rationale << "\n  Action: "
       << render(p.segment[i].action) << '\n';
  }
  os << "\nPlease analyze whether the milestone step was successful by comparing the BEFORE and AFTER screenshots "
        "and examining the actions taken.\n\n"
        "Return JSON only, matching this exact schema:\n"
        "{\n"
        "  \"inferred_milestone\": \"string - description of what milestone was attempted\",\n"
        "  \"success\": true/false,\n"
        "  \"reasoning\": \"string - explanation of why it succeeded or failed\"\n"
        "}\n";
  return os.str();
}

}  // namespace cascade
