#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cascade/verifier.hpp"

using namespace cascade;

namespace {

Episode episode_with(int n) {
  Episode e;
  e.task = {"t1", "open the settings", 50, {}};
  for (int i = 1; i <= n; ++i) {
    Step s;
    s.index = i;
    s.rationale = "r" + std::to_string(i);
    s.action = Action::click(20.0 * i, 0);
    s.observation_digest = "state@" + std::to_string(i);
    e.steps.push_back(s);
  }
  return e;
}

class FixedTruth final : public GroundTruth {
 public:
  std::vector<StepTruth> truths;
  std::optional<StepTruth> truth_at(int step) const override {
    if (step < 0 || step >= static_cast<int>(truths.size())) return std::nullopt;
    return truths[static_cast<std::size_t>(step)];
  }
};

}  // namespace

TEST_CASE("packet examples") {
  const Episode e = episode_with(10);
  EvidenceStore ev;
  ev.put(0, Evidence::digest("initial"));
  ev.put(4, Evidence::digest("checkpoint@4"));

  auto p = build_milestone_packet(e, e.task, 4, 9, ev);
  REQUIRE(p.segment.size() == 5);
  CHECK(p.segment.front().rationale == "r5");
  CHECK(p.segment.back().rationale == "r9");
  CHECK(p.before == Evidence::digest("checkpoint@4"));
  CHECK(p.after == Evidence::digest("state@9"));

  p = build_milestone_packet(e, e.task, 0, 3, ev);
  CHECK(p.segment.size() == 3);
  CHECK(p.before == Evidence::digest("initial"));

  CHECK_THROWS_AS(build_milestone_packet(e, e.task, 7, 7, ev), std::invalid_argument);
  CHECK_THROWS_AS(build_milestone_packet(e, e.task, 8, 7, ev), std::invalid_argument);
  CHECK_THROWS_AS(build_milestone_packet(e, e.task, 0, 11, ev), std::invalid_argument);
  CHECK_THROWS_AS(build_milestone_packet(e, e.task, 2, 5, ev), PacketError);
}

TEST_CASE("packet evidence kinds must match") {
  const Episode e = episode_with(3);
  EvidenceStore ev;
  ev.put(0, Evidence::image("png-bytes"));
  CHECK_THROWS_AS(build_milestone_packet(e, e.task, 0, 2, ev), PacketError);
  ev.put(2, Evidence::image("png-2"));
  const auto p = build_milestone_packet(e, e.task, 0, 2, ev);
  CHECK(p.after.kind == Evidence::Kind::image);
  const json j = p.to_json();
  CHECK(j.at("before").at("kind") == "image");
  CHECK(j.at("before").at("data") == base64_encode("png-bytes"));
  CHECK(j.at("task") == "open the settings");
  CHECK(j.at("trace").size() == 2);
}

TEST_CASE("segments between commits partition the steps") {
  const Episode e = episode_with(20);
  EvidenceStore ev;
  ev.put(0, Evidence::digest("s0"));
  const std::vector<int> commits{0, 3, 4, 9, 15, 20};
  std::vector<std::string> joined;
  for (std::size_t i = 1; i < commits.size(); ++i) {
    ev.put(commits[i - 1], Evidence::digest("c"));
    const auto p = build_milestone_packet(e, e.task, commits[i - 1], commits[i], ev);
    CHECK(static_cast<int>(p.segment.size()) == commits[i] - commits[i - 1]);
    for (const auto& s : p.segment) joined.push_back(s.rationale);
  }
  REQUIRE(joined.size() == 20);
  for (int i = 0; i < 20; ++i) CHECK(joined[static_cast<std::size_t>(i)] == "r" + std::to_string(i + 1));
}

TEST_CASE("evidence store retain") {
  EvidenceStore ev;
  for (int i = 0; i < 6; ++i) ev.put(i, Evidence::digest(std::to_string(i)));
  ev.retain(0, 4);
  CHECK(ev.size() == 2);
  CHECK(ev.find(4));
  CHECK_FALSE(ev.find(3));
}

TEST_CASE("oracle verifier answers both questions") {
  const Episode e = episode_with(5);
  EvidenceStore ev;
  ev.put(0, Evidence::digest("s0"));
  FixedTruth truth;
  truth.truths = {{false, false, false, 0}, {false, false, false, 1}, {false, false, false, 1},
                  {false, true, true, 1},   {false, false, false, 1}, {false, false, false, 1}};
  OracleVerifier v(truth);

  auto verdict = v.verify(build_milestone_packet(e, e.task, 0, 2, ev));
  CHECK(verdict.progress_valid);
  CHECK(verdict.intent_consistent);
  CHECK(verdict.success);

  verdict = v.verify(build_milestone_packet(e, e.task, 0, 3, ev));
  CHECK_FALSE(verdict.intent_consistent);
  CHECK_FALSE(verdict.success);

  ev.put(2, Evidence::digest("c2"));
  verdict = v.verify(build_milestone_packet(e, e.task, 2, 5, ev));
  CHECK_FALSE(verdict.progress_valid);
  CHECK(verdict.intent_consistent);
  CHECK_FALSE(verdict.success);
}

TEST_CASE("verdict response mapping") {
  auto v = parse_verdict_response(
      json::parse(R"({"success": true, "inferred_milestone": "opened settings", "reasoning": "visible"})"));
  CHECK(v.progress_valid);
  CHECK(v.intent_consistent);
  CHECK(v.success);
  CHECK(v.inferred_milestone == "opened settings");
  v = parse_verdict_response(json::parse(R"({"success": false, "inferred_milestone": "", "reasoning": ""})"));
  CHECK_FALSE(v.progress_valid);
  CHECK_FALSE(v.success);
  CHECK_THROWS_AS(parse_verdict_response(json::parse(R"({"success": "yes", "inferred_milestone": "", "reasoning": ""})")),
                  VerifierError);
  CHECK_THROWS_AS(parse_verdict_response(json::parse(R"({"success": true, "reasoning": ""})")), VerifierError);
  CHECK_THROWS_AS(parse_verdict_response(json::parse(R"("text")")), VerifierError);
}

TEST_CASE("verdict success is the conjunction") {
  for (bool a : {false, true})
    for (bool b : {false, true}) CHECK(Verdict::make(a, b).success == (a && b));
}

TEST_CASE("verification prompt carries the segment") {
  const Episode e = episode_with(4);
  EvidenceStore ev;
  ev.put(1, Evidence::digest("c"));
  const auto p = build_milestone_packet(e, e.task, 1, 3, ev);
  const std::string text = verification_input(p);
  CHECK(text.find("Step 2: r2") != std::string::npos);
  CHECK(text.find("Step 3: r3") != std::string::npos);
  CHECK(text.find("Step 1:") == std::string::npos);
  CHECK(text.find("\"inferred_milestone\"") != std::string::npos);
  CHECK_FALSE(verification_instruction().empty());
}
