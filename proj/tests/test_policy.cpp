#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "cascade/policy.hpp"
#include "cascade/synth_env.hpp"
#include "support.hpp"

using namespace cascade;

namespace {

std::vector<Step> history(int n) {
  std::vector<Step> out;
  for (int i = 1; i <= n; ++i) {
    Step s;
    s.index = i;
    s.rationale = "step " + std::to_string(i) + " because";
    s.action = Action::click(103 + i, 58);
    s.policy = {"sim-small", Tier::small};
    s.observation_digest = "d" + std::to_string(i);
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("always-done policy") {
  AlwaysDonePolicy p({"scripted", Tier::small});
  const auto r = p.next_step(PolicyRequest{});
  CHECK(r.rationale == "finish");
  CHECK(r.action == Action::done());
}

TEST_CASE("looping policy repeats the same canonical action") {
  LoopingPolicy p({"loop", Tier::small}, 205, 98, 3);
  PolicyRequest req;
  std::optional<CanonicalAction> prev;
  std::set<std::string> raw;
  for (int t = 1; t <= 30; ++t) {
    req.step_index = t;
    const auto a = p.next_step(req).action;
    raw.insert(render(a));
    const auto c = canonicalize_action(a);
    if (prev) CHECK(c == *prev);
    prev = c;
  }
  CHECK(raw.size() > 1);
}

TEST_CASE("handoff examples") {
  const auto h = history(2);
  const auto entries = serialize_handoff(h);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].step_index == 1);
  CHECK(entries[1].step_index == 2);
  CHECK(serialize_handoff({}).empty());
  for (const auto& e : entries) CHECK(e.render() == e.render());
  CHECK(entries[0].action.action == Action::click(100, 60));
  CHECK(entries[0].render() ==
        R"({"action":{"args":{"x":100.0,"y":60.0},"kind":"click"},"observation_digest":"d1","rationale":"step 1 because","step_index":1})");
}

TEST_CASE("handoff completeness on random histories") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    const Episode e = testsupport::random_episode(rng);
    const auto entries = serialize_handoff(e.steps);
    REQUIRE(entries.size() == e.steps.size());
    for (std::size_t k = 0; k < entries.size(); ++k) {
      CHECK(entries[k].step_index == e.steps[k].index);
      CHECK(entries[k].rationale == e.steps[k].rationale);
      CHECK(entries[k].observation_digest == e.steps[k].observation_digest);
      CHECK(entries[k].action == canonicalize_action(e.steps[k].action));
      if (k > 0) CHECK(entries[k - 1].step_index < entries[k].step_index);
    }
    const auto again = serialize_handoff(e.steps);
    for (std::size_t k = 0; k < entries.size(); ++k) CHECK(again[k].render() == entries[k].render());
  }
}

TEST_CASE("policy request wire form") {
  PolicyRequest req;
  req.task = {"t", "do", 5, {}};
  req.transcript = serialize_handoff(history(1));
  req.observation_digest = "obs";
  req.screenshot = std::string("\x89PNG", 4);
  req.step_index = 2;
  const json j = req.to_json();
  CHECK(j.at("screenshot") == base64_encode(std::string("\x89PNG", 4)));
  CHECK(j.at("transcript").size() == 1);
  CHECK(j.at("step_index") == 2);
  req.screenshot.reset();
  CHECK(req.to_json().at("screenshot").is_null());
}

TEST_CASE("policy response parsing") {
  const auto r = parse_policy_response(json::parse(R"({"rationale":"go","action":{"kind":"click","args":{"x":1,"y":2}}})"));
  CHECK(r.action == Action::click(1, 2));
  CHECK_THROWS_AS(parse_policy_response(json::parse(R"({"rationale":"go"})")), PolicyError);
  CHECK_THROWS_AS(parse_policy_response(json::parse(R"({"action":{"kind":"done"}})")), PolicyError);
  CHECK_THROWS_AS(parse_policy_response(json::parse(R"({"rationale":"x","action":{"kind":"done","args":{"a":1}}})")),
                  PolicyError);
  CHECK_THROWS_AS(parse_policy_response(json::array()), PolicyError);
  const auto u = parse_policy_response(
      json::parse(R"({"rationale":"go","action":{"kind":"done"},"usage":{"prompt_tokens":12,"completion_tokens":3}})"));
  REQUIRE(u.tokens);
  CHECK(u.tokens->prompt == 12);
  CHECK(u.tokens->completion == 3);
}

TEST_CASE("scripted policies are pure functions of the request") {
  const auto task = synth::generate_task(42, 4, {});
  synth::SynthEnvironment env(task);
  synth::SimPolicy a(Tier::small, 9), b(Tier::small, 9);
  PolicyRequest req;
  req.task = task.task;
  for (int t = 1; t <= 20; ++t) {
    req.step_index = t;
    req.observation_digest = env.observe().digest;
    const auto ra = a.next_step(req);
    const auto rb = b.next_step(req);
    CHECK(ra.action == rb.action);
    CHECK(ra.rationale == rb.rationale);
    CHECK(a.next_step(req).action == ra.action);
    if (ra.action.terminal()) break;
    env.execute(ra.action, Tier::small);
  }
}

TEST_CASE("sim policy needs plan metadata") {
  synth::SimPolicy p(Tier::small, 1);
  PolicyRequest req;
  req.task = {"t", "x", 3, {}};
  CHECK_THROWS_AS(p.next_step(req), PolicyError);
}
