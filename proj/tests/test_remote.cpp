#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>

#include "httplib.h"

#include "cascade/remote.hpp"

using namespace cascade;

namespace {

// In-process stub of the remote services on an ephemeral loopback port.
class StubServer {
 public:
  using Handler = std::function<void(const json& body, const httplib::Request&, httplib::Response&)>;

  StubServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    for (const char* path : {"/act", "/score", "/verify", "/complete", "/prefix/score"}) {
      server_.Post(path, [this, p = std::string(path)](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        std::lock_guard lock(mu_);
        last_path = p;
        last_auth = req.get_header_value("Authorization");
        json body = json::parse(req.body, nullptr, false);
        last_body = body;
        if (handler_) handler_(body, req, res);
      });
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  void on(Handler h) {
    std::lock_guard lock(mu_);
    handler_ = std::move(h);
    hits = 0;
  }
  Endpoint endpoint(int retries = 0, std::string suffix = {}) const {
    Endpoint e;
    e.url = "http://127.0.0.1:" + std::to_string(port_) + suffix;
    e.timeout_s = 5;
    e.retries = retries;
    return e;
  }

  std::atomic<int> hits{0};
  json last_body;
  std::string last_path;
  std::string last_auth;

 private:
  httplib::Server server_;
  std::thread thread_;
  std::mutex mu_;
  Handler handler_;
  int port_ = 0;
};

void reply(httplib::Response& res, const json& j) { res.set_content(j.dump(), "application/json"); }

Window window_of(int n) {
  Window w;
  for (int i = 0; i < n; ++i) w.entries.push_back({"r" + std::to_string(i), Action::click(20.0 * i, 0)});
  w.end_index = n;
  return w;
}

Episode episode_with(int n) {
  Episode e;
  e.task = {"remote-task", "rename the folder", 20, {}};
  for (int i = 1; i <= n; ++i) {
    Step s;
    s.index = i;
    s.rationale = "r" + std::to_string(i);
    s.action = Action::click(20.0 * i, 0);
    s.observation_digest = "d" + std::to_string(i);
    e.steps.push_back(s);
  }
  return e;
}

StubServer& stub() {
  static StubServer s;
  return s;
}

}  // namespace

TEST_CASE("endpoint config") {
  CHECK(Endpoint::from_json("http://localhost:8000").retries == 1);
  const auto e = Endpoint::from_json(json{{"url", "https://x/api"}, {"timeout_s", 2}, {"retries", 3}, {"api_key_env", "K"}});
  CHECK(e.retries == 3);
  CHECK(Endpoint::from_json(e.to_json()).to_json() == e.to_json());
  CHECK_THROWS(Endpoint::from_json("localhost:8000"));
  CHECK_THROWS(Endpoint::from_json(json{{"url", "http://x"}, {"timeout_s", 0}}));
  CHECK_THROWS(Endpoint::from_json(json{{"url", "http://x"}, {"retries", -1}}));
}

TEST_CASE("policy protocol") {
  auto& s = stub();
  s.on([](const json&, const httplib::Request&, httplib::Response& res) {
    reply(res, {{"rationale", "open it"}, {"action", {{"kind", "click"}, {"args", {{"x", 5}, {"y", 6}}}}}});
  });
  RemotePolicy p({"remote-small", Tier::small}, s.endpoint());
  PolicyRequest req;
  req.task = {"t", "do", 5, {}};
  req.observation_digest = "obs";
  req.screenshot = std::string("\x01\x02\xff", 3);
  req.step_index = 4;
  const auto r = p.next_step(req);
  CHECK(r.rationale == "open it");
  CHECK(r.action == Action::click(5, 6));
  CHECK(r.latency > 0.0);
  CHECK(s.last_path == "/act");
  CHECK(s.last_body.at("step_index") == 4);
  CHECK(s.last_body.at("screenshot") == base64_encode(std::string("\x01\x02\xff", 3)));
  CHECK(s.last_body.at("task").at("instruction") == "do");

  s.on([](const json&, const httplib::Request&, httplib::Response& res) { reply(res, {{"rationale", "x"}}); });
  CHECK_THROWS_AS(p.next_step(req), PolicyError);
  s.on([](const json&, const httplib::Request&, httplib::Response& res) { res.status = 503; });
  CHECK_THROWS_AS(p.next_step(req), PolicyError);
}

TEST_CASE("score protocol") {
  auto& s = stub();
  s.on([](const json& body, const httplib::Request&, httplib::Response& res) {
    if (body.at("kind") == "milestone" && !body.contains("task")) {
      res.status = 400;
      return;
    }
    reply(res, {{"score", 0.37}});
  });
  RemoteStuckMonitor stuck(s.endpoint());
  RemoteMilestoneMonitor mile(s.endpoint());
  const auto sc = stuck.score(window_of(6));
  CHECK(sc.value == 0.37);
  CHECK(sc.source == ScoreSource::remote);
  CHECK(s.last_body.at("kind") == "stuck");
  CHECK_FALSE(s.last_body.contains("task"));
  CHECK(s.last_body.at("window").size() == 6);
  CHECK(s.last_body.at("window")[0].at("rationale") == "r0");
  CHECK(mile.score("open the file", window_of(2)).value == 0.37);
  CHECK(s.last_body.at("task") == "open the file");
  CHECK_THROWS(score_request(DetectorKind::milestone, std::nullopt, window_of(1)));
  CHECK_THROWS(score_request(DetectorKind::stuck, std::string("x"), window_of(1)));

  s.on([](const json&, const httplib::Request&, httplib::Response& res) { reply(res, {{"score", 1.5}}); });
  CHECK_THROWS_AS(stuck.score(window_of(2)), MonitorError);
  s.on([](const json&, const httplib::Request&, httplib::Response& res) { reply(res, {{"value", 0.5}}); });
  CHECK_THROWS_AS(stuck.score(window_of(2)), MonitorError);
}

TEST_CASE("url prefix is kept") {
  auto& s = stub();
  s.on([](const json&, const httplib::Request&, httplib::Response& res) { reply(res, {{"score", 0.0}}); });
  RemoteStuckMonitor m(s.endpoint(0, "/prefix/"));
  CHECK(m.score(window_of(1)).value == 0.0);
  CHECK(s.last_path == "/prefix/score");
}

TEST_CASE("retries") {
  auto& s = stub();
  std::atomic<int> calls{0};
  s.on([&](const json&, const httplib::Request&, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 500;
      return;
    }
    reply(res, {{"score", 0.9}});
  });
  RemoteStuckMonitor retrying(s.endpoint(1));
  CHECK(retrying.score(window_of(1)).value == 0.9);
  CHECK(s.hits == 2);

  calls = 0;
  s.on([&](const json&, const httplib::Request&, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 500;
      return;
    }
    reply(res, {{"score", 0.9}});
  });
  RemoteStuckMonitor once(s.endpoint(0));
  CHECK_THROWS_AS(once.score(window_of(1)), MonitorError);
  CHECK(s.hits == 1);

  s.on([](const json&, const httplib::Request&, httplib::Response& res) { res.set_content("not json", "text/plain"); });
  RemoteStuckMonitor garbled(s.endpoint(3));
  CHECK_THROWS_AS(garbled.score(window_of(1)), MonitorError);
  CHECK(s.hits == 1);
}

TEST_CASE("unreachable endpoint") {
  Endpoint dead;
  dead.url = "http://127.0.0.1:1";
  dead.timeout_s = 1;
  dead.retries = 0;
  RemoteStuckMonitor m(dead);
  CHECK_THROWS_AS(m.score(window_of(1)), MonitorError);
  RemoteVerifier v(dead);
  MilestonePacket p;
  CHECK_THROWS_AS(v.verify(p), VerifierError);
}

TEST_CASE("bearer token from the environment") {
  auto& s = stub();
  s.on([](const json&, const httplib::Request&, httplib::Response& res) { reply(res, {{"score", 0.1}}); });
  ::setenv("CASCADE_TEST_TOKEN", "sekret", 1);
  Endpoint e = s.endpoint();
  e.api_key_env = "CASCADE_TEST_TOKEN";
  RemoteStuckMonitor m(e);
  m.score(window_of(1));
  CHECK(s.last_auth == "Bearer sekret");
}

TEST_CASE("verify protocol") {
  auto& s = stub();
  s.on([](const json&, const httplib::Request&, httplib::Response& res) {
    reply(res, {{"inferred_milestone", "opened settings"}, {"success", true}, {"reasoning", "matches"}});
  });
  const Episode e = episode_with(5);
  EvidenceStore ev;
  ev.put(2, Evidence::digest("before"));
  const auto packet = build_milestone_packet(e, e.task, 2, 5, ev);
  RemoteVerifier v(s.endpoint());
  const auto verdict = v.verify(packet);
  CHECK(verdict.success);
  CHECK(verdict.progress_valid);
  CHECK(verdict.intent_consistent);
  CHECK(verdict.inferred_milestone == "opened settings");
  CHECK(s.last_path == "/verify");
  CHECK(s.last_body.at("task") == "rename the folder");
  CHECK(s.last_body.at("trace").size() == 3);
  CHECK(s.last_body.at("before") == json{{"kind", "digest"}, {"data", "before"}});
  CHECK(s.last_body.at("after") == json{{"kind", "digest"}, {"data", "d5"}});

  s.on([](const json&, const httplib::Request&, httplib::Response& res) { reply(res, {{"success", "yes"}}); });
  CHECK_THROWS_AS(v.verify(packet), VerifierError);
}

TEST_CASE("teacher protocol") {
  auto& s = stub();
  std::vector<json> seen;
  std::mutex mu;
  s.on([&](const json& body, const httplib::Request&, httplib::Response& res) {
    {
      std::lock_guard lock(mu);
      seen.push_back(body);
    }
    const std::string system = body.at("system");
    if (system.find("stuck") != std::string::npos && system.find("milestone steps") == std::string::npos)
      reply(res, {{"text", R"({"is_stuck": true, "stuck_steps": [2], "reasons": ["r"], "severity": "low", "summary": "s"})"}});
    else
      reply(res, {{"text", "```json\n{\"milestones\": [{\"step\": 4, \"reasoning\": \"done\"}]}\n```"}});
  });
  RemoteTeacher t(s.endpoint(), 0.7);
  const auto r = t.label(episode_with(4), 3);
  CHECK_FALSE(r.flagged);
  CHECK(r.stuck_steps == std::set<int>{2});
  CHECK(r.milestone_steps == std::set<int>{4});
  REQUIRE(seen.size() == 2);
  CHECK(seen[0].at("run_index") == 3);
  CHECK(seen[0].at("temperature") == 0.7);
  CHECK(seen[0].at("prompt").get<std::string>().find("Step 1: r1") != std::string::npos);

  s.on([](const json&, const httplib::Request&, httplib::Response& res) {
    reply(res, {{"text", "The agent seems fine overall."}});
  });
  const auto bad = t.label(episode_with(4), 0);
  CHECK(bad.flagged);
  const auto runs = run_teacher(t, episode_with(4));
  CHECK(runs.size() == 5);
  for (const auto& run : runs) {
    CHECK(run.flagged);
    CHECK(run.stuck_steps.empty());
  }
}
