#pragma once

#include <stdexcept>
#include <string>

#include "cascade/label.hpp"
#include "cascade/monitor.hpp"
#include "cascade/policy.hpp"
#include "cascade/verifier.hpp"

namespace cascade {

struct Endpoint {
  std::string url;  // scheme://host[:port][/prefix]
  double timeout_s = 30.0;
  int retries = 1;  // extra attempts after a transport failure
  // Name of an environment variable holding a bearer token, if any.
  std::string api_key_env;

  json to_json() const;
  static Endpoint from_json(const json& j);
};

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// POSTs JSON and returns the parsed JSON body. Transport failures and non-2xx
// statuses are retried; a body that is not JSON is not.
class JsonClient {
 public:
  explicit JsonClient(Endpoint ep);
  json post(const std::string& path, const json& body) const;
  const Endpoint& endpoint() const { return ep_; }

 private:
  Endpoint ep_;
  std::string origin_;
  std::string prefix_;
};

// POST /act
class RemotePolicy final : public Policy {
 public:
  RemotePolicy(PolicyId id, Endpoint ep) : id_(std::move(id)), client_(std::move(ep)) {}
  PolicyId id() const override { return id_; }
  PolicyResponse next_step(const PolicyRequest& req) override;

 private:
  PolicyId id_;
  JsonClient client_;
};

json score_request(DetectorKind kind, const std::optional<std::string>& task, const Window& w);
// Throws MonitorError unless the body is {"score": number in [0,1]}.
MonitorScore parse_score_response(const json& body);

// POST /score
class RemoteStuckMonitor final : public StuckMonitor {
 public:
  explicit RemoteStuckMonitor(Endpoint ep) : client_(std::move(ep)) {}
  MonitorScore score(const Window& w) override;

 private:
  JsonClient client_;
};

class RemoteMilestoneMonitor final : public MilestoneMonitor {
 public:
  explicit RemoteMilestoneMonitor(Endpoint ep) : client_(std::move(ep)) {}
  MonitorScore score(std::string_view instruction, const Window& w) override;

 private:
  JsonClient client_;
};

// POST /verify
class RemoteVerifier final : public Verifier {
 public:
  explicit RemoteVerifier(Endpoint ep) : client_(std::move(ep)) {}
  Verdict verify(const MilestonePacket& p) override;

 private:
  JsonClient client_;
};

// POST /complete {"system", "prompt", "temperature", "run_index"} -> {"text"}.
// Each run asks for both label kinds; a schema violation in either response
// flags the run.
class RemoteTeacher final : public Teacher {
 public:
  RemoteTeacher(Endpoint ep, double temperature = 0.7) : client_(std::move(ep)), temperature_(temperature) {}
  TeacherRunResult label(const Episode& e, int run_index) override;

 private:
  std::string complete(const std::string& system, const std::string& prompt, int run_index);
  JsonClient client_;
  double temperature_;
};

}  // namespace cascade
