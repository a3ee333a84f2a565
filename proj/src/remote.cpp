#include "cascade/remote.hpp"

#include <chrono>
#include <cstdlib>

#include "httplib.h"

namespace cascade {

json Endpoint::to_json() const {
  json j{{"url", url}, {"timeout_s", timeout_s}, {"retries", retries}};
  if (!api_key_env.empty()) j["api_key_env"] = api_key_env;
  return j;
}

Endpoint Endpoint::from_json(const json& j) {
  Endpoint e;
  if (j.is_string()) {
    e.url = j.get<std::string>();
  } else {
    e.url = j.at("url").get<std::string>();
    e.timeout_s = j.value("timeout_s", e.timeout_s);
    e.retries = j.value("retries", e.retries);
    e.api_key_env = j.value("api_key_env", std::string{});
  }
  if (e.url.rfind("http://", 0) != 0 && e.url.rfind("https://", 0) != 0)
    throw std::invalid_argument("endpoint url must start with http:// or https://: '" + e.url + "'");
  if (!(e.timeout_s > 0.0)) throw std::invalid_argument("endpoint timeout must be > 0");
  if (e.retries < 0) throw std::invalid_argument("endpoint retries must be >= 0");
  return e;
}

JsonClient::JsonClient(Endpoint ep) : ep_(std::move(ep)) {
  const auto scheme_end = ep_.url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint url has no scheme: '" + ep_.url + "'");
  const auto path_start = ep_.url.find('/', scheme_end + 3);
  origin_ = ep_.url.substr(0, path_start);
  if (path_start != std::string::npos) prefix_ = ep_.url.substr(path_start);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

json JsonClient::post(const std::string& path, const json& body) const {
  const std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= ep_.retries; ++attempt) {
    httplib::Client cli(origin_);
    const auto timeout = std::chrono::duration<double>(ep_.timeout_s);
    const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
    cli.set_connection_timeout(usec);
    cli.set_read_timeout(usec);
    cli.set_write_timeout(usec);
    if (!ep_.api_key_env.empty())
      if (const char* key = std::getenv(ep_.api_key_env.c_str())) cli.set_bearer_token_auth(key);
    auto res = cli.Post(prefix_ + path, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    json parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) throw TransportError(origin_ + prefix_ + path + ": response body is not JSON");
    return parsed;
  }
  throw TransportError(origin_ + prefix_ + path + ": " + last_error);
}

PolicyResponse RemotePolicy::next_step(const PolicyRequest& req) {
  const auto start = std::chrono::steady_clock::now();
  json body;
  try {
    body = client_.post("/act", req.to_json());
  } catch (const TransportError& ex) {
    throw PolicyError(ex.what());
  }
  PolicyResponse r = parse_policy_response(body);
  r.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

json score_request(DetectorKind kind, const std::optional<std::string>& task, const Window& w) {
  if ((kind == DetectorKind::milestone) != task.has_value())
    throw std::invalid_argument("score request: task must be present iff kind is milestone");
  json window = json::array();
  for (const auto& e : w.entries) window.push_back(json{{"rationale", e.rationale}, {"action", to_json(e.action)}});
  json j{{"kind", to_string(kind)}, {"window", std::move(window)}};
  if (task) j["task"] = *task;
  return j;
}

MonitorScore parse_score_response(const json& body) {
  if (!body.is_object()) throw MonitorError("score response is not a JSON object");
  auto it = body.find("score");
  if (it == body.end() || !it->is_number()) throw MonitorError("score response missing number \"score\"");
  const double v = it->get<double>();
  if (!(v >= 0.0 && v <= 1.0)) throw MonitorError("score outside [0,1]: " + format_double(v));
  return MonitorScore::make(v, ScoreSource::remote);
}

MonitorScore RemoteStuckMonitor::score(const Window& w) {
  try {
    return parse_score_response(client_.post("/score", score_request(DetectorKind::stuck, std::nullopt, w)));
  } catch (const TransportError& ex) {
    throw MonitorError(ex.what());
  }
}

MonitorScore RemoteMilestoneMonitor::score(std::string_view instruction, const Window& w) {
  try {
    return parse_score_response(
        client_.post("/score", score_request(DetectorKind::milestone, std::string(instruction), w)));
  } catch (const TransportError& ex) {
    throw MonitorError(ex.what());
  }
}

Verdict RemoteVerifier::verify(const MilestonePacket& p) {
  try {
    return parse_verdict_response(client_.post("/verify", p.to_json()));
  } catch (const TransportError& ex) {
    throw VerifierError(ex.what());
  }
}

std::string RemoteTeacher::complete(const std::string& system, const std::string& prompt, int run_index) {
  const json body = client_.post(
      "/complete", json{{"system", system}, {"prompt", prompt}, {"temperature", temperature_}, {"run_index", run_index}});
  auto it = body.find("text");
  if (it == body.end() || !it->is_string()) throw std::invalid_argument("completion response missing string \"text\"");
  return it->get<std::string>();
}

TeacherRunResult RemoteTeacher::label(const Episode& e, int run_index) {
  TeacherRunResult r;
  r.run_index = run_index;
  const int n = static_cast<int>(e.steps.size());
  const std::string stuck_text = complete(stuck_labeling_instruction(), stuck_labeling_input(e), run_index);
  const std::string mile_text = complete(milestone_labeling_instruction(), milestone_labeling_input(e), run_index);
  r.raw = json{{"stuck", stuck_text}, {"milestone", mile_text}, {"temperature", temperature_}}.dump();
  try {
    r.stuck_steps = parse_stuck_labels(stuck_text, n);
    r.milestone_steps = parse_milestone_labels(mile_text, n);
  } catch (const std::exception& ex) {
    r.flagged = true;
    r.error = ex.what();
  }
  return r;
}

}  // namespace cascade
