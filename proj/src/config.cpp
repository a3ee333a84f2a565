#include "cascade/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace cascade {

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

std::optional<RemotePolicySpec> remote_policy(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  reject_unknown(*it, {"name", "endpoint"}, std::string("adapters.") + key);
  return RemotePolicySpec{it->at("name").get<std::string>(), Endpoint::from_json(it->at("endpoint"))};
}

std::optional<Endpoint> endpoint_for(const json& j, const char* backend_key, const char* endpoint_key) {
  const std::string backend = j.value(backend_key, std::string("oracle"));
  if (backend != "remote") return std::nullopt;
  auto it = j.find(endpoint_key);
  if (it == j.end() || it->is_null())
    throw ConfigError(std::string("adapters.") + backend_key + " is remote but adapters." + endpoint_key + " is missing");
  return Endpoint::from_json(*it);
}

AdapterSpec adapters_from_json(const json& j) {
  reject_unknown(j, {"small_policy", "large_policy", "monitors", "monitor_endpoint", "verifier", "verifier_endpoint",
                     "teacher", "teacher_endpoint", "teacher_temperature", "teacher_noise"},
                 "adapters");
  AdapterSpec a;
  a.small = remote_policy(j, "small_policy");
  a.large = remote_policy(j, "large_policy");
  const std::string monitors = j.value("monitors", std::string("oracle"));
  if (monitors == "oracle") a.monitors = MonitorBackend::oracle;
  else if (monitors == "heuristic") a.monitors = MonitorBackend::heuristic;
  else if (monitors != "remote") throw ConfigError("adapters.monitors must be oracle, heuristic or remote");
  a.monitor_endpoint = endpoint_for(j, "monitors", "monitor_endpoint");
  const std::string verifier = j.value("verifier", std::string("oracle"));
  if (verifier != "oracle" && verifier != "remote") throw ConfigError("adapters.verifier must be oracle or remote");
  a.verifier_endpoint = endpoint_for(j, "verifier", "verifier_endpoint");
  const std::string teacher = j.value("teacher", std::string("oracle"));
  if (teacher != "oracle" && teacher != "remote") throw ConfigError("adapters.teacher must be oracle or remote");
  a.teacher_endpoint = endpoint_for(j, "teacher", "teacher_endpoint");
  a.teacher_temperature = j.value("teacher_temperature", a.teacher_temperature);
  a.teacher_noise = j.value("teacher_noise", a.teacher_noise);
  if (!(a.teacher_noise >= 0.0 && a.teacher_noise <= 1.0)) throw ConfigError("adapters.teacher_noise must be in [0,1]");
  return a;
}

}  // namespace

AppConfig AppConfig::from_json(const json& j) {
  reject_unknown(j, {"seed", "suite", "cascade", "prices", "adapters", "labeling", "simulated_latency"}, "config");
  AppConfig c;
  try {
    c.seed = j.value("seed", std::uint64_t{0});
    if (auto it = j.find("suite"); it != j.end()) c.suite = synth::SuiteSpec::from_json(*it);
    if (auto it = j.find("cascade"); it != j.end()) c.cascade = CascadeConfig::from_json(*it);
    c.prices = j.contains("prices") ? PriceTable::from_json(j.at("prices")) : default_price_table();
    if (auto it = j.find("adapters"); it != j.end()) c.adapters = adapters_from_json(*it);
    if (auto it = j.find("labeling"); it != j.end()) {
      reject_unknown(*it, {"runs", "context_len", "train_fraction"}, "labeling");
      c.labeling.runs = it->value("runs", c.labeling.runs);
      c.labeling.context_len = it->value("context_len", c.labeling.context_len);
      c.labeling.train_fraction = it->value("train_fraction", c.labeling.train_fraction);
      if (c.labeling.runs < 1 || c.labeling.context_len < 0 || !(c.labeling.train_fraction > 0.0 && c.labeling.train_fraction <= 1.0))
        throw ConfigError("labeling: need runs >= 1, context_len >= 0, 0 < train_fraction <= 1");
    }
    c.simulated_latency = j.value("simulated_latency", true);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ConfigError(ex.what());
  }
  c.digest = sha256_hex(j.dump());
  return c;
}

AppConfig AppConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  json j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
  try {
    return from_json(j);
  } catch (const ConfigError& ex) {
    throw ConfigError(path + ": " + ex.what());
  }
}

RunContext AppConfig::run_context() const {
  RunContext ctx;
  ctx.config = cascade;
  ctx.prices = prices;
  ctx.simulated_latency = simulated_latency;
  ctx.config_digest = digest;
  return ctx;
}

AdapterFactory AppConfig::adapter_factory() const {
  AdapterFactory base = scripted_adapters(adapters.monitors, cascade.grid);
  return [base, a = adapters](const synth::SynthEnvironment& env, std::uint64_t seed) {
    EpisodeAdapters out = base(env, seed);
    if (a.small) out.small = std::make_shared<RemotePolicy>(PolicyId{a.small->name, Tier::small}, a.small->endpoint);
    if (a.large) out.large = std::make_shared<RemotePolicy>(PolicyId{a.large->name, Tier::large}, a.large->endpoint);
    if (a.monitor_endpoint) {
      out.stuck = std::make_shared<RemoteStuckMonitor>(*a.monitor_endpoint);
      out.milestone = std::make_shared<RemoteMilestoneMonitor>(*a.monitor_endpoint);
    }
    if (a.verifier_endpoint) out.verifier = std::make_shared<RemoteVerifier>(*a.verifier_endpoint);
    return out;
  };
}

json default_config_json() {
  AppConfig c;
  c.seed = 7;
  return json{{"seed", c.seed},
              {"suite", c.suite.to_json()},
              {"cascade", c.cascade.to_json()},
              {"prices", default_price_table().to_json()},
              {"adapters", {{"monitors", "oracle"}, {"verifier", "oracle"}, {"teacher", "oracle"}, {"teacher_noise", 0.0}}},
              {"labeling",
               {{"runs", c.labeling.runs}, {"context_len", c.labeling.context_len}, {"train_fraction", c.labeling.train_fraction}}},
              {"simulated_latency", true}};
}

}  // namespace cascade
