#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "cascade/bench.hpp"
#include "cascade/controller.hpp"
#include "cascade/pricing.hpp"
#include "cascade/remote.hpp"
#include "cascade/synth_env.hpp"

namespace cascade {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RemotePolicySpec {
  std::string name;
  Endpoint endpoint;
};

// Which backend serves each role. Unset endpoints mean the scripted or oracle
// implementation.
struct AdapterSpec {
  std::optional<RemotePolicySpec> small;
  std::optional<RemotePolicySpec> large;
  MonitorBackend monitors = MonitorBackend::oracle;
  std::optional<Endpoint> monitor_endpoint;
  std::optional<Endpoint> verifier_endpoint;
  std::optional<Endpoint> teacher_endpoint;
  double teacher_temperature = 0.7;
  double teacher_noise = 0.0;  // oracle teacher label-flip probability
};

struct LabelingSpec {
  int runs = kDefaultTeacherRuns;
  int context_len = kDefaultContextLength;
  double train_fraction = 0.8;
};

struct AppConfig {
  std::uint64_t seed = 0;
  synth::SuiteSpec suite;
  CascadeConfig cascade;
  PriceTable prices;
  AdapterSpec adapters;
  LabelingSpec labeling;
  bool simulated_latency = true;
  std::string digest;  // SHA-256 of the normalized document

  static AppConfig from_json(const json& j);
  // Throws ConfigError with the file name on unreadable or invalid input.
  static AppConfig load(const std::string& path);

  RunContext run_context() const;
  AdapterFactory adapter_factory() const;
};

// Compiled-in defaults, identical to configs/default.json.
json default_config_json();

}  // namespace cascade
