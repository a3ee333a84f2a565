#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "cascade/controller.hpp"
#include "cascade/synth_env.hpp"

namespace cascade {

// Adapters owned by one episode. Oracle adapters hold a reference to that
// episode's environment, so they are never shared.
struct EpisodeAdapters {
  std::shared_ptr<Policy> small;
  std::shared_ptr<Policy> large;
  std::shared_ptr<StuckMonitor> stuck;
  std::shared_ptr<MilestoneMonitor> milestone;
  std::shared_ptr<Verifier> verifier;
};

using AdapterFactory = std::function<EpisodeAdapters(const synth::SynthEnvironment& env, std::uint64_t episode_seed)>;

enum class MonitorBackend { oracle, heuristic };

// Scripted policies plus oracle verifier; monitors per `monitors`.
AdapterFactory scripted_adapters(MonitorBackend monitors = MonitorBackend::oracle, double grid = kDefaultGrid);

// Price table matching the scripted policy names.
PriceTable default_price_table();

std::uint64_t episode_seed(std::uint64_t run_seed, const synth::SuiteEntry& e);

// Runs every task of the suite; records come back in suite order regardless
// of `jobs`.
std::vector<EpisodeRecord> run_suite(const synth::Suite& suite, const RunContext& ctx, const AdapterFactory& adapters,
                                     std::uint64_t seed, int jobs = 1);

}  // namespace cascade
