#include "cascade/bench.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace cascade {

AdapterFactory scripted_adapters(MonitorBackend monitors, double grid) {
  return [monitors, grid](const synth::SynthEnvironment& env, std::uint64_t seed) {
    EpisodeAdapters a;
    a.small = std::make_shared<synth::SimPolicy>(Tier::small, seed);
    a.large = std::make_shared<synth::SimPolicy>(Tier::large, seed);
    if (monitors == MonitorBackend::oracle) {
      a.stuck = std::make_shared<OracleStuckMonitor>(env);
      a.milestone = std::make_shared<OracleMilestoneMonitor>(env);
    } else {
      a.stuck = std::make_shared<HeuristicStuckMonitor>(grid);
      a.milestone = std::make_shared<HeuristicMilestoneMonitor>();
    }
    a.verifier = std::make_shared<OracleVerifier>(env);
    return a;
  };
}

PriceTable default_price_table() {
  PriceTable p;
  PriceEntry small;
  small.per_call = Money::from_dollars(0.001);
  small.latency_per_call = 1.0;
  PriceEntry large;
  large.per_call = Money::from_dollars(0.02);
  large.latency_per_call = 6.0;
  p.policies["sim-small"] = small;
  p.policies["sim-large"] = large;
  p.verifier.per_call = Money::from_dollars(0.02);
  p.verifier.latency_per_call = 6.0;
  p.monitor.per_call = Money::from_dollars(0.00004);
  p.monitor.latency_per_call = 0.02;
  return p;
}

std::uint64_t episode_seed(std::uint64_t run_seed, const synth::SuiteEntry& e) { return hash_combine(run_seed, e.seed); }

std::vector<EpisodeRecord> run_suite(const synth::Suite& suite, const RunContext& ctx, const AdapterFactory& adapters,
                                     std::uint64_t seed, int jobs) {
  ctx.config.validate();
  const std::size_t n = suite.entries.size();
  std::vector<EpisodeRecord> out(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;

  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        synth::SynthEnvironment env(suite.task(i));
        const std::uint64_t es = episode_seed(seed, suite.entries[i]);
        EpisodeAdapters a = adapters(env, es);
        out[i] = run_episode(env, {a.small.get(), a.large.get()}, {a.stuck.get(), a.milestone.get()}, a.verifier.get(),
                             ctx, es);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };

  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace cascade
