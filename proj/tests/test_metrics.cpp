#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "cascade/bench.hpp"
#include "cascade/metrics.hpp"

using namespace cascade;

namespace {

Step step(int i, Action a, Tier tier = Tier::small) {
  Step s;
  s.index = i;
  s.action = std::move(a);
  s.policy = {tier == Tier::small ? "small" : "large", tier};
  return s;
}

Episode with_actions(const std::vector<Action>& acts) {
  Episode e;
  e.task = {"t", "x", 100, {}};
  for (std::size_t i = 0; i < acts.size(); ++i) e.steps.push_back(step(static_cast<int>(i) + 1, acts[i]));
  return e;
}

EpisodeRecord record_with(int small, int large, int verifier_calls, bool ok) {
  EpisodeRecord r;
  r.episode.task = {"t", "x", 100, {}};
  int i = 0;
  for (int k = 0; k < small; ++k) r.episode.steps.push_back(step(++i, Action::click(0, 0), Tier::small));
  for (int k = 0; k < large; ++k) r.episode.steps.push_back(step(++i, Action::click(0, 0), Tier::large));
  r.verifier_calls = verifier_calls;
  r.episode.outcome = ok ? Outcome::success : Outcome::failure;
  return r;
}

PriceTable spec_prices() {
  PriceTable p;
  p.policies["small"].per_call = Money::from_dollars(0.001);
  p.policies["large"].per_call = Money::from_dollars(0.010);
  p.verifier.per_call = Money::from_dollars(0.010);
  return p;
}

double brute_rep_rate(const Episode& e, int lookback) {
  if (e.steps.size() < 2) return 0.0;
  int hits = 0;
  for (std::size_t i = 1; i < e.steps.size(); ++i) {
    bool hit = false;
    for (std::size_t j = i >= static_cast<std::size_t>(lookback) ? i - lookback : 0; j < i; ++j)
      hit = hit || canonicalize_action(e.steps[i].action).render() == canonicalize_action(e.steps[j].action).render();
    hits += hit;
  }
  return static_cast<double>(hits) / static_cast<double>(e.steps.size() - 1);
}

RunContext default_ctx() {
  RunContext ctx;
  ctx.prices = default_price_table();
  return ctx;
}

}  // namespace

TEST_CASE("repetition rate examples") {
  const auto A = Action::click(100, 100), B = Action::click(300, 100);
  CHECK(action_repetition_rate(with_actions({A, A, A, A})) == 1.0);
  CHECK(action_repetition_rate(with_actions({A, B, A})) == 0.5);
  CHECK(action_repetition_rate(with_actions({A, B, Action::type_text("x"), Action::hotkey("tab")})) == 0.0);
  CHECK(action_repetition_rate(with_actions({A})) == 0.0);
  CHECK(action_repetition_rate(with_actions({})) == 0.0);
  CHECK(action_repetition_rate(with_actions({A, B, B, B, A}), 3) == 0.5);
  CHECK(action_repetition_rate(with_actions({A, B, B, B, A}), 4) == 0.75);
}

TEST_CASE("repetition rate matches brute force") {
  std::mt19937_64 rng(6);
  const std::vector<Action> pool{Action::click(0, 0), Action::click(9, 9), Action::click(40, 0), Action::type_text("a"),
                                 Action::done()};
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Action> acts;
    for (int k = 0, n = static_cast<int>(rng() % 12); k < n; ++k) acts.push_back(pool[rng() % pool.size()]);
    const int lookback = 1 + static_cast<int>(rng() % 4);
    const Episode e = with_actions(acts);
    CHECK(action_repetition_rate(e, lookback) == doctest::Approx(brute_rep_rate(e, lookback)));
  }
}

TEST_CASE("failure signatures") {
  CHECK_THROWS_AS(failure_signatures({}), std::invalid_argument);

  std::vector<Episode> all_ok(3, with_actions({Action::click(0, 0), Action::done()}));
  for (auto& e : all_ok) e.outcome = Outcome::success;
  auto s = failure_signatures(all_ok);
  CHECK_FALSE(s.done_but_failed_rate);
  CHECK_FALSE(s.rep_rate_failed);
  CHECK_FALSE(s.length_ratio());

  const auto A = Action::click(0, 0);
  std::vector<Episode> mix;
  mix.push_back(with_actions({A, Action::click(100, 0), Action::done()}));
  mix.back().outcome = Outcome::success;
  mix.push_back(with_actions({A, A, A, A, A, Action::done()}));
  mix.back().terminal_action = Action::done();
  mix.back().outcome = Outcome::failure;
  mix.push_back(with_actions({A, A, A, A, A, A, A, A, A}));
  mix.back().outcome = Outcome::budget_exhausted;
  s = failure_signatures(mix);
  CHECK(s.succeeded == 1);
  CHECK(s.failed == 2);
  CHECK(*s.avg_steps_success == 3.0);
  CHECK(*s.avg_steps_failed == 7.5);
  CHECK(*s.length_ratio() == 2.5);
  CHECK(*s.done_but_failed_rate == 0.5);
  CHECK(*s.rep_rate_success == 0.0);
  CHECK_FALSE(s.repetition_ratio());
  CHECK(signatures_table(s).find("2.5×") != std::string::npos);
}

TEST_CASE("ratio formatting") {
  CHECK(format_ratio(35.1 / 12.4) == "2.8×");
  CHECK(format_ratio(1.0) == "1.0×");
}

TEST_CASE("cost examples") {
  CHECK(compute_cost(record_with(10, 2, 1, true), spec_prices()) == Money::from_dollars(0.040));
  PriceTable zero;
  zero.policies["small"] = {};
  zero.policies["large"] = {};
  CHECK(compute_cost(record_with(10, 2, 1, true), zero) == Money{});

  PriceEntry tokens;
  tokens.per_1k_prompt_tokens = Money::from_dollars(0.005);
  CHECK(tokens.cost(TokenCounts{2000, 0}) == Money::from_dollars(0.010));
  CHECK(tokens.cost(std::nullopt) == Money{});

  PriceTable missing;
  missing.policies["small"] = {};
  try {
    compute_cost(record_with(1, 1, 0, true), missing);
    FAIL("expected an accounting error");
  } catch (const AccountingError& ex) {
    CHECK(std::string(ex.what()).find("large") != std::string::npos);
  }
}

TEST_CASE("price table json") {
  const PriceTable p = default_price_table();
  const PriceTable back = PriceTable::from_json(p.to_json());
  CHECK(back.to_json() == p.to_json());
  json neg = p.to_json();
  neg["verifier"]["price_per_call"] = -0.01;
  CHECK_THROWS(PriceTable::from_json(neg));
}

TEST_CASE("cascade stats hand count") {
  const std::vector<EpisodeRecord> recs{record_with(5, 0, 0, true), record_with(3, 2, 0, false)};
  const auto r = cascade_stats(recs, "mix");
  CHECK(r.switched == 1);
  CHECK(r.switched_fraction() == 0.5);
  CHECK(r.a1_share() == doctest::Approx(0.8));
  CHECK(r.a2_share() == doctest::Approx(0.2));
  CHECK(r.accuracy() == 0.5);
  CHECK(report_table(std::span(&r, 1)).find("1 (50.0%)") != std::string::npos);

  const std::vector<EpisodeRecord> small{record_with(4, 0, 0, true)};
  const auto s = cascade_stats(small);
  CHECK(s.switched == 0);
  CHECK(s.a2_share() == 0.0);
  const std::vector<EpisodeRecord> large{record_with(0, 4, 0, true)};
  CHECK(cascade_stats(large).a2_share() == 1.0);
}

TEST_CASE("report json round trip") {
  const std::vector<EpisodeRecord> recs{record_with(5, 1, 2, true), record_with(3, 2, 1, false)};
  auto r = cascade_stats(recs, "x");
  r.total_cost = Money::from_micros(12345);
  r.total_latency = 9.5;
  const auto back = RunReport::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
}

TEST_CASE("accounting conservation and share law on simulated runs") {
  const auto suite = synth::make_suite({2, 60, 3, 6, 80, {}});
  for (auto routing : {Routing::cascade, Routing::small_only, Routing::large_only}) {
    RunContext ctx = default_ctx();
    ctx.config.routing = routing;
    const auto recs = run_suite(suite, ctx, scripted_adapters(), 1, 4);
    const auto r = cascade_stats(recs);
    Money sum;
    for (const auto& rec : recs) {
      Money per_record;
      for (const auto& s : rec.episode.steps) per_record += s.cost;
      CHECK(per_record == compute_cost(rec, ctx.prices));
      sum += per_record;
    }
    CHECK(sum == r.total_cost);
    CHECK(r.a1_share() + r.a2_share() == doctest::Approx(1.0));
    CHECK(std::llround(r.cost_per_task() * 1e6 * r.tasks) == r.total_cost.micros());
  }
}

TEST_CASE("frontier sweep") {
  const auto suite = synth::make_suite({4, 60, 3, 6, 80, {}});
  auto runner = [&](double ts, double tm) {
    RunContext ctx = default_ctx();
    ctx.config.theta_s = ts;
    ctx.config.theta_m = tm;
    return cascade_stats(run_suite(suite, ctx, scripted_adapters(), 3, 4), "sweep");
  };

  std::vector<std::pair<double, double>> off{{1.1, 1.1}};
  const auto f_off = sweep_frontier(off, runner);
  RunContext small_ctx = default_ctx();
  small_ctx.config.routing = Routing::small_only;
  auto small = cascade_stats(run_suite(suite, small_ctx, scripted_adapters(), 3, 4), "sweep");
  CHECK(f_off.at(0).report.to_json() == small.to_json());

  std::vector<std::pair<double, double>> eager{{0.0, 1.1}};
  const auto f_eager = sweep_frontier(eager, runner);
  CHECK(f_eager.at(0).report.large_steps == f_eager.at(0).report.steps - f_eager.at(0).report.tasks);

  std::vector<std::pair<double, double>> grid;
  for (double ts : {0.3, 0.5, 0.7})
    for (double tm : {0.3, 0.5, 0.7}) grid.push_back({ts, tm});
  const auto f = sweep_frontier(grid, runner);
  CHECK(f.size() == 9);
  CHECK(std::any_of(f.begin(), f.end(), [](const auto& p) { return p.pareto; }));
  for (std::size_t i = 1; i < f.size(); ++i) CHECK(f[i - 1].report.cost_per_task() <= f[i].report.cost_per_task());
  const std::string csv = frontier_csv(f);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);
  CHECK(csv.rfind("theta_s,theta_m,", 0) == 0);
  CHECK_THROWS(sweep_frontier({}, runner));
}

TEST_CASE("pareto marking matches brute force") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<FrontierPoint> pts(1 + rng() % 8);
    for (auto& p : pts) {
      p.report.tasks = 10;
      p.report.succeeded = static_cast<int>(rng() % 11);
      p.report.total_cost = Money::from_micros(static_cast<std::int64_t>(rng() % 5) * 1000);
    }
    mark_pareto(pts);
    for (const auto& p : pts) {
      bool dominated = false;
      for (const auto& q : pts) {
        const bool geq = q.report.succeeded >= p.report.succeeded && q.report.total_cost <= p.report.total_cost;
        const bool strict = q.report.succeeded > p.report.succeeded || q.report.total_cost < p.report.total_cost;
        dominated = dominated || (geq && strict);
      }
      CHECK(p.pareto == !dominated);
    }
  }
}

TEST_CASE("lowering theta_s never decreases large steps") {
  const auto suite = synth::make_suite({8, 80, 3, 6, 80, {}});
  long prev = -1;
  for (double ts : {1.1, 1.0, 0.9, 0.7, 0.5, 0.3, 0.1, 0.0}) {
    RunContext ctx = default_ctx();
    ctx.config.theta_s = ts;
    const auto r = cascade_stats(run_suite(suite, ctx, scripted_adapters(), 5, 4));
    CHECK(r.large_steps >= prev);
    prev = r.large_steps;
  }
}

TEST_CASE("report tables mirror the column set") {
  const std::vector<EpisodeRecord> recs{record_with(5, 1, 2, true)};
  const auto r = cascade_stats(recs, "cascade");
  const std::string table = report_table(std::span(&r, 1));
  for (const char* col : {"Method", "Lat./Req.", "Cost/Task", "Acc.", "Avg Step", "Switched", "A1 Share", "A2 Share"})
    CHECK(table.find(col) != std::string::npos);
  const std::string csv = report_csv(std::span(&r, 1));
  CHECK(csv.rfind("label,tasks,lat_per_req_s,cost_per_task_usd,accuracy,avg_steps,switched", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}
