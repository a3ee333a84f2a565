#include "cascade/pricing.hpp"

namespace cascade {

namespace {

Money token_cost(Money per_1k, std::int64_t tokens) {
  return Money::from_micros((per_1k.micros() * tokens + 500) / 1000);
}

Money price_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  const double v = it->get<double>();
  if (!(v >= 0.0)) throw std::invalid_argument(std::string("price '") + key + "' must be >= 0");
  return Money::from_dollars(v);
}

}  // namespace

Money PriceEntry::cost(const std::optional<TokenCounts>& tokens) const {
  Money total = per_call;
  if (tokens) {
    total += token_cost(per_1k_prompt_tokens, tokens->prompt);
    total += token_cost(per_1k_completion_tokens, tokens->completion);
  }
  return total;
}

json PriceEntry::to_json() const {
  return json{{"price_per_call", per_call.dollars()},
              {"price_per_1k_prompt_tokens", per_1k_prompt_tokens.dollars()},
              {"price_per_1k_completion_tokens", per_1k_completion_tokens.dollars()},
              {"latency_per_call", latency_per_call}};
}

PriceEntry PriceEntry::from_json(const json& j) {
  PriceEntry e;
  e.per_call = price_field(j, "price_per_call");
  e.per_1k_prompt_tokens = price_field(j, "price_per_1k_prompt_tokens");
  e.per_1k_completion_tokens = price_field(j, "price_per_1k_completion_tokens");
  e.latency_per_call = j.value("latency_per_call", 0.0);
  if (!(e.latency_per_call >= 0.0)) throw std::invalid_argument("latency_per_call must be >= 0");
  return e;
}

const PriceEntry& PriceTable::policy(const PolicyId& id) const {
  auto it = policies.find(id.name);
  if (it == policies.end()) throw AccountingError("no price entry for policy '" + id.name + "'");
  return it->second;
}

json PriceTable::to_json() const {
  json p = json::object();
  for (const auto& [name, entry] : policies) p[name] = entry.to_json();
  return json{{"policies", std::move(p)}, {"verifier", verifier.to_json()}, {"monitor", monitor.to_json()}};
}

PriceTable PriceTable::from_json(const json& j) {
  PriceTable t;
  if (auto it = j.find("policies"); it != j.end())
    for (const auto& [name, entry] : it->items()) t.policies.emplace(name, PriceEntry::from_json(entry));
  if (auto it = j.find("verifier"); it != j.end()) t.verifier = PriceEntry::from_json(*it);
  if (auto it = j.find("monitor"); it != j.end()) t.monitor = PriceEntry::from_json(*it);
  return t;
}

}  // namespace cascade
