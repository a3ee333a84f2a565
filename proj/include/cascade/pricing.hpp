#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "cascade/trace.hpp"

namespace cascade {

struct PriceEntry {
  Money per_call;
  Money per_1k_prompt_tokens;
  Money per_1k_completion_tokens;
  double latency_per_call = 0.0;  // simulated seconds

  // Per-call price plus token-rated prices, each rounded half-up to the micro-dollar.
  Money cost(const std::optional<TokenCounts>& tokens = std::nullopt) const;

  json to_json() const;
  static PriceEntry from_json(const json& j);
};

class AccountingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PriceTable {
  std::map<std::string, PriceEntry> policies;  // keyed by policy name
  PriceEntry verifier;
  PriceEntry monitor;  // one call of either monitor

  // Throws AccountingError naming the policy when no entry exists.
  const PriceEntry& policy(const PolicyId& id) const;

  json to_json() const;
  // Throws std::invalid_argument on negative prices.
  static PriceTable from_json(const json& j);
};

}  // namespace cascade
