#include "cascade/policy.hpp"

#include <cmath>

namespace cascade {

json HandoffEntry::to_json() const {
  return json{{"step_index", step_index},
              {"rationale", rationale},
              {"action", cascade::to_json(action.action)},
              {"observation_digest", observation_digest}};
}

std::vector<HandoffEntry> serialize_handoff(std::span<const Step> history, double grid) {
  std::vector<HandoffEntry> out;
  out.reserve(history.size());
  for (const Step& s : history)
    out.push_back({s.index, s.rationale, canonicalize_action(s.action, grid), s.observation_digest});
  return out;
}

json PolicyRequest::to_json() const {
  json transcript_json = json::array();
  for (const auto& e : transcript) transcript_json.push_back(e.to_json());
  return json{{"task", cascade::to_json(task)},
              {"transcript", std::move(transcript_json)},
              {"observation_digest", observation_digest},
              {"screenshot", screenshot ? json(base64_encode(*screenshot)) : json(nullptr)},
              {"step_index", step_index}};
}

PolicyResponse parse_policy_response(const json& body) {
  if (!body.is_object()) throw PolicyError("policy response is not a JSON object");
  auto r = body.find("rationale");
  if (r == body.end() || !r->is_string()) throw PolicyError("policy response missing string \"rationale\"");
  auto a = body.find("action");
  if (a == body.end()) throw PolicyError("policy response missing \"action\"");
  PolicyResponse out;
  out.rationale = r->get<std::string>();
  try {
    out.action = action_from_json(*a);
  } catch (const std::exception& ex) {
    throw PolicyError(std::string("malformed action: ") + ex.what());
  }
  if (auto u = body.find("usage"); u != body.end() && u->is_object()) {
    out.tokens = TokenCounts{u->value("prompt_tokens", std::int64_t{0}), u->value("completion_tokens", std::int64_t{0})};
  }
  return out;
}

LoopingPolicy::LoopingPolicy(PolicyId id, double x, double y, std::uint64_t seed, double grid)
    : id_(std::move(id)), x_(grid * std::floor(x / grid + 0.5)), y_(grid * std::floor(y / grid + 0.5)), seed_(seed),
      grid_(grid) {}

PolicyResponse LoopingPolicy::next_step(const PolicyRequest& req) {
  // Jitter strictly inside the half-open cell around the centre.
  const double span = grid_ / 2.0 - 1.0;
  const std::uint64_t h = hash_combine(seed_, static_cast<std::uint64_t>(req.step_index));
  const double jx = std::round((to_unit(h) * 2.0 - 1.0) * span);
  const double jy = std::round((to_unit(mix64(h)) * 2.0 - 1.0) * span);
  return {"The button did not respond; clicking it again.", Action::click(x_ + jx, y_ + jy), 0.0, std::nullopt};
}

}  // namespace cascade
