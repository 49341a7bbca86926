#include "kwsim/autoscaler.hpp"

#include <algorithm>
#include <numeric>

namespace kwsim {

void ScalerConfig::validate(const std::string& path) const {
  if (interval_ms <= 0) throw ConfigError(path + ".interval_ms", "must be > 0");
  if (stabilization_ms < 0) throw ConfigError(path + ".stabilization_ms", "must be >= 0");
}

std::vector<std::int64_t> desired_replicas(std::span<const PoolMetrics> pools, std::int64_t slots) {
  const std::size_t n = pools.size();
  std::vector<std::int64_t> target(n, 0);
  slots = std::max<std::int64_t>(0, slots);

  std::int64_t total = 0;
  for (const auto& p : pools) total += p.demand();

  if (total <= slots) {
    for (std::size_t i = 0; i < n; ++i) target[i] = pools[i].demand();
  } else {
    std::vector<__int128> remainder(n, 0);
    std::int64_t given = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const __int128 share = static_cast<__int128>(slots) * pools[i].demand();
      target[i] = static_cast<std::int64_t>(share / total);
      remainder[i] = share % total;
      given += target[i];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const bool starved_a = pools[a].demand() > 0 && target[a] == 0;
      const bool starved_b = pools[b].demand() > 0 && target[b] == 0;
      if (starved_a != starved_b) return starved_a;
      return remainder[a] > remainder[b];
    });
    for (std::size_t k = 0; k < n && given < slots; ++k) {
      const auto i = order[k];
      if (pools[i].demand() == 0 || remainder[i] == 0) continue;
      ++target[i];
      ++given;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = pools[i];
    target[i] = std::clamp(target[i], p.min_replicas, std::max(p.min_replicas, p.max_replicas));
  }
  return target;
}

std::int64_t ScaleDownStabilizer::record(TimeMs now, std::int64_t target) {
  history_.emplace_back(now, target);
  while (!history_.empty() && history_.front().first < now - window_ms_) history_.pop_front();
  std::int64_t best = target;
  for (const auto& [t, v] : history_) best = std::max(best, v);
  return best;
}

Autoscaler::Autoscaler(ScalerConfig cfg, std::size_t pool_count) : cfg_(cfg) {
  cfg_.validate();
  stabilizers_.assign(pool_count, ScaleDownStabilizer(cfg_.stabilization_ms));
}

std::vector<ScaleDecision> Autoscaler::decide(TimeMs now, std::span<const PoolMetrics> pools, std::int64_t slots) {
  const auto targets = desired_replicas(pools, slots);
  std::vector<ScaleDecision> out;
  out.reserve(pools.size());
  for (std::size_t i = 0; i < pools.size(); ++i) {
    const auto& p = pools[i];
    ScaleDecision d;
    d.pool = p.pool;
    d.demand = p.demand();
    d.current = p.current_replicas;
    d.target = targets[i];
    d.stabilized = stabilizers_.at(static_cast<std::size_t>(p.pool)).record(now, targets[i]);
    d.scale_down = std::max<std::int64_t>(0, d.current - d.stabilized);
    out.push_back(d);
  }
  return out;
}

std::vector<std::int64_t> grant_scale_up(std::span<const std::int64_t> wanted, std::int64_t free_slots) {
  std::vector<std::int64_t> out(wanted.size(), 0);
  std::int64_t budget = std::max<std::int64_t>(0, free_slots);
  for (std::size_t i = 0; i < wanted.size() && budget > 0; ++i) {
    out[i] = std::clamp<std::int64_t>(wanted[i], 0, budget);
    budget -= out[i];
  }
  return out;
}

}  // namespace kwsim
