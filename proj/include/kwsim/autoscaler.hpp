#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kwsim/common.hpp"

namespace kwsim {

struct PoolMetrics {
  std::int32_t pool = 0;
  std::int64_t queue_length = 0;
  std::int64_t busy_workers = 0;
  std::int64_t current_replicas = 0;
  std::int64_t min_replicas = 0;
  std::int64_t max_replicas = std::numeric_limits<std::int32_t>::max();

  std::int64_t demand() const noexcept { return queue_length + busy_workers; }
};

struct ScalerConfig {
  TimeMs interval_ms = 15000;
  TimeMs stabilization_ms = 60000;

  void validate(const std::string& path = "scaler") const;
  bool operator==(const ScalerConfig&) const = default;
};

/// Replica targets from queue-length demand d = queue + busy.
///
/// If total demand fits in `slots`, every pool gets its demand. Otherwise the
/// slots are apportioned by largest remainder: floor(slots * d / Σd) each, and
/// the leftover slots go first to demanded pools that got nothing, then by
/// largest fractional remainder (ties by pool order). Zero demand gives zero
/// replicas. Targets are finally clamped to [min, max]. A target below the
/// busy count is allowed: the surplus busy workers drain after their task.
std::vector<std::int64_t> desired_replicas(std::span<const PoolMetrics> pools, std::int64_t slots);

/// HPA-style scale-down stabilization: the effective target is the highest
/// recommendation seen within the trailing window, so a pool only shrinks
/// after its target stayed lower for the whole window.
class ScaleDownStabilizer {
 public:
  explicit ScaleDownStabilizer(TimeMs window_ms) : window_ms_(window_ms) {}

  /// Records `target` at `now` and returns the stabilized target.
  std::int64_t record(TimeMs now, std::int64_t target);

 private:
  TimeMs window_ms_;
  std::deque<std::pair<TimeMs, std::int64_t>> history_;
};

struct ScaleDecision {
  std::int32_t pool = 0;
  std::int64_t demand = 0;
  std::int64_t current = 0;
  std::int64_t target = 0;      ///< proportional recommendation this tick
  std::int64_t stabilized = 0;  ///< max recommendation over the window
  std::int64_t scale_down = 0;  ///< replicas to remove now
};

/// Per-pool scaling state across ticks.
class Autoscaler {
 public:
  Autoscaler(ScalerConfig cfg, std::size_t pool_count);

  const ScalerConfig& config() const noexcept { return cfg_; }

  /// Computes targets and the scale-down each pool should perform now.
  std::vector<ScaleDecision> decide(TimeMs now, std::span<const PoolMetrics> pools, std::int64_t slots);

 private:
  ScalerConfig cfg_;
  std::vector<ScaleDownStabilizer> stabilizers_;
};

/// Splits `free_slots` among pools wanting `wanted[i]` more replicas, in pool
/// order, so new worker pods never exceed the free capacity.
std::vector<std::int64_t> grant_scale_up(std::span<const std::int64_t> wanted, std::int64_t free_slots);

}  // namespace kwsim
