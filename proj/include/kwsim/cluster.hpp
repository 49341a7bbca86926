#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "kwsim/common.hpp"

namespace kwsim {

struct Resources {
  std::int64_t cpu_m = 0;
  std::int64_t mem_mb = 0;

  bool fits_in(const Resources& free) const noexcept { return cpu_m <= free.cpu_m && mem_mb <= free.mem_mb; }
  Resources& operator+=(const Resources& o) noexcept { cpu_m += o.cpu_m; mem_mb += o.mem_mb; return *this; }
  Resources& operator-=(const Resources& o) noexcept { cpu_m -= o.cpu_m; mem_mb -= o.mem_mb; return *this; }
  friend Resources operator-(Resources a, const Resources& b) noexcept { return a -= b; }
  bool operator==(const Resources&) const = default;
};

struct NodeSpec {
  std::string id;
  std::int64_t cpu_capacity_m = 4000;
  std::int64_t mem_capacity_mb = 16384;

  Resources capacity() const noexcept { return {cpu_capacity_m, mem_capacity_mb}; }
};

/// Exponential back-off between placement retries of a Pending pod.
struct BackoffPolicy {
  TimeMs initial_ms = 5000;
  double factor = 2.0;
  TimeMs cap_ms = 300000;

  /// min(cap, initial * factor^(attempts-1)); attempts >= 1.
  TimeMs delay(int attempts) const;
  void validate(const std::string& path = "backoff") const;
};

/// API-server admission throughput. rate_per_s == 0 disables the limiter.
struct AdmissionConfig {
  std::int64_t rate_per_s = 20;
  std::int64_t burst = 40;
};

struct ClusterConfig {
  int node_count = 17;
  std::int64_t node_cpu_m = 4000;
  std::int64_t node_mem_mb = 16384;
  BackoffPolicy backoff;
  AdmissionConfig admission;
  TimeMs pod_overhead_ms = 2000;

  std::vector<NodeSpec> nodes() const;
  void validate(const std::string& path = "cluster") const;
};

/// Token bucket with exact integer arithmetic (tokens are tracked in
/// thousandths so refill is `rate_per_s` units per millisecond).
class TokenBucket {
 public:
  explicit TokenBucket(AdmissionConfig cfg);

  /// Time at which the next request arriving at `now` is admitted. Requests
  /// are served in call order, so grant times are non-decreasing.
  TimeMs acquire(TimeMs now);

 private:
  AdmissionConfig cfg_;
  std::int64_t level_;  // thousandths of a token
  TimeMs last_ = 0;
};

struct PodSpec {
  std::string id;
  std::int64_t cpu_request_m = 1000;
  std::int64_t mem_request_mb = 2048;
  TimeMs creation_overhead_ms = 2000;
  std::int64_t payload = 0;    ///< opaque to the cluster
  std::int32_t pool = kNone;   ///< worker-pool owner, kNone for job/batch pods

  Resources requests() const noexcept { return {cpu_request_m, mem_request_mb}; }
};

enum class PodPhase { Submitted, Pending, Creating, Running, Succeeded, Terminated, Unschedulable };

const char* to_string(PodPhase phase) noexcept;

struct PodStatus {
  PodPhase phase = PodPhase::Submitted;
  int attempts = 0;              ///< failed placements so far
  TimeMs eligible_at_ms = 0;     ///< admission time, then back-off expiry
  std::int32_t node = kNone;
  TimeMs running_at_ms = 0;      ///< end of the creation overhead

  bool terminal() const noexcept {
    return phase == PodPhase::Succeeded || phase == PodPhase::Terminated || phase == PodPhase::Unschedulable;
  }
  bool allocated() const noexcept { return phase == PodPhase::Creating || phase == PodPhase::Running; }
};

struct Placement {
  enum class Kind { Placed, Deferred, Unschedulable };
  PodIndex pod = 0;
  Kind kind = Kind::Deferred;
  std::int32_t node = kNone;
  int attempts = 0;
  TimeMs next_eligible_ms = 0;  ///< Deferred only
  TimeMs running_at_ms = 0;     ///< Placed only
};

struct Release {
  std::int32_t node = kNone;
  Resources freed;
  std::vector<Placement> placements;  ///< outcome of the re-scheduling pass
};

/// Requests-based model of the Kubernetes data plane. Single writer; every
/// mutating call takes the current simulated time.
class ClusterState {
 public:
  explicit ClusterState(ClusterConfig cfg);

  const ClusterConfig& config() const noexcept { return cfg_; }
  const std::vector<NodeSpec>& nodes() const noexcept { return nodes_; }

  /// Registers the pod and runs it through the admission limiter. Returns the
  /// pod index; `status(pod).eligible_at_ms` is when it becomes schedulable.
  PodIndex submit_pod(PodSpec spec, TimeMs now);

  /// Places a Submitted or eligible Pending pod, or defers it with back-off.
  /// A deferred pod is retried by schedule_pass once its back-off has elapsed
  /// and some pod has released resources since the failure; a release before
  /// the back-off elapses makes the retry happen at expiry.
  Placement try_place(PodIndex pod, TimeMs now);

  /// Tries every eligible pod (admitted, back-off elapsed) in submission order.
  std::vector<Placement> schedule_pass(TimeMs now);

  /// Creating -> Running once the creation overhead has elapsed.
  void mark_running(PodIndex pod, TimeMs now);

  /// Running -> Succeeded, releases the node share and re-schedules.
  Release complete_pod(PodIndex pod, TimeMs now);

  /// Removes a pod in any non-terminal phase (scale-down). Releases and
  /// re-schedules if it held resources.
  Release terminate_pod(PodIndex pod, TimeMs now);

  TimeMs backoff_delay(int attempts) const { return cfg_.backoff.delay(attempts); }

  const PodSpec& spec(PodIndex pod) const { return specs_.at(pod); }
  const PodStatus& status(PodIndex pod) const { return status_.at(pod); }
  std::size_t pod_count() const noexcept { return specs_.size(); }
  std::optional<PodIndex> find(const std::string& id) const;

  /// Σ allocated cpu / Σ cpu capacity.
  double allocated_fraction() const;
  Resources allocated(std::int32_t node) const { return allocated_.at(static_cast<std::size_t>(node)); }
  Resources total_capacity() const;

  /// Σ over nodes of how many `slot`-sized pods fit in the node's free share.
  /// With `exclude_pools`, worker-pool pods count as free capacity.
  std::int64_t free_slots(const Resources& slot, bool exclude_pools = false) const;

  /// Next time a waiting pod becomes eligible, if any.
  std::optional<TimeMs> next_eligible_time() const;
  std::size_t waiting_count() const noexcept { return waiting_count_; }
  std::size_t in_flight_count() const;

  /// Throws std::logic_error when over-allocation or eligibility-based work
  /// conservation is violated at `now`.
  void check_invariants(TimeMs now) const;

 private:
  void enqueue_waiting(PodIndex pod, TimeMs at);
  void promote_due(TimeMs now);
  Release release(PodIndex pod, TimeMs now);

  ClusterConfig cfg_;
  std::vector<NodeSpec> nodes_;
  std::vector<Resources> allocated_;
  std::vector<Resources> pool_allocated_;
  Resources largest_node_;
  TokenBucket admission_;

  std::vector<PodSpec> specs_;
  std::vector<PodStatus> status_;
  std::unordered_map<std::string, PodIndex> by_id_;

  using Due = std::pair<TimeMs, PodIndex>;
  std::priority_queue<Due, std::vector<Due>, std::greater<>> waiting_;  // lazy deletion
  std::set<PodIndex> eligible_;                                         // FIFO by submission
  std::set<PodIndex> parked_;             // back-off elapsed, no release since the failure
  std::vector<std::uint64_t> failed_at_release_;
  std::uint64_t releases_ = 0;
  std::size_t waiting_count_ = 0;
};

}  // namespace kwsim
