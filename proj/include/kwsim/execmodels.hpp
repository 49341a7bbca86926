#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kwsim/common.hpp"

namespace kwsim {

enum class ExecutionMode { Job, ClusteredJob, WorkerPool };

const char* to_string(ExecutionMode mode) noexcept;
ExecutionMode parse_execution_mode(std::string_view text, const std::string& path);

/// Horizontal clustering rule, same shape as HyperFlow's config:
/// {"matchTask": [...], "size": 5, "timeoutMs": 3000}.
struct ClusteringRule {
  std::vector<std::string> match_task;
  int size = 1;
  TimeMs timeout_ms = 0;

  bool matches(std::string_view type) const;
  bool operator==(const ClusteringRule&) const = default;
};

nlohmann::json clustering_rules_to_json(std::span<const ClusteringRule> rules);
std::vector<ClusteringRule> parse_clustering_rules(const nlohmann::json& doc, const std::string& path);

/// A per-task-type deployment of worker pods.
struct PoolSpec {
  std::string task_type;
  std::int64_t cpu_m = 1000;
  std::int64_t mem_mb = 2048;
  std::optional<TimeMs> creation_overhead_ms;  ///< defaults to the cluster's pod overhead
  std::int64_t min_replicas = 0;
  std::int64_t max_replicas = std::numeric_limits<std::int32_t>::max();

  bool operator==(const PoolSpec&) const = default;
};

struct ExecutionModelConfig {
  std::optional<ExecutionMode> default_mode = ExecutionMode::Job;
  std::map<std::string, ExecutionMode> modes;  ///< explicit per-type overrides
  std::vector<ClusteringRule> clustering;
  std::vector<PoolSpec> pools;
  TimeMs dequeue_latency_ms = 0;

  struct Resolved {
    ExecutionMode mode = ExecutionMode::Job;
    std::int32_t rule = kNone;
    std::int32_t pool = kNone;
  };

  /// Explicit mode, else a pool for the type, else a matching clustering
  /// rule, else the default. Throws ConfigError if nothing resolves.
  Resolved resolve(std::string_view task_type) const;

  /// Checks the rules/pools themselves and that every type in `task_types` resolves.
  void validate(std::span<const std::string> task_types, const std::string& path = "model") const;

  bool operator==(const ExecutionModelConfig&) const = default;
};

/// What the engine must do with a task that just became ready.
struct DispatchAction {
  ExecutionMode mode = ExecutionMode::Job;
  TaskIndex task = 0;
  std::int32_t rule = kNone;  ///< ClusteredJob: buffer to append to
  std::int32_t pool = kNone;  ///< WorkerPool: queue to push onto
};

DispatchAction dispatch_ready(TaskIndex task, std::string_view task_type, const ExecutionModelConfig& model);

/// Homogeneous group of tasks executed back to back in one pod.
struct Batch {
  std::vector<TaskIndex> tasks;
  std::string task_type;
  TimeMs formation_time_ms = 0;
};

/// Open buffer for one (rule, task type). Emits a full batch as soon as
/// `size` tasks are buffered and a partial one `timeout_ms` after the first
/// arrival into an empty buffer.
class BatchBuffer {
 public:
  BatchBuffer(ClusteringRule rule, std::string task_type);

  struct Arrival {
    std::optional<Batch> emitted;
    std::optional<TimeMs> arm_timeout_at;  ///< set when this arrival opened the buffer
    std::uint64_t generation = 0;
  };

  Arrival push(TaskIndex task, TimeMs now);

  /// Emits the partial batch if `generation` still identifies the open buffer.
  std::optional<Batch> on_timeout(std::uint64_t generation, TimeMs now);

  std::size_t size() const noexcept { return pending_.size(); }
  const ClusteringRule& rule() const noexcept { return rule_; }

 private:
  Batch take(TimeMs now);

  ClusteringRule rule_;
  std::string task_type_;
  std::vector<TaskIndex> pending_;
  std::uint64_t generation_ = 0;
};

/// Completion offsets of a sequential batch relative to pod start:
/// task k finishes at sum of runtimes[0..k].
std::vector<TimeMs> batch_completion_offsets(std::span<const TimeMs> runtimes);

/// Queue and worker bookkeeping of one worker pool. Workers are identified by
/// their pod index; pure state machine, the engine drives time.
class WorkerPool {
 public:
  enum class WorkerPhase { Starting, Idle, Busy };

  struct Worker {
    PodIndex pod = 0;
    WorkerPhase phase = WorkerPhase::Starting;
    std::optional<TaskIndex> current;
    bool draining = false;
  };

  explicit WorkerPool(PoolSpec spec) : spec_(std::move(spec)) {}

  const PoolSpec& spec() const noexcept { return spec_; }

  void enqueue(TaskIndex task) { queue_.push_back(task); }
  std::size_t queue_length() const noexcept { return queue_.size(); }
  const std::deque<TaskIndex>& queue() const noexcept { return queue_; }

  void add_worker(PodIndex pod);

  /// Next step for a worker that is free (just started or just finished a
  /// task): a task to run, or nullopt if it went idle / must terminate.
  struct Step {
    std::optional<TaskIndex> run;
    bool terminate = false;
  };
  Step worker_free(PodIndex pod);

  /// Hands a queued task to the longest-idle worker, if any.
  struct Assignment {
    PodIndex pod;
    TaskIndex task;
  };
  std::optional<Assignment> assign_idle();

  /// Scale-down: picks `count` victims. Starting/idle workers are removed
  /// outright (returned in `remove_now`), then busy workers are marked to
  /// drain after their current task.
  struct Removal {
    std::vector<PodIndex> remove_now;
    std::vector<PodIndex> drained;
  };
  Removal remove_workers(std::int64_t count);

  /// Drops a worker whose pod vanished (terminated).
  void forget(PodIndex pod);

  /// Busy workers not marked for drain.
  std::int64_t busy_workers() const;
  std::int64_t idle_workers() const;
  /// Replicas that count toward the target: all workers not draining.
  std::int64_t current_replicas() const;
  const std::vector<Worker>& workers() const noexcept { return workers_; }
  const Worker* worker(PodIndex pod) const;

 private:
  Worker& at(PodIndex pod);

  PoolSpec spec_;
  std::deque<TaskIndex> queue_;
  std::vector<Worker> workers_;   // ordered by creation
  std::deque<PodIndex> idle_;     // longest-idle first
};

}  // namespace kwsim
