#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "kwsim/common.hpp"

namespace kwsim {

struct TaskSpec {
  std::string id;
  std::string type;
  TimeMs runtime_ms = 0;
  std::int64_t cpu_request_m = 1000;
  std::int64_t mem_request_mb = 2048;
  std::vector<std::string> parents;

  bool operator==(const TaskSpec&) const = default;
};

/// Immutable, validated workflow DAG. Task order is the order given at
/// construction and drives every deterministic iteration in the simulator.
class WorkflowDag {
 public:
  WorkflowDag() = default;

  /// Validates ids, parents, requests and acyclicity; throws WorkflowError.
  WorkflowDag(std::string name, std::vector<TaskSpec> tasks);

  const std::string& name() const noexcept { return name_; }
  std::span<const TaskSpec> tasks() const noexcept { return tasks_; }
  std::size_t size() const noexcept { return tasks_.size(); }
  const TaskSpec& task(TaskIndex i) const { return tasks_.at(i); }

  std::optional<TaskIndex> find(std::string_view id) const;
  TaskIndex index_of(std::string_view id) const;

  std::span<const TaskIndex> parents_of(TaskIndex i) const { return parents_.at(i); }
  std::span<const TaskIndex> children_of(TaskIndex i) const { return children_.at(i); }
  std::size_t edge_count() const noexcept { return edge_count_; }

  /// Kahn order; ties resolved by task order.
  std::span<const TaskIndex> topological_order() const noexcept { return topo_; }

  /// Distinct task types in first-appearance order.
  std::vector<std::string> task_types() const;

  bool operator==(const WorkflowDag& other) const { return name_ == other.name_ && tasks_ == other.tasks_; }

 private:
  std::string name_;
  std::vector<TaskSpec> tasks_;
  std::unordered_map<std::string, TaskIndex> by_id_;
  std::vector<std::vector<TaskIndex>> parents_;
  std::vector<std::vector<TaskIndex>> children_;
  std::vector<TaskIndex> topo_;
  std::size_t edge_count_ = 0;
};

// Workflow file: {name, tasks:[{id, type, runtime_ms, cpu_m, mem_mb, parents:[...]}]}
WorkflowDag parse_workflow(const nlohmann::json& doc);
WorkflowDag load_workflow(std::istream& source);
WorkflowDag load_workflow_file(const std::string& path);
nlohmann::json workflow_to_json(const WorkflowDag& dag);
/// One task per line; stable for a fixed DAG.
std::string serialize_workflow(const WorkflowDag& dag);

/// Tasks not in `completed` whose parents are all completed, in DAG order.
/// Throws WorkflowError for ids unknown to the DAG.
std::vector<std::string> ready_tasks(const WorkflowDag& dag, const std::set<std::string>& completed);

/// Longest runtime-weighted path through the DAG (no overheads).
TimeMs critical_path_ms(const WorkflowDag& dag);

struct RuntimeModel {
  TimeMs mean_ms = 0;
  double jitter_fraction = 0.0;  ///< uniform +/- fraction of the mean, in [0, 1)
};

struct RequestProfile {
  std::int64_t cpu_m = 1000;
  std::int64_t mem_mb = 2048;
};

/// Montage-shaped workload: three wide stages (mProject, mDiffFit,
/// mBackground) joined by single serial tasks.
struct MontageParams {
  int n_inputs = 4;
  std::uint64_t seed = 1;
  std::map<std::string, RuntimeModel> runtime;
  std::map<std::string, RequestProfile> requests;

  /// Stock runtimes and requests for every Montage task type.
  static MontageParams defaults(int n_inputs, std::uint64_t seed);
};

inline constexpr std::string_view kMontageTypes[] = {"mProject", "mDiffFit", "mConcatFit", "mBgModel", "mBackground",
                                                      "mImgtbl",  "mAdd",     "mShrink",    "mJPEG"};

/// 5N tasks: N mProject, 3N-6 mDiffFit over neighbour pairs (j-i in {1,2,3}),
/// mConcatFit, mBgModel, N mBackground, mImgtbl, mAdd, mShrink, mJPEG.
WorkflowDag generate_montage(const MontageParams& params);

nlohmann::json montage_params_to_json(const MontageParams& params);
/// Fields absent from `doc` keep the Montage defaults. `path` prefixes error paths.
MontageParams parse_montage_params(const nlohmann::json& doc, const std::string& path);

}  // namespace kwsim
