#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kwsim/autoscaler.hpp"
#include "kwsim/cluster.hpp"
#include "kwsim/execmodels.hpp"
#include "kwsim/metrics.hpp"
#include "kwsim/trace.hpp"
#include "kwsim/workflow.hpp"

namespace kwsim {

/// Where a scenario's DAG comes from. Montage DAGs are generated with the
/// scenario seed.
struct WorkflowSource {
  enum class Kind { Inline, File, Montage };
  Kind kind = Kind::Inline;
  std::shared_ptr<const WorkflowDag> dag;  ///< Inline (and cached File)
  std::string path;                        ///< File
  std::optional<MontageParams> montage;    ///< Montage

  static WorkflowSource inline_dag(WorkflowDag dag);
  static WorkflowSource file(std::string path);
  static WorkflowSource generated(MontageParams params);
};

struct SimConfig {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  WorkflowSource workflow;
  ClusterConfig cluster;
  ExecutionModelConfig model;
  ScalerConfig scaler;
  TimeMs engine_latency_ms = 0;
  TimeMs max_sim_time_ms = 24LL * 3600 * 1000;
  /// Re-check cluster invariants after every scheduling pass (slow; for tests).
  bool check_invariants = false;
};

/// Builds (or loads) the DAG a config refers to.
std::shared_ptr<const WorkflowDag> materialize_workflow(const SimConfig& config);

struct SimResult {
  std::string name;
  std::shared_ptr<const WorkflowDag> dag;
  TimeMs makespan_ms = 0;
  Trace trace;
  std::vector<UtilizationSample> utilization;  ///< 1 s samples
  std::vector<StageStats> stages;
  AuditReport audit;
  std::uint64_t trace_hash = 0;
  std::size_t pods_created = 0;
  std::size_t events_processed = 0;
};

/// Simulates one scenario to quiescence. Throws ConfigError for invalid
/// configs and SimulationError on deadlock or when max_sim_time_ms is exceeded.
SimResult run(const SimConfig& config);

struct SuiteEntry {
  std::string name;
  std::optional<SimResult> result;
  std::optional<std::string> error;
  int error_code = 0;  ///< CLI exit status class of the error (2 config, 3 simulation, 4 I/O)
};

/// Runs each scenario independently (concurrently when `threads` > 1).
/// Errors are recorded per entry; output order matches input order.
std::vector<SuiteEntry> run_suite(const std::vector<SimConfig>& configs, unsigned threads = 1);

}  // namespace kwsim
