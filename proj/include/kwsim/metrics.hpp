#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kwsim/common.hpp"
#include "kwsim/trace.hpp"
#include "kwsim/workflow.hpp"

namespace kwsim {

struct UtilizationSample {
  TimeMs time_ms = 0;
  std::int64_t running_tasks = 0;
  double allocated_fraction = 0.0;
};

/// Piecewise-constant level: `value` holds from `time_ms` until the next step.
struct Step {
  TimeMs time_ms = 0;
  std::int64_t value = 0;
};

struct Interval {
  TimeMs start_ms = 0;
  TimeMs end_ms = 0;

  TimeMs length() const noexcept { return end_ms - start_ms; }
  bool operator==(const Interval&) const = default;
};

/// Last TaskCompleted minus first TaskReady. Throws Error on an empty or
/// incomplete trace.
TimeMs makespan(const Trace& trace);

/// Exact, event-aligned number of running tasks (one step per distinct timestamp).
std::vector<Step> running_series(const Trace& trace);

/// Level of a step series at time t (0 before the first step).
std::int64_t value_at(const std::vector<Step>& series, TimeMs t);

/// ∫ value dt over the whole series, in value·ms.
std::int64_t integral(const std::vector<Step>& series);

/// Mean level over [window.start, window.end).
double mean_over(const std::vector<Step>& series, Interval window);

/// Total time within `window` where the level is >= threshold.
TimeMs time_at_or_above(const std::vector<Step>& series, std::int64_t threshold, Interval window);

/// Samples every `step_ms` from 0 through one step past the last event.
std::vector<UtilizationSample> utilization_series(const Trace& trace, TimeMs step_ms);

/// Maximal intervals of length >= min_gap_ms where at most `max_running`
/// tasks run while some ready task is waiting to start.
std::vector<Interval> low_parallelism_intervals(const Trace& trace, std::int64_t max_running, TimeMs min_gap_ms);

/// Intervals with no task running although ready work is waiting.
std::vector<Interval> stall_intervals(const Trace& trace, TimeMs min_gap_ms);

struct StageStats {
  std::string task_type;
  std::size_t tasks = 0;
  TimeMs first_start_ms = 0;
  TimeMs last_completion_ms = 0;
  TimeMs total_runtime_ms = 0;

  Interval span() const noexcept { return {first_start_ms, last_completion_ms}; }
  double mean_runtime_ms() const noexcept { return tasks ? static_cast<double>(total_runtime_ms) / tasks : 0.0; }
};

/// Per task type, in order of first start.
std::vector<StageStats> stage_statistics(const Trace& trace);

/// Exactly-once execution and causality checks of a finished run.
struct AuditReport {
  bool passed = true;
  std::size_t tasks_completed = 0;
  std::vector<std::string> problems;
};

AuditReport audit_trace(const Trace& trace, const WorkflowDag& dag);

}  // namespace kwsim
