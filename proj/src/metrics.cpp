#include "kwsim/metrics.hpp"

#include <algorithm>
#include <map>
#include <optional>

namespace kwsim {

namespace {

// Calls fn(time, first, last) for each run of equal-time events.
template <class Fn>
void for_each_timestamp(const Trace& trace, Fn&& fn) {
  const auto& ev = trace.events;
  std::size_t i = 0;
  while (i < ev.size()) {
    std::size_t j = i;
    while (j < ev.size() && ev[j].time_ms == ev[i].time_ms) ++j;
    fn(ev[i].time_ms, i, j);
    i = j;
  }
}

void push_step(std::vector<Step>& s, TimeMs t, std::int64_t v) {
  if (!s.empty() && s.back().value == v) return;
  if (!s.empty() && s.back().time_ms == t) {
    s.back().value = v;
    return;
  }
  s.push_back({t, v});
}

}  // namespace

TimeMs makespan(const Trace& trace) {
  if (trace.events.empty()) throw Error("makespan of an empty trace");
  std::optional<TimeMs> first_ready, last_done;
  std::size_t ready = 0, done = 0;
  for (const auto& e : trace.events) {
    if (e.kind == TraceKind::TaskReady) {
      ++ready;
      if (!first_ready) first_ready = e.time_ms;
    } else if (e.kind == TraceKind::TaskCompleted) {
      ++done;
      last_done = e.time_ms;
    }
  }
  if (!first_ready || !last_done || done < trace.task_ids.size() || done < ready)
    throw Error("makespan of an incomplete trace (" + std::to_string(done) + " of " + std::to_string(trace.task_ids.size()) +
                " tasks completed)");
  return *last_done - *first_ready;
}

std::vector<Step> running_series(const Trace& trace) {
  std::vector<Step> out;
  std::int64_t running = 0;
  for_each_timestamp(trace, [&](TimeMs t, std::size_t a, std::size_t b) {
    for (std::size_t k = a; k < b; ++k) {
      const auto kind = trace.events[k].kind;
      if (kind == TraceKind::TaskStarted) ++running;
      else if (kind == TraceKind::TaskCompleted) --running;
    }
    push_step(out, t, running);
  });
  return out;
}

std::int64_t value_at(const std::vector<Step>& series, TimeMs t) {
  auto it = std::upper_bound(series.begin(), series.end(), t, [](TimeMs v, const Step& s) { return v < s.time_ms; });
  if (it == series.begin()) return 0;
  return std::prev(it)->value;
}

std::int64_t integral(const std::vector<Step>& series) {
  std::int64_t acc = 0;
  for (std::size_t i = 0; i + 1 < series.size(); ++i) acc += series[i].value * (series[i + 1].time_ms - series[i].time_ms);
  return acc;
}

namespace {

// Calls fn(value, overlap_length) for each segment of the series clipped to window.
template <class Fn>
void for_each_segment(const std::vector<Step>& series, Interval w, Fn&& fn) {
  if (w.end_ms <= w.start_ms) return;
  TimeMs cursor = w.start_ms;
  std::int64_t level = value_at(series, w.start_ms);
  auto it = std::upper_bound(series.begin(), series.end(), w.start_ms, [](TimeMs v, const Step& s) { return v < s.time_ms; });
  for (; it != series.end() && it->time_ms < w.end_ms; ++it) {
    fn(level, it->time_ms - cursor);
    cursor = it->time_ms;
    level = it->value;
  }
  fn(level, w.end_ms - cursor);
}

}  // namespace

double mean_over(const std::vector<Step>& series, Interval window) {
  if (window.length() <= 0) return 0.0;
  long double acc = 0;
  for_each_segment(series, window, [&](std::int64_t v, TimeMs len) { acc += static_cast<long double>(v) * len; });
  return static_cast<double>(acc / window.length());
}

TimeMs time_at_or_above(const std::vector<Step>& series, std::int64_t threshold, Interval window) {
  TimeMs acc = 0;
  for_each_segment(series, window, [&](std::int64_t v, TimeMs len) {
    if (v >= threshold) acc += len;
  });
  return acc;
}

std::vector<UtilizationSample> utilization_series(const Trace& trace, TimeMs step_ms) {
  if (step_ms <= 0) throw std::invalid_argument("utilization step must be > 0");
  std::vector<UtilizationSample> out;
  if (trace.events.empty()) return out;

  const auto running = running_series(trace);
  std::vector<Step> cpu;
  std::int64_t allocated = 0;
  for_each_timestamp(trace, [&](TimeMs t, std::size_t a, std::size_t b) {
    for (std::size_t k = a; k < b; ++k) {
      const auto& e = trace.events[k];
      if (e.kind == TraceKind::PodScheduled) allocated += e.detail[1];
      else if ((e.kind == TraceKind::PodCompleted || e.kind == TraceKind::PodTerminated) && e.detail[0] == 1)
        allocated -= e.detail[1];
    }
    push_step(cpu, t, allocated);
  });

  const TimeMs end = trace.events.back().time_ms + step_ms;
  const double total = trace.total_cpu_m > 0 ? static_cast<double>(trace.total_cpu_m) : 1.0;
  for (TimeMs t = 0; t <= end; t += step_ms)
    out.push_back({t, value_at(running, t), static_cast<double>(value_at(cpu, t)) / total});
  return out;
}

std::vector<Interval> low_parallelism_intervals(const Trace& trace, std::int64_t max_running, TimeMs min_gap_ms) {
  if (min_gap_ms <= 0) throw std::invalid_argument("min_gap_ms must be > 0");
  std::vector<Interval> out;
  std::int64_t running = 0, waiting = 0;
  bool in_gap = false;
  TimeMs gap_start = 0;
  for_each_timestamp(trace, [&](TimeMs t, std::size_t a, std::size_t b) {
    for (std::size_t k = a; k < b; ++k) {
      switch (trace.events[k].kind) {
        case TraceKind::TaskReady: ++waiting; break;
        case TraceKind::TaskStarted: --waiting; ++running; break;
        case TraceKind::TaskCompleted: --running; break;
        default: break;
      }
    }
    const bool low = running <= max_running && waiting > 0;
    if (low && !in_gap) {
      in_gap = true;
      gap_start = t;
    } else if (!low && in_gap) {
      if (t - gap_start >= min_gap_ms) out.push_back({gap_start, t});
      in_gap = false;
    }
  });
  return out;
}

std::vector<Interval> stall_intervals(const Trace& trace, TimeMs min_gap_ms) {
  return low_parallelism_intervals(trace, 0, min_gap_ms);
}

std::vector<StageStats> stage_statistics(const Trace& trace) {
  std::map<std::string, std::size_t> index;
  std::vector<StageStats> out;
  std::vector<TimeMs> started(trace.task_ids.size(), 0);
  for (const auto& e : trace.events) {
    if (e.kind != TraceKind::TaskStarted && e.kind != TraceKind::TaskCompleted) continue;
    const auto& type = trace.task_types.at(static_cast<std::size_t>(e.task));
    auto [it, fresh] = index.emplace(type, out.size());
    if (fresh) out.push_back(StageStats{type, 0, e.time_ms, e.time_ms, 0});
    auto& s = out[it->second];
    if (e.kind == TraceKind::TaskStarted) {
      started[static_cast<std::size_t>(e.task)] = e.time_ms;
      s.first_start_ms = std::min(s.first_start_ms, e.time_ms);
    } else {
      ++s.tasks;
      s.last_completion_ms = std::max(s.last_completion_ms, e.time_ms);
      s.total_runtime_ms += e.time_ms - started[static_cast<std::size_t>(e.task)];
    }
  }
  return out;
}

AuditReport audit_trace(const Trace& trace, const WorkflowDag& dag) {
  AuditReport r;
  const auto n = dag.size();
  std::vector<int> starts(n, 0), completions(n, 0);
  std::vector<char> pod_created(trace.pod_ids.size(), 0);
  TimeMs last = 0;
  auto problem = [&](std::string msg) {
    r.passed = false;
    if (r.problems.size() < 20) r.problems.push_back(std::move(msg));
  };

  for (const auto& e : trace.events) {
    if (e.time_ms < last) problem("trace time goes backwards at " + std::to_string(e.time_ms));
    last = e.time_ms;
    if (e.kind == TraceKind::PodCreated) pod_created.at(static_cast<std::size_t>(e.pod)) = 1;
    if (e.kind == TraceKind::TaskStarted) {
      const auto t = static_cast<TaskIndex>(e.task);
      ++starts[t];
      for (auto p : dag.parents_of(t))
        if (completions[p] == 0) problem("task " + dag.task(t).id + " started before parent " + dag.task(p).id + " completed");
      if (e.pod == kNone || !pod_created[static_cast<std::size_t>(e.pod)])
        problem("task " + dag.task(t).id + " started in a pod that was never created");
    }
    if (e.kind == TraceKind::TaskCompleted) {
      const auto t = static_cast<TaskIndex>(e.task);
      if (starts[t] == 0) problem("task " + dag.task(t).id + " completed without starting");
      ++completions[t];
    }
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (starts[t] != 1 || completions[t] != 1)
      problem("task " + dag.task(static_cast<TaskIndex>(t)).id + " started " + std::to_string(starts[t]) + "x, completed " +
              std::to_string(completions[t]) + "x");
    if (completions[t] > 0) ++r.tasks_completed;
  }
  return r;
}

}  // namespace kwsim
