#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <algorithm>
#include <map>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kwsim/simulator.hpp"

namespace kwsim::testing {

inline std::string source_path(const std::string& rel) { return std::string(KWSIM_SOURCE_DIR) + "/" + rel; }

inline TaskSpec task(std::string id, std::string type, TimeMs runtime, std::vector<std::string> parents = {},
                     std::int64_t cpu = 1000, std::int64_t mem = 2048) {
  return TaskSpec{std::move(id), std::move(type), runtime, cpu, mem, std::move(parents)};
}

inline WorkflowDag diamond() {
  return WorkflowDag("diamond", {task("t1", "a", 1000), task("t2", "b", 1000, {"t1"}), task("t3", "b", 1000, {"t1"}),
                                 task("t4", "c", 1000, {"t2", "t3"})});
}

/// Cluster of `nodes` nodes with `cpu` millicores each; no admission limit.
inline ClusterConfig small_cluster(int nodes, std::int64_t cpu = 4000, std::int64_t mem = 16384) {
  ClusterConfig c;
  c.node_count = nodes;
  c.node_cpu_m = cpu;
  c.node_mem_mb = mem;
  c.admission.rate_per_s = 0;
  return c;
}

inline SimConfig config_for(WorkflowDag dag, ClusterConfig cluster) {
  SimConfig c;
  c.name = dag.name();
  c.workflow = WorkflowSource::inline_dag(std::move(dag));
  c.cluster = cluster;
  return c;
}

/// Random layered DAG: up to `max_tasks` tasks over `types` task types, each
/// task drawing up to three parents among earlier tasks.
inline WorkflowDag random_dag(std::mt19937_64& rng, int max_tasks, int types = 4) {
  std::uniform_int_distribution<int> count(1, max_tasks);
  std::uniform_int_distribution<int> type(0, types - 1);
  std::uniform_int_distribution<TimeMs> runtime(0, 20000);
  std::uniform_int_distribution<int> nparents(0, 3);
  const std::int64_t cpus[] = {500, 1000, 1000, 2000};
  const std::int64_t mems[] = {512, 2048, 2048, 4096};
  const int n = count(rng);
  std::vector<TaskSpec> tasks;
  for (int i = 0; i < n; ++i) {
    std::set<std::string> parents;
    if (i > 0) {
      std::uniform_int_distribution<int> pick(std::max(0, i - 12), i - 1);
      for (int k = nparents(rng); k > 0; --k) parents.insert("t" + std::to_string(pick(rng)));
    }
    const auto res = std::uniform_int_distribution<int>(0, 3)(rng);
    tasks.push_back(task("t" + std::to_string(i), "type" + std::to_string(type(rng)), runtime(rng),
                         {parents.begin(), parents.end()}, cpus[res], mems[res]));
  }
  return WorkflowDag("random", std::move(tasks));
}

/// Exact largest-remainder apportionment of `slots` by `demand` using rational
/// comparisons, with the starved-first rule for the leftover. Reference for
/// desired_replicas when Σd > slots.
inline std::vector<std::int64_t> apportion_oracle(const std::vector<std::int64_t>& d, std::int64_t slots) {
  const std::int64_t total = std::accumulate(d.begin(), d.end(), std::int64_t{0});
  std::vector<std::int64_t> out(d.size(), 0);
  if (total <= slots) return d;
  std::int64_t given = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    out[i] = static_cast<std::int64_t>((static_cast<__int128>(slots) * d[i]) / total);
    given += out[i];
  }
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  auto rem = [&](std::size_t i) { return static_cast<__int128>(slots) * d[i] % total; };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool sa = d[a] > 0 && out[a] == 0, sb = d[b] > 0 && out[b] == 0;
    if (sa != sb) return sa;
    return rem(a) > rem(b);
  });
  for (std::size_t k = 0; given < slots && k < order.size(); ++k)
    if (d[order[k]] > 0) {
      ++out[order[k]];
      ++given;
    }
  return out;
}

/// Randomized small scenario: 1 to 4 nodes, a random DAG and one of the
/// three execution models (or a per-type mix of them). `variant` selects
/// the model so callers can cover each one evenly.
inline SimConfig random_scenario(std::mt19937_64& rng, int variant, int max_tasks = 60) {
  auto dag = random_dag(rng, max_tasks);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  ClusterConfig cluster = small_cluster(pick(1, 4), 2000 * pick(1, 3), 8192);
  cluster.backoff.initial_ms = 500 * pick(1, 10);
  cluster.backoff.cap_ms = cluster.backoff.initial_ms * pick(1, 40);
  cluster.pod_overhead_ms = 500 * pick(0, 4);
  if (pick(0, 1)) {
    cluster.admission.rate_per_s = pick(1, 20);
    cluster.admission.burst = pick(1, 10);
  }
  const auto types = dag.task_types();
  auto cfg = config_for(std::move(dag), cluster);
  cfg.seed = rng();
  cfg.check_invariants = true;
  cfg.engine_latency_ms = 100 * pick(0, 3);
  cfg.scaler.interval_ms = 1000 * pick(1, 20);
  cfg.scaler.stabilization_ms = 1000 * pick(0, 60);

  auto add_rule = [&](std::vector<std::string> match) {
    cfg.model.clustering.push_back(ClusteringRule{std::move(match), pick(1, 6), 1000 * pick(0, 5)});
  };
  auto add_pool = [&](const std::string& type) {
    PoolSpec p;
    p.task_type = type;
    p.cpu_m = 500 * pick(1, 4);
    p.mem_mb = 1024;
    p.max_replicas = pick(1, 12);
    cfg.model.pools.push_back(p);
  };
  switch (variant % 4) {
    case 0: break;
    case 1: add_rule(types); break;
    case 2:
      for (const auto& t : types) add_pool(t);
      break;
    default:
      for (const auto& t : types) {
        const int m = pick(0, 2);
        if (m == 1) add_rule({t});
        else if (m == 2) add_pool(t);
      }
  }
  return cfg;
}

/// Independent re-check of a finished run from its trace alone: per-node CPU
/// never exceeds capacity, a pod runs one task at a time, every task runs
/// exactly once after its parents, and the running-task integral equals the
/// summed task runtimes. Returns a description of each problem found.
inline std::vector<std::string> trace_problems(const SimResult& r, const ClusterConfig& cluster) {
  std::vector<std::string> out;
  const auto& dag = *r.dag;
  const auto& ev = r.trace.events;
  std::map<std::int32_t, std::pair<std::int32_t, std::int64_t>> held;  // pod -> node, cpu
  std::vector<std::int64_t> node_cpu(static_cast<std::size_t>(cluster.node_count), 0);
  std::map<std::int32_t, std::int32_t> busy;  // pod -> task
  std::vector<int> started(dag.size(), 0), done(dag.size(), 0);
  std::vector<TimeMs> start_at(dag.size(), 0);
  std::int64_t running = 0, area = 0;
  TimeMs prev = ev.empty() ? 0 : ev.front().time_ms;
  for (const auto& e : ev) {
    if (e.time_ms < prev) out.push_back("time goes backwards at " + std::to_string(e.time_ms));
    area += running * (e.time_ms - prev);
    prev = e.time_ms;
    switch (e.kind) {
      case TraceKind::PodScheduled: {
        auto& c = node_cpu.at(static_cast<std::size_t>(e.node));
        c += e.detail[1];
        held[e.pod] = {e.node, e.detail[1]};
        if (c > cluster.node_cpu_m) out.push_back("node over-allocated at " + std::to_string(e.time_ms));
        break;
      }
      case TraceKind::PodCompleted:
      case TraceKind::PodTerminated:
        if (auto it = held.find(e.pod); it != held.end()) {
          node_cpu.at(static_cast<std::size_t>(it->second.first)) -= it->second.second;
          held.erase(it);
          if (e.detail[0] != 1) out.push_back("allocated pod released without resources");
        }
        if (busy.count(e.pod)) out.push_back("pod ended while running a task");
        break;
      case TraceKind::TaskStarted: {
        const auto t = static_cast<TaskIndex>(e.task);
        ++started[t];
        start_at[t] = e.time_ms;
        ++running;
        if (!held.count(e.pod)) out.push_back("task " + dag.task(t).id + " started in a pod holding no resources");
        if (!busy.emplace(e.pod, e.task).second) out.push_back("pod runs two tasks at once");
        for (auto p : dag.parents_of(t))
          if (!done[p]) out.push_back("task " + dag.task(t).id + " started before a parent completed");
        break;
      }
      case TraceKind::TaskCompleted: {
        const auto t = static_cast<TaskIndex>(e.task);
        ++done[t];
        --running;
        busy.erase(e.pod);
        if (e.time_ms - start_at[t] != dag.task(t).runtime_ms) out.push_back("task " + dag.task(t).id + " ran for the wrong time");
        break;
      }
      default: break;
    }
  }
  std::int64_t work = 0;
  for (std::size_t t = 0; t < dag.size(); ++t) {
    work += dag.task(static_cast<TaskIndex>(t)).runtime_ms;
    if (started[t] != 1 || done[t] != 1) out.push_back("task " + dag.task(static_cast<TaskIndex>(t)).id + " not run exactly once");
  }
  if (area != work) out.push_back("running-task integral " + std::to_string(area) + " != total runtime " + std::to_string(work));
  // Only pool workers may still hold resources when the last task finishes.
  for (const auto& e : ev)
    if (e.kind == TraceKind::PodScheduled && e.pool == kNone && held.count(e.pod)) {
      out.push_back("job pod never released its resources");
      break;
    }
  return out;
}

}  // namespace kwsim::testing
