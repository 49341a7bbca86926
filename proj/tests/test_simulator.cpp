#include <doctest.h>

#include <algorithm>

#include "kwsim/simulator.hpp"
#include "support.hpp"

using namespace kwsim;
using kwsim::testing::config_for;
using kwsim::testing::small_cluster;
using kwsim::testing::task;

namespace {

TimeMs completion_of(const SimResult& r, const std::string& id) {
  for (const auto& e : r.trace.events)
    if (e.kind == TraceKind::TaskCompleted && r.trace.task_ids[static_cast<std::size_t>(e.task)] == id) return e.time_ms;
  FAIL("task never completed: " << id);
  return -1;
}

// n independent 10 s tasks on a cluster that fits exactly one at a time.
SimConfig one_slot(int n, TimeMs backoff_initial = 5000) {
  std::vector<TaskSpec> tasks;
  for (int i = 0; i < n; ++i) tasks.push_back(task(std::string(1, static_cast<char>('a' + i)), "x", 10000));
  auto cfg = config_for(WorkflowDag("one-slot", tasks), small_cluster(1, 1000));
  cfg.cluster.backoff.initial_ms = backoff_initial;
  return cfg;
}

}  // namespace

TEST_CASE("run: hand-traced makespans") {
  SUBCASE("one task: overhead plus runtime") {
    auto r = run(one_slot(1));
    CHECK(r.makespan_ms == 12000);
    CHECK(r.audit.passed);
  }
  SUBCASE("two tasks, one slot: second pod placed on release") {
    // b fails at 0 (due 5000, nothing freed yet), a frees at 12000 -> b placed.
    auto r = run(one_slot(2));
    CHECK(completion_of(r, "a") == 12000);
    CHECK(r.makespan_ms == 24000);
  }
  SUBCASE("three tasks, one slot: loser of the release retries after its back-off") {
    // 12000: b placed, c fails again (attempt 2, due 22000).
    // 24000: b frees, c's wait is over -> placed, done 36000.
    auto r = run(one_slot(3));
    CHECK(completion_of(r, "b") == 24000);
    CHECK(r.makespan_ms == 36000);
  }
  SUBCASE("release during back-off: retry happens at expiry") {
    // Back-off 20 s: a frees at 12000 while b, c still wait until 20000.
    // 20000: b placed (done 32000), c fails (attempt 2, due 60000).
    // 32000 frees but c still waits; 60000: c placed, done 72000.
    auto r = run(one_slot(3, 20000));
    CHECK(completion_of(r, "b") == 32000);
    CHECK(r.makespan_ms == 72000);
  }
  SUBCASE("serial chain") {
    WorkflowDag dag("chain", {task("a", "x", 10000), task("b", "x", 10000, {"a"})});
    CHECK(run(config_for(dag, small_cluster(1))).makespan_ms == 24000);
  }
  SUBCASE("diamond on a wide cluster") {
    auto r = run(config_for(testing::diamond(), small_cluster(2)));
    CHECK(r.makespan_ms == 9000);
    CHECK(completion_of(r, "t2") == completion_of(r, "t3"));
  }
}

TEST_CASE("run: deadlock and guards") {
  SUBCASE("infeasible pod names the task") {
    WorkflowDag dag("huge", {task("small", "x", 1000), task("huge", "x", 1000, {"small"}, 64000)});
    try {
      run(config_for(dag, small_cluster(2)));
      FAIL("expected a deadlock");
    } catch (const SimulationError& e) {
      REQUIRE(!e.stuck_tasks().empty());
      CHECK(e.stuck_tasks().front().find("huge") == 0);
      CHECK(std::string(e.what()).find("huge") != std::string::npos);
    }
  }
  SUBCASE("children of an infeasible task are reported too") {
    WorkflowDag dag("blocked", {task("huge", "x", 1000, {}, 64000), task("after", "x", 1000, {"huge"})});
    try {
      run(config_for(dag, small_cluster(1)));
      FAIL("expected a deadlock");
    } catch (const SimulationError& e) {
      CHECK(e.stuck_tasks().size() == 2);
    }
  }
  SUBCASE("simulated-time guard") {
    auto cfg = one_slot(2);
    cfg.max_sim_time_ms = 15000;
    CHECK_THROWS_AS(run(cfg), SimulationError);
  }
  SUBCASE("unresolvable task type is a config error") {
    auto cfg = one_slot(1);
    cfg.model.default_mode.reset();
    CHECK_THROWS_AS(run(cfg), ConfigError);
  }
  SUBCASE("invalid cluster is a config error") {
    auto cfg = one_slot(1);
    cfg.cluster.backoff.factor = 0.5;
    CHECK_THROWS_AS(run(cfg), ConfigError);
  }
}

TEST_CASE("run: determinism and trace shape") {
  SimConfig cfg;
  cfg.workflow = WorkflowSource::generated(MontageParams::defaults(12, 1));
  cfg.cluster = small_cluster(2);
  cfg.seed = 9;
  for (auto t : {"mProject", "mDiffFit", "mBackground"}) {
    PoolSpec p;
    p.task_type = t;
    cfg.model.pools.push_back(p);
  }
  const auto a = run(cfg), b = run(cfg);
  CHECK(a.trace_hash == b.trace_hash);
  CHECK(a.trace.events == b.trace.events);
  CHECK(a.audit.passed);
  CHECK(std::is_sorted(a.trace.events.begin(), a.trace.events.end(),
                       [](const TraceEvent& x, const TraceEvent& y) { return x.time_ms < y.time_ms; }));
  CHECK(a.makespan_ms >= critical_path_ms(*a.dag));

  auto other = cfg;
  other.seed = 10;
  CHECK(run(other).trace_hash != a.trace_hash);
}

TEST_CASE("run_suite") {
  SUBCASE("empty list") { CHECK(run_suite({}).empty()); }
  SUBCASE("three models on one DAG, each reproducible") {
    SimConfig base;
    base.workflow = WorkflowSource::generated(MontageParams::defaults(8, 3));
    base.cluster = small_cluster(2);
    auto job = base, batch = base, pool = base;
    job.name = "job";
    batch.name = "clustered";
    batch.model.clustering.push_back(ClusteringRule{{"mProject", "mDiffFit", "mBackground"}, 4, 3000});
    pool.name = "pools";
    for (auto t : {"mProject", "mDiffFit", "mBackground"}) {
      PoolSpec p;
      p.task_type = t;
      pool.model.pools.push_back(p);
    }
    const auto serial = run_suite({job, batch, pool}, 1);
    const auto parallel = run_suite({job, batch, pool}, 3);
    REQUIRE(serial.size() == 3);
    REQUIRE(parallel.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      REQUIRE(serial[i].result);
      REQUIRE(parallel[i].result);
      CHECK(serial[i].name == parallel[i].name);
      CHECK(serial[i].result->trace_hash == parallel[i].result->trace_hash);
    }
    CHECK(serial[0].name == "job");
    CHECK(serial[2].result->trace_hash == run(pool).trace_hash);
  }
  SUBCASE("an invalid scenario does not stop its siblings") {
    auto good = one_slot(1);
    auto bad = good;
    bad.name = "bad";
    bad.cluster.node_count = 0;
    auto stuck = config_for(WorkflowDag("stuck", {task("huge", "x", 1000, {}, 64000)}), small_cluster(1));
    const auto out = run_suite({good, bad, stuck}, 2);
    REQUIRE(out.size() == 3);
    CHECK(out[0].result);
    CHECK_FALSE(out[1].result);
    CHECK(out[1].error_code == 2);
    CHECK(out[1].error->find("node") != std::string::npos);
    CHECK_FALSE(out[2].result);
    CHECK(out[2].error_code == 3);
  }
}
