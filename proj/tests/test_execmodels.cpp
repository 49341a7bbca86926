#include <doctest.h>

#include "kwsim/execmodels.hpp"
#include "kwsim/simulator.hpp"
#include "support.hpp"

using namespace kwsim;
using kwsim::testing::task;

namespace {

ExecutionModelConfig hybrid() {
  ExecutionModelConfig m;
  for (auto t : {"mProject", "mDiffFit", "mBackground"}) {
    PoolSpec p;
    p.task_type = t;
    m.pools.push_back(p);
  }
  return m;
}

std::vector<TraceEvent> events_of(const SimResult& r, TraceKind kind) {
  std::vector<TraceEvent> out;
  for (const auto& e : r.trace.events)
    if (e.kind == kind) out.push_back(e);
  return out;
}

TimeMs completion_of(const SimResult& r, const std::string& id) {
  for (const auto& e : r.trace.events)
    if (e.kind == TraceKind::TaskCompleted && r.trace.task_ids[static_cast<std::size_t>(e.task)] == id) return e.time_ms;
  FAIL("task never completed: " << id);
  return -1;
}

}  // namespace

TEST_CASE("dispatch_ready") {
  const auto model = hybrid();
  SUBCASE("serial task under the hybrid default becomes a job") {
    auto a = dispatch_ready(7, "mAdd", model);
    CHECK(a.mode == ExecutionMode::Job);
    CHECK(a.task == 7);
  }
  SUBCASE("pooled type goes to its queue") {
    auto a = dispatch_ready(3, "mDiffFit", model);
    CHECK(a.mode == ExecutionMode::WorkerPool);
    CHECK(a.pool == 1);
  }
  SUBCASE("no mode and no default") {
    auto m = model;
    m.default_mode.reset();
    CHECK_THROWS_AS(dispatch_ready(0, "mystery", m), ConfigError);
  }
  SUBCASE("explicit mode wins over pool and rule") {
    auto m = model;
    m.clustering.push_back(ClusteringRule{{"mDiffFit"}, 5, 3000});
    CHECK(dispatch_ready(0, "mDiffFit", m).mode == ExecutionMode::WorkerPool);
    m.modes["mDiffFit"] = ExecutionMode::ClusteredJob;
    auto a = dispatch_ready(0, "mDiffFit", m);
    CHECK(a.mode == ExecutionMode::ClusteredJob);
    CHECK(a.rule == 0);
    m.modes["mDiffFit"] = ExecutionMode::Job;
    CHECK(dispatch_ready(0, "mDiffFit", m).mode == ExecutionMode::Job);
  }
}

TEST_CASE("worker-pool dispatch enqueues without submitting a pod") {
  // One mDiffFit task under a pool with zero replicas and no scaler capacity
  // yet: at t=0 the task sits in the queue and no job pod exists.
  WorkflowDag dag("one", {task("d", "mDiffFit", 2000)});
  auto cfg = kwsim::testing::config_for(dag, kwsim::testing::small_cluster(1));
  cfg.model = hybrid();
  auto r = run(cfg);
  for (const auto& e : events_of(r, TraceKind::PodSubmitted)) CHECK(e.pool != kNone);
}

TEST_CASE("BatchBuffer") {
  SUBCASE("five arrivals fill a batch of five") {
    BatchBuffer buf(ClusteringRule{{"mProject"}, 5, 3000}, "mProject");
    std::optional<Batch> out;
    for (TaskIndex t = 0; t < 5; ++t) {
      auto a = buf.push(t, 0);
      if (t < 4) CHECK_FALSE(a.emitted);
      else out = a.emitted;
    }
    REQUIRE(out);
    CHECK(out->tasks == std::vector<TaskIndex>{0, 1, 2, 3, 4});
    CHECK(out->formation_time_ms == 0);
    CHECK(buf.size() == 0);
  }
  SUBCASE("three arrivals flush at the timeout") {
    BatchBuffer buf(ClusteringRule{{"mProject"}, 5, 3000}, "mProject");
    auto first = buf.push(0, 0);
    CHECK(first.arm_timeout_at == 3000);
    CHECK_FALSE(buf.push(1, 0).arm_timeout_at);
    buf.push(2, 0);
    auto batch = buf.on_timeout(first.generation, 3000);
    REQUIRE(batch);
    CHECK(batch->tasks.size() == 3);
    CHECK(batch->formation_time_ms == 3000);
  }
  SUBCASE("stale timeout after a full batch is ignored") {
    BatchBuffer buf(ClusteringRule{{"x"}, 2, 3000}, "x");
    auto first = buf.push(0, 0);
    CHECK(buf.push(1, 100).emitted);
    auto reopened = buf.push(2, 200);
    CHECK(reopened.arm_timeout_at == 3200);
    CHECK_FALSE(buf.on_timeout(first.generation, 3000));
    CHECK(buf.on_timeout(reopened.generation, 3200));
  }
  SUBCASE("size one emits every arrival") {
    BatchBuffer buf(ClusteringRule{{"x"}, 1, 3000}, "x");
    for (TaskIndex t = 0; t < 4; ++t) {
      auto a = buf.push(t, 10 * t);
      REQUIRE(a.emitted);
      CHECK(a.emitted->tasks == std::vector<TaskIndex>{t});
      CHECK_FALSE(a.arm_timeout_at);
    }
  }
}

TEST_CASE("batch execution") {
  CHECK(batch_completion_offsets(std::vector<TimeMs>{2000, 2000, 2000, 2000, 2000}) ==
        std::vector<TimeMs>{2000, 4000, 6000, 8000, 10000});

  std::vector<TaskSpec> tasks;
  for (int i = 0; i < 5; ++i) tasks.push_back(task("d" + std::to_string(i), "mDiffFit", 2000));
  auto cfg = kwsim::testing::config_for(WorkflowDag("batch", tasks), kwsim::testing::small_cluster(1));
  cfg.model.clustering.push_back(ClusteringRule{{"mDiffFit"}, 5, 3000});
  auto r = run(cfg);
  const auto scheduled = events_of(r, TraceKind::PodScheduled);
  const auto completed = events_of(r, TraceKind::PodCompleted);
  REQUIRE(scheduled.size() == 1);
  REQUIRE(completed.size() == 1);
  CHECK(completed[0].time_ms - scheduled[0].time_ms == 2000 + 5 * 2000);
  // sequential inside the pod
  CHECK(completion_of(r, "d0") == 4000);
  CHECK(completion_of(r, "d4") == 12000);
  const auto series = running_series(r.trace);
  for (const auto& s : series) CHECK(s.value <= 1);
}

TEST_CASE("single task completes runtime after running begins") {
  auto cfg = kwsim::testing::config_for(WorkflowDag("one", {task("a", "x", 10000)}), kwsim::testing::small_cluster(1));
  auto r = run(cfg);
  const auto started = events_of(r, TraceKind::TaskStarted);
  REQUIRE(started.size() == 1);
  CHECK(completion_of(r, "a") - started[0].time_ms == 10000);
}

TEST_CASE("WorkerPool state machine") {
  PoolSpec spec;
  spec.task_type = "mDiffFit";
  SUBCASE("one worker drains the queue in FIFO order") {
    WorkerPool pool(spec);
    pool.add_worker(0);
    pool.enqueue(10);
    pool.enqueue(11);
    auto s = pool.worker_free(0);
    CHECK(s.run == 10u);
    s = pool.worker_free(0);
    CHECK(s.run == 11u);
    s = pool.worker_free(0);
    CHECK_FALSE(s.run);
    CHECK_FALSE(s.terminate);
    CHECK(pool.idle_workers() == 1);
    pool.enqueue(12);
    auto a = pool.assign_idle();
    REQUIRE(a);
    CHECK(a->pod == 0u);
    CHECK(a->task == 12u);
    CHECK(pool.busy_workers() == 1);
  }
  SUBCASE("two idle workers take two tasks, longest idle first") {
    WorkerPool pool(spec);
    pool.add_worker(0);
    pool.add_worker(1);
    pool.worker_free(1);
    pool.worker_free(0);
    pool.enqueue(5);
    pool.enqueue(6);
    auto a = pool.assign_idle();
    auto b = pool.assign_idle();
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->pod == 1u);
    CHECK(a->task == 5u);
    CHECK(b->pod == 0u);
    CHECK(b->task == 6u);
    CHECK_FALSE(pool.assign_idle());
  }
  SUBCASE("drained worker terminates after its task, task not requeued") {
    WorkerPool pool(spec);
    pool.add_worker(0);
    pool.enqueue(1);
    pool.enqueue(2);
    CHECK(pool.worker_free(0).run == 1u);
    auto removal = pool.remove_workers(1);
    CHECK(removal.remove_now.empty());
    CHECK(removal.drained == std::vector<PodIndex>{0});
    CHECK(pool.current_replicas() == 0);
    auto s = pool.worker_free(0);
    CHECK(s.terminate);
    CHECK_FALSE(s.run);
    CHECK(pool.queue_length() == 1);
  }
  SUBCASE("scale-down by 3 with 2 idle and 8 busy") {
    WorkerPool pool(spec);
    for (PodIndex p = 0; p < 10; ++p) pool.add_worker(p);
    for (TaskIndex t = 0; t < 8; ++t) pool.enqueue(t);
    for (PodIndex p = 0; p < 10; ++p) pool.worker_free(p);
    CHECK(pool.busy_workers() == 8);
    CHECK(pool.idle_workers() == 2);
    auto removal = pool.remove_workers(3);
    CHECK(removal.remove_now.size() == 2);
    CHECK(removal.drained.size() == 1);
    for (auto p : removal.remove_now) pool.forget(p);
    CHECK(pool.current_replicas() == 7);
    CHECK(pool.busy_workers() == 7);
  }
  SUBCASE("starting workers are removed before idle ones") {
    WorkerPool pool(spec);
    pool.add_worker(0);
    pool.worker_free(0);
    pool.add_worker(1);
    auto removal = pool.remove_workers(1);
    CHECK(removal.remove_now == std::vector<PodIndex>{1});
  }
}

TEST_CASE("worker pool executes sequentially and concurrently") {
  auto run_pool = [](int max_replicas) {
    WorkflowDag dag("pool", {task("a", "w", 2000), task("b", "w", 2000)});
    auto cfg = kwsim::testing::config_for(dag, kwsim::testing::small_cluster(1));
    PoolSpec p;
    p.task_type = "w";
    p.max_replicas = max_replicas;
    cfg.model.pools.push_back(p);
    return run(cfg);
  };
  SUBCASE("one worker: a then b") {
    auto r = run_pool(1);
    const auto t = events_of(r, TraceKind::TaskStarted).front().time_ms;
    CHECK(completion_of(r, "a") == t + 2000);
    CHECK(completion_of(r, "b") == t + 4000);
  }
  SUBCASE("two workers: a and b overlap") {
    auto r = run_pool(2);
    CHECK(completion_of(r, "a") == completion_of(r, "b"));
  }
}

TEST_CASE("clustering rules JSON") {
  auto rules = parse_clustering_rules(nlohmann::json::parse(R"([
    {"matchTask": ["mProject"], "size": 5, "timeoutMs": 3000},
    {"matchTask": ["mDiffFit"], "size": 20, "timeoutMs": 3000}])"),
                                      "model.clustering");
  REQUIRE(rules.size() == 2);
  CHECK(rules[1].size == 20);
  CHECK(rules[1].matches("mDiffFit"));
  CHECK(parse_clustering_rules(clustering_rules_to_json(rules), "x") == rules);
  try {
    parse_clustering_rules(nlohmann::json::parse(R"([{"matchTask":["a"],"size":0,"timeoutMs":1}])"), "model.clustering");
    FAIL("expected error");
  } catch (const ConfigError& e) {
    CHECK(e.path() == "model.clustering[0].size");
  }
}
