#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kwsim/export.hpp"
#include "kwsim/metrics.hpp"
#include "kwsim/scenario.hpp"
#include "kwsim/simulator.hpp"
#include "support.hpp"

using namespace kwsim;
using kwsim::testing::config_for;
using kwsim::testing::small_cluster;
using kwsim::testing::task;

namespace {

// Hand-built trace over tasks t0..t(n-1).
struct TraceBuilder {
  Trace trace;

  explicit TraceBuilder(int n) {
    for (int i = 0; i < n; ++i) {
      trace.task_ids.push_back("t" + std::to_string(i));
      trace.task_types.push_back(i == 0 ? "a" : "b");
    }
    trace.slot_capacity = 4;
    trace.total_cpu_m = 4000;
  }
  TraceBuilder& add(TimeMs t, TraceKind kind, int task) {
    TraceEvent e;
    e.time_ms = t;
    e.kind = kind;
    e.task = task;
    trace.events.push_back(e);
    return *this;
  }
  TraceBuilder& ran(int task, TimeMs ready, TimeMs start, TimeMs end) {
    // Callers add in time order per task; sort keeps the trace ordered.
    add(ready, TraceKind::TaskReady, task).add(start, TraceKind::TaskStarted, task).add(end, TraceKind::TaskCompleted, task);
    std::stable_sort(trace.events.begin(), trace.events.end(),
                     [](const TraceEvent& x, const TraceEvent& y) { return x.time_ms < y.time_ms; });
    return *this;
  }
};

std::int64_t total_runtime(const WorkflowDag& dag) {
  std::int64_t s = 0;
  for (const auto& t : dag.tasks()) s += t.runtime_ms;
  return s;
}

SimResult montage_run(bool pools) {
  SimConfig cfg;
  cfg.workflow = WorkflowSource::generated(MontageParams::defaults(16, 4));
  cfg.cluster = small_cluster(2);
  if (pools)
    for (auto t : {"mProject", "mDiffFit", "mBackground"}) {
      PoolSpec p;
      p.task_type = t;
      cfg.model.pools.push_back(p);
    }
  return run(cfg);
}

}  // namespace

TEST_CASE("makespan") {
  SUBCASE("single task") {
    auto r = run(config_for(WorkflowDag("one", {task("a", "x", 10000)}), small_cluster(1)));
    CHECK(makespan(r.trace) == 12000);
  }
  SUBCASE("serial chain with overhead") {
    WorkflowDag dag("chain", {task("a", "x", 10000), task("b", "x", 10000, {"a"})});
    CHECK(makespan(run(config_for(dag, small_cluster(1))).trace) == 24000);
  }
  SUBCASE("measured from the first ready event") {
    TraceBuilder b(2);
    b.ran(0, 500, 1000, 3000).ran(1, 3000, 3000, 7000);
    CHECK(makespan(b.trace) == 6500);
  }
  SUBCASE("empty trace") { CHECK_THROWS_AS(makespan(Trace{}), Error); }
  SUBCASE("incomplete trace") {
    TraceBuilder b(2);
    b.ran(0, 0, 0, 1000).add(1000, TraceKind::TaskReady, 1);
    CHECK_THROWS_AS(makespan(b.trace), Error);
  }
}

TEST_CASE("running series and window statistics") {
  TraceBuilder b(3);
  b.ran(0, 0, 0, 4000).ran(1, 0, 1000, 3000).ran(2, 0, 1000, 6000);
  const auto s = running_series(b.trace);
  CHECK(value_at(s, -1) == 0);
  CHECK(value_at(s, 0) == 1);
  CHECK(value_at(s, 1000) == 3);
  CHECK(value_at(s, 3500) == 2);
  CHECK(value_at(s, 5000) == 1);
  CHECK(value_at(s, 6000) == 0);
  CHECK(integral(s) == 4000 + 2000 + 5000);
  CHECK(mean_over(s, {0, 2000}) == doctest::Approx(2.0));
  CHECK(mean_over(s, {5000, 5000}) == 0.0);
  CHECK(time_at_or_above(s, 2, {0, 10000}) == 3000);
  CHECK(time_at_or_above(s, 3, {2000, 10000}) == 1000);
}

TEST_CASE("utilization_series") {
  SUBCASE("no overlap never exceeds one") {
    WorkflowDag dag("chain", {task("a", "x", 3000), task("b", "x", 3000, {"a"}), task("c", "x", 3000, {"b"})});
    auto r = run(config_for(dag, small_cluster(4)));
    std::int64_t peak = 0;
    for (const auto& u : utilization_series(r.trace, 500)) peak = std::max(peak, u.running_tasks);
    CHECK(peak == 1);
  }
  SUBCASE("68 concurrent tasks plateau at the cluster capacity") {
    std::vector<TaskSpec> tasks;
    for (int i = 0; i < 80; ++i) tasks.push_back(task("p" + std::to_string(i), "mProject", 10000));
    auto r = run(config_for(WorkflowDag("wide", tasks), small_cluster(17)));
    CHECK(r.trace.slot_capacity == 68);
    const auto u = utilization_series(r.trace, 1000);
    std::int64_t peak = 0;
    for (const auto& x : u) {
      peak = std::max(peak, x.running_tasks);
      CHECK(x.allocated_fraction >= 0.0);
      CHECK(x.allocated_fraction <= 1.0);
    }
    CHECK(peak == 68);
    CHECK(u[5].running_tasks == 68);
    CHECK(u[5].allocated_fraction == doctest::Approx(1.0));
  }
  SUBCASE("beyond the end is idle") {
    auto r = run(config_for(testing::diamond(), small_cluster(1)));
    const auto u = utilization_series(r.trace, 1000);
    CHECK(u.back().time_ms > r.trace.events.back().time_ms);
    CHECK(u.back().running_tasks == 0);
  }
  SUBCASE("step must be positive") { CHECK_THROWS_AS(utilization_series(Trace{}, 0), std::invalid_argument); }
}

TEST_CASE("stall_intervals") {
  SUBCASE("engineered back-off gap") {
    // a runs 2000..12000; b fails at 0 and is not retried before its 112 s
    // back-off, so nothing runs from 12000 until b starts at 112000 + 2000.
    WorkflowDag dag("gap", {task("a", "x", 10000), task("b", "x", 10000)});
    auto cfg = config_for(dag, small_cluster(1, 1000));
    cfg.cluster.backoff.initial_ms = 112000;
    auto r = run(cfg);
    const TimeMs start = 2000 + 10000, end = 112000 + 2000;
    const auto gaps = stall_intervals(r.trace, 60000);
    REQUIRE(gaps.size() == 1);
    CHECK(gaps[0] == Interval{start, end});
    CHECK(gaps[0].length() == 102000);
    CHECK(stall_intervals(r.trace, end - start + 1).empty());
  }
  SUBCASE("idle tail and idle waits without ready work are excluded") {
    TraceBuilder b(2);
    b.ran(0, 0, 0, 1000).ran(1, 500000, 500000, 501000);
    b.add(900000, TraceKind::ScaleDecision, kNone);
    CHECK(stall_intervals(b.trace, 1).empty());
  }
  SUBCASE("ready work waiting while nothing runs") {
    TraceBuilder b(2);
    b.ran(0, 0, 0, 1000).ran(1, 0, 90000, 91000);
    const auto gaps = stall_intervals(b.trace, 60000);
    REQUIRE(gaps.size() == 1);
    CHECK(gaps[0] == Interval{1000, 90000});
  }
  SUBCASE("near-stalls count low parallelism") {
    TraceBuilder b(3);
    b.ran(0, 0, 0, 100000).ran(1, 0, 0, 5000).ran(2, 0, 80000, 81000);
    CHECK(stall_intervals(b.trace, 60000).empty());
    const auto low = low_parallelism_intervals(b.trace, 1, 60000);
    REQUIRE(low.size() == 1);
    CHECK(low[0] == Interval{5000, 80000});
  }
  SUBCASE("min gap must be positive") { CHECK_THROWS_AS(stall_intervals(Trace{}, 0), std::invalid_argument); }
}

TEST_CASE("stage statistics and audit") {
  auto r = run(config_for(testing::diamond(), small_cluster(2)));
  const auto st = stage_statistics(r.trace);
  REQUIRE(st.size() == 3);
  CHECK(st[0].task_type == "a");
  CHECK(st[1].task_type == "b");
  CHECK(st[1].tasks == 2);
  CHECK(st[1].mean_runtime_ms() == doctest::Approx(1000));
  CHECK(r.audit.passed);
  CHECK(r.audit.tasks_completed == 4);

  auto broken = r.trace;
  const auto first_start = *std::find_if(broken.events.begin(), broken.events.end(),
                                         [](const TraceEvent& e) { return e.kind == TraceKind::TaskStarted; });
  broken.events.push_back(first_start);
  broken.events.back().time_ms = broken.events[broken.events.size() - 2].time_ms;
  CHECK_FALSE(audit_trace(broken, *r.dag).passed);
}

TEST_CASE("conservation and bounds on full runs") {
  for (bool pools : {false, true}) {
    CAPTURE(pools);
    const auto r = montage_run(pools);
    CHECK(integral(running_series(r.trace)) == total_runtime(*r.dag));
    CHECK(r.makespan_ms >= critical_path_ms(*r.dag));
    for (const auto& u : r.utilization) CHECK(u.running_tasks <= r.trace.slot_capacity);
  }
}

TEST_CASE("export") {
  const auto r = run(config_for(WorkflowDag("three", {task("a", "x", 1000), task("b", "y", 2000), task("c", "x", 1000, {"a"})}),
                                small_cluster(1)));
  const auto dir = std::filesystem::temp_directory_path() / "kwsim-test-export";
  std::filesystem::remove_all(dir);

  SUBCASE("CSV is byte-identical across exports") {
    export_result(r, ExportFormat::Csv, (dir / "a.csv").string());
    export_result(r, ExportFormat::Csv, (dir / "b.csv").string());
    auto slurp = [](const std::filesystem::path& p) {
      std::ifstream in(p);
      std::stringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    const auto a = slurp(dir / "a.csv");
    CHECK(a == slurp(dir / "b.csv"));
    CHECK(a == trace_csv(r.trace));
    CHECK(a.rfind(std::string(kCsvHeader), 0) == 0);
  }
  SUBCASE("gantt has one row per task") {
    const auto svg = render_gantt_svg(r.trace);
    std::size_t rows = 0;
    for (auto p = svg.find("<rect class=\"task\""); p != std::string::npos; p = svg.find("<rect class=\"task\"", p + 1)) ++rows;
    CHECK(rows == 3);
  }
  SUBCASE("JSON carries the makespan and every event") {
    const auto doc = result_to_json(r);
    CHECK(doc.at("makespan_ms") == r.makespan_ms);
    CHECK(doc.at("events").size() == r.trace.events.size());
  }
  SUBCASE("formats") {
    CHECK(parse_export_format("gantt-image") == ExportFormat::GanttImage);
    CHECK_THROWS_AS(parse_export_format("pdf"), ConfigError);
  }
  SUBCASE("unwritable path") {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "file") << "x";
    CHECK_THROWS_AS(export_result(r, ExportFormat::Json, (dir / "file" / "out.json").string()), IoError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("worker-pool reference run has no long stall") {
  const auto cfg = load_scenario_file(testing::source_path("scenarios/montage_workerpools.json"));
  REQUIRE(cfg.seed == 1);
  const auto r = run(cfg);
  CHECK(stall_intervals(r.trace, 60000).empty());
}
