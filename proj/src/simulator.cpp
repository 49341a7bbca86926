#include "kwsim/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <queue>
#include <thread>
#include <tuple>

namespace kwsim {

WorkflowSource WorkflowSource::inline_dag(WorkflowDag dag) {
  WorkflowSource s;
  s.kind = Kind::Inline;
  s.dag = std::make_shared<const WorkflowDag>(std::move(dag));
  return s;
}

WorkflowSource WorkflowSource::file(std::string path) {
  WorkflowSource s;
  s.kind = Kind::File;
  s.path = std::move(path);
  return s;
}

WorkflowSource WorkflowSource::generated(MontageParams params) {
  WorkflowSource s;
  s.kind = Kind::Montage;
  s.montage = std::move(params);
  return s;
}

std::shared_ptr<const WorkflowDag> materialize_workflow(const SimConfig& config) {
  const auto& src = config.workflow;
  switch (src.kind) {
    case WorkflowSource::Kind::Inline:
      if (!src.dag) throw ConfigError("workflow", "no workflow given");
      return src.dag;
    case WorkflowSource::Kind::File:
      if (src.dag) return src.dag;
      return std::make_shared<const WorkflowDag>(load_workflow_file(src.path));
    case WorkflowSource::Kind::Montage: {
      auto params = src.montage.value();
      params.seed = config.seed;
      return std::make_shared<const WorkflowDag>(generate_montage(params));
    }
  }
  throw ConfigError("workflow", "unknown workflow source");
}

namespace {

enum class EventKind : std::uint8_t {
  TaskReady,
  PodAdmitted,
  SchedulePass,
  PodCreated,
  TaskStarted,
  TaskCompleted,
  BatchTimeout,
  PodCompleted,
  ScalerTick,
  BackoffExpired,
};

struct Event {
  TimeMs time = 0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::TaskReady;
  std::uint32_t a = 0;
  std::uint64_t b = 0;

  bool operator>(const Event& o) const { return std::tie(time, seq) > std::tie(o.time, o.seq); }
};

// What a pod executes: a sequential batch (job pods are batches of one) or a
// worker loop bound to a pool.
struct PodWork {
  std::vector<TaskIndex> tasks;
  std::size_t next = 0;
  std::int32_t pool = kNone;
};

enum class TaskPhase : std::uint8_t { Blocked, Waiting, Running, Done };

class Engine {
 public:
  Engine(const SimConfig& cfg, std::shared_ptr<const WorkflowDag> dag);
  SimResult run();

 private:
  void schedule(TimeMs t, EventKind k, std::uint32_t a = 0, std::uint64_t b = 0) {
    queue_.push(Event{t, seq_++, k, a, b});
  }
  void record(TraceKind kind, std::int32_t task, std::int32_t pod, std::int32_t pool, std::int32_t node,
              std::array<std::int64_t, 4> detail = {}) {
    trace_.events.push_back(TraceEvent{now_, kind, task, pod, pool, node, detail});
  }

  void handle(const Event& ev);
  void on_task_ready(TaskIndex task);
  void on_task_completed(TaskIndex task, PodIndex pod);
  void on_pod_created(PodIndex pod);
  void on_scaler_tick();

  PodIndex submit(PodWork work, Resources req, TimeMs overhead);
  void submit_batch(const std::vector<TaskIndex>& tasks);
  void request_pass();
  void apply(const std::vector<Placement>& placements);
  void finish_pod(PodIndex pod, bool terminated);
  void begin_task(PodIndex pod, TaskIndex task);
  void worker_step(PodIndex pod, const WorkerPool::Step& step);
  void audit_cluster();

  std::int32_t node_of(PodIndex pod) const { return cluster_.status(pod).node; }
  [[noreturn]] void deadlock(const std::string& why);

  const SimConfig& cfg_;
  std::shared_ptr<const WorkflowDag> dag_;
  ClusterState cluster_;
  std::vector<ExecutionModelConfig::Resolved> resolved_;  // per task
  std::vector<std::int32_t> buffer_of_;                   // per task, ClusteredJob only
  std::vector<BatchBuffer> buffers_;
  std::vector<WorkerPool> pools_;
  std::optional<Autoscaler> scaler_;
  Resources slot_;

  std::vector<std::uint32_t> blocked_parents_;
  std::vector<TaskPhase> phase_;
  std::vector<std::int32_t> task_pod_;
  std::size_t done_ = 0;
  std::vector<PodWork> work_;

  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  std::optional<TimeMs> pass_queued_at_;
  TimeMs now_ = 0;
  std::size_t processed_ = 0;
  Trace trace_;
};

Engine::Engine(const SimConfig& cfg, std::shared_ptr<const WorkflowDag> dag)
    : cfg_(cfg), dag_(std::move(dag)), cluster_(cfg.cluster) {
  if (dag_->size() == 0) throw ConfigError("workflow", "workflow has no tasks");
  if (cfg_.engine_latency_ms < 0) throw ConfigError("engine_latency_ms", "must be >= 0");
  if (cfg_.max_sim_time_ms <= 0) throw ConfigError("max_sim_time_ms", "must be > 0");
  const auto types = dag_->task_types();
  cfg_.model.validate(types);
  if (!cfg_.model.pools.empty()) cfg_.scaler.validate();

  std::map<std::string, ExecutionModelConfig::Resolved> by_type;
  std::map<std::string, std::int32_t> buffer_by_type;
  for (const auto& t : types) {
    const auto r = cfg_.model.resolve(t);
    by_type.emplace(t, r);
    if (r.mode == ExecutionMode::ClusteredJob) {
      buffer_by_type.emplace(t, static_cast<std::int32_t>(buffers_.size()));
      buffers_.emplace_back(cfg_.model.clustering.at(static_cast<std::size_t>(r.rule)), t);
    }
  }

  const auto n = dag_->size();
  resolved_.reserve(n);
  buffer_of_.assign(n, kNone);
  blocked_parents_.resize(n);
  phase_.assign(n, TaskPhase::Blocked);
  task_pod_.assign(n, kNone);
  for (TaskIndex i = 0; i < n; ++i) {
    const auto& type = dag_->task(i).type;
    resolved_.push_back(by_type.at(type));
    if (auto it = buffer_by_type.find(type); it != buffer_by_type.end()) buffer_of_[i] = it->second;
    blocked_parents_[i] = static_cast<std::uint32_t>(dag_->parents_of(i).size());
  }

  for (const auto& spec : cfg_.model.pools) {
    pools_.emplace_back(spec);
    slot_.cpu_m = std::max(slot_.cpu_m, spec.cpu_m);
    slot_.mem_mb = std::max(slot_.mem_mb, spec.mem_mb);
  }
  if (!pools_.empty()) scaler_.emplace(cfg_.scaler, pools_.size());

  for (const auto& t : dag_->tasks()) {
    trace_.task_ids.push_back(t.id);
    trace_.task_types.push_back(t.type);
  }
  for (const auto& p : pools_) trace_.pool_names.push_back(p.spec().task_type);
  for (const auto& node : cluster_.nodes()) trace_.node_ids.push_back(node.id);
  trace_.total_cpu_m = cluster_.total_capacity().cpu_m;

  // Slot capacity in units of the most common task request.
  std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> freq;
  for (const auto& t : dag_->tasks()) ++freq[{t.cpu_request_m, t.mem_request_mb}];
  const auto typical = std::max_element(freq.begin(), freq.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
  for (const auto& node : cluster_.nodes())
    trace_.slot_capacity += std::min(node.cpu_capacity_m / typical.first, node.mem_capacity_mb / typical.second);
}

SimResult Engine::run() {
  for (TaskIndex i = 0; i < dag_->size(); ++i)
    if (blocked_parents_[i] == 0) schedule(0, EventKind::TaskReady, i);
  if (scaler_) schedule(0, EventKind::ScalerTick);

  while (!queue_.empty() && done_ < dag_->size()) {
    const Event ev = queue_.top();
    queue_.pop();
    now_ = ev.time;
    if (now_ > cfg_.max_sim_time_ms) deadlock("simulated time exceeded max_sim_time_ms");
    ++processed_;
    handle(ev);
  }
  if (done_ < dag_->size()) deadlock("no events left");
  // Pods whose last task just finished still complete at the final instant.
  while (!queue_.empty() && queue_.top().time == now_ && queue_.top().kind == EventKind::PodCompleted) {
    const Event ev = queue_.top();
    queue_.pop();
    ++processed_;
    handle(ev);
  }

  SimResult r;
  r.name = cfg_.name;
  r.dag = dag_;
  for (std::size_t p = 0; p < work_.size(); ++p) trace_.pod_ids.push_back("pod-" + std::to_string(p));
  r.trace = std::move(trace_);
  r.makespan_ms = makespan(r.trace);
  r.utilization = utilization_series(r.trace, 1000);
  r.stages = stage_statistics(r.trace);
  r.audit = audit_trace(r.trace, *dag_);
  r.trace_hash = trace_hash(r.trace);
  r.pods_created = work_.size();
  r.events_processed = processed_;
  return r;
}

void Engine::handle(const Event& ev) {
  switch (ev.kind) {
    case EventKind::TaskReady: on_task_ready(ev.a); break;
    case EventKind::PodAdmitted:
    case EventKind::BackoffExpired: request_pass(); break;
    case EventKind::SchedulePass:
      pass_queued_at_.reset();
      apply(cluster_.schedule_pass(now_));
      audit_cluster();
      break;
    case EventKind::PodCreated: on_pod_created(ev.a); break;
    case EventKind::TaskStarted: begin_task(static_cast<PodIndex>(ev.b), ev.a); break;
    case EventKind::TaskCompleted: on_task_completed(ev.a, static_cast<PodIndex>(ev.b)); break;
    case EventKind::BatchTimeout:
      if (auto batch = buffers_.at(ev.a).on_timeout(ev.b, now_)) submit_batch(batch->tasks);
      break;
    case EventKind::PodCompleted: finish_pod(ev.a, false); break;
    case EventKind::ScalerTick: on_scaler_tick(); break;
  }
}

void Engine::on_task_ready(TaskIndex task) {
  phase_[task] = TaskPhase::Waiting;
  record(TraceKind::TaskReady, static_cast<std::int32_t>(task), kNone, kNone, kNone);
  const auto& r = resolved_[task];
  switch (r.mode) {
    case ExecutionMode::Job: submit_batch({task}); break;
    case ExecutionMode::ClusteredJob: {
      auto& buf = buffers_[static_cast<std::size_t>(buffer_of_[task])];
      auto arrival = buf.push(task, now_);
      if (arrival.emitted) submit_batch(arrival.emitted->tasks);
      if (arrival.arm_timeout_at)
        schedule(*arrival.arm_timeout_at, EventKind::BatchTimeout, static_cast<std::uint32_t>(buffer_of_[task]), arrival.generation);
      break;
    }
    case ExecutionMode::WorkerPool: {
      auto& pool = pools_[static_cast<std::size_t>(r.pool)];
      pool.enqueue(task);
      while (auto a = pool.assign_idle()) worker_step(a->pod, WorkerPool::Step{a->task, false});
      break;
    }
  }
}

PodIndex Engine::submit(PodWork work, Resources req, TimeMs overhead) {
  const auto index = static_cast<PodIndex>(work_.size());
  const auto pool = work.pool;
  const auto ntasks = static_cast<std::int64_t>(work.tasks.size());
  work_.push_back(std::move(work));
  cluster_.submit_pod(PodSpec{"pod-" + std::to_string(index), req.cpu_m, req.mem_mb, overhead, index, pool}, now_);
  record(TraceKind::PodSubmitted, kNone, static_cast<std::int32_t>(index), pool, kNone, {ntasks, req.cpu_m});
  schedule(cluster_.status(index).eligible_at_ms, EventKind::PodAdmitted, index);
  return index;
}

void Engine::submit_batch(const std::vector<TaskIndex>& tasks) {
  Resources req;
  for (auto t : tasks) {
    req.cpu_m = std::max(req.cpu_m, dag_->task(t).cpu_request_m);
    req.mem_mb = std::max(req.mem_mb, dag_->task(t).mem_request_mb);
  }
  const auto pod = submit(PodWork{tasks, 0, kNone}, req, cfg_.cluster.pod_overhead_ms);
  for (auto t : tasks) task_pod_[t] = static_cast<std::int32_t>(pod);
}

void Engine::request_pass() {
  if (pass_queued_at_ == now_) return;
  pass_queued_at_ = now_;
  schedule(now_, EventKind::SchedulePass);
}

void Engine::apply(const std::vector<Placement>& placements) {
  for (const auto& p : placements) {
    const auto pod = static_cast<std::int32_t>(p.pod);
    const auto pool = work_[p.pod].pool;
    switch (p.kind) {
      case Placement::Kind::Placed:
        record(TraceKind::PodScheduled, kNone, pod, pool, p.node, {p.attempts, cluster_.spec(p.pod).cpu_request_m});
        schedule(p.running_at_ms, EventKind::PodCreated, p.pod);
        break;
      case Placement::Kind::Deferred:
        record(TraceKind::PodPending, kNone, pod, pool, kNone, {p.attempts, p.next_eligible_ms});
        schedule(p.next_eligible_ms, EventKind::BackoffExpired, p.pod);
        break;
      case Placement::Kind::Unschedulable:
        record(TraceKind::PodUnschedulable, kNone, pod, pool, kNone, {p.attempts});
        if (pool != kNone) pools_[static_cast<std::size_t>(pool)].forget(p.pod);
        break;
    }
  }
}

void Engine::audit_cluster() {
  if (cfg_.check_invariants) cluster_.check_invariants(now_);
}

void Engine::on_pod_created(PodIndex pod) {
  if (cluster_.status(pod).phase != PodPhase::Creating) return;  // removed while starting
  cluster_.mark_running(pod, now_);
  auto& w = work_[pod];
  record(TraceKind::PodCreated, kNone, static_cast<std::int32_t>(pod), w.pool, node_of(pod));
  if (w.pool != kNone) {
    worker_step(pod, pools_[static_cast<std::size_t>(w.pool)].worker_free(pod));
  } else {
    begin_task(pod, w.tasks.front());
  }
}

void Engine::worker_step(PodIndex pod, const WorkerPool::Step& step) {
  if (step.terminate) {
    finish_pod(pod, true);
  } else if (step.run) {
    task_pod_[*step.run] = static_cast<std::int32_t>(pod);
    if (cfg_.model.dequeue_latency_ms > 0)
      schedule(now_ + cfg_.model.dequeue_latency_ms, EventKind::TaskStarted, *step.run, pod);
    else
      begin_task(pod, *step.run);
  }
}

void Engine::begin_task(PodIndex pod, TaskIndex task) {
  phase_[task] = TaskPhase::Running;
  record(TraceKind::TaskStarted, static_cast<std::int32_t>(task), static_cast<std::int32_t>(pod), work_[pod].pool, node_of(pod));
  schedule(now_ + dag_->task(task).runtime_ms, EventKind::TaskCompleted, task, pod);
}

void Engine::on_task_completed(TaskIndex task, PodIndex pod) {
  phase_[task] = TaskPhase::Done;
  ++done_;
  auto& w = work_[pod];
  record(TraceKind::TaskCompleted, static_cast<std::int32_t>(task), static_cast<std::int32_t>(pod), w.pool, node_of(pod));
  for (auto c : dag_->children_of(task))
    if (--blocked_parents_[c] == 0) schedule(now_ + cfg_.engine_latency_ms, EventKind::TaskReady, c);

  if (w.pool != kNone) {
    worker_step(pod, pools_[static_cast<std::size_t>(w.pool)].worker_free(pod));
  } else if (++w.next < w.tasks.size()) {
    begin_task(pod, w.tasks[w.next]);
  } else {
    schedule(now_, EventKind::PodCompleted, pod);
  }
}

void Engine::finish_pod(PodIndex pod, bool terminated) {
  const bool held = cluster_.status(pod).allocated();
  const auto node = node_of(pod);
  const auto cpu = cluster_.spec(pod).cpu_request_m;
  Release rel = terminated ? cluster_.terminate_pod(pod, now_) : cluster_.complete_pod(pod, now_);
  record(terminated ? TraceKind::PodTerminated : TraceKind::PodCompleted, kNone, static_cast<std::int32_t>(pod), work_[pod].pool,
         held ? node : kNone, {held ? 1 : 0, held ? cpu : 0});
  apply(rel.placements);
  if (held) audit_cluster();
}

void Engine::on_scaler_tick() {
  std::vector<PoolMetrics> metrics;
  metrics.reserve(pools_.size());
  for (std::size_t i = 0; i < pools_.size(); ++i) {
    const auto& p = pools_[i];
    metrics.push_back(PoolMetrics{static_cast<std::int32_t>(i), static_cast<std::int64_t>(p.queue_length()), p.busy_workers(),
                                  p.current_replicas(), p.spec().min_replicas, p.spec().max_replicas});
  }
  const auto slots = cluster_.free_slots(slot_, /*exclude_pools=*/true);
  const auto decisions = scaler_->decide(now_, metrics, slots);

  bool acted = false;
  bool shrinking = false;
  for (const auto& d : decisions) {
    if (d.scale_down == 0) continue;
    acted = true;
    auto& pool = pools_[static_cast<std::size_t>(d.pool)];
    const auto removal = pool.remove_workers(d.scale_down);
    for (auto pod : removal.remove_now) finish_pod(pod, true);
    for (auto pod : removal.drained) record(TraceKind::WorkerDrain, kNone, static_cast<std::int32_t>(pod), d.pool, node_of(pod));
  }

  std::int64_t unplaced = 0;
  std::vector<std::int64_t> wanted;
  for (std::size_t i = 0; i < pools_.size(); ++i) {
    for (const auto& w : pools_[i].workers()) {
      const auto phase = cluster_.status(w.pod).phase;
      if (phase == PodPhase::Submitted || phase == PodPhase::Pending) ++unplaced;
    }
    wanted.push_back(std::max<std::int64_t>(0, decisions[i].target - pools_[i].current_replicas()));
    if (decisions[i].target < pools_[i].current_replicas()) shrinking = true;
  }
  const auto grants = grant_scale_up(wanted, cluster_.free_slots(slot_) - unplaced);

  for (std::size_t i = 0; i < pools_.size(); ++i) {
    auto& pool = pools_[i];
    const auto overhead = pool.spec().creation_overhead_ms.value_or(cfg_.cluster.pod_overhead_ms);
    for (std::int64_t k = 0; k < grants[i]; ++k) {
      acted = true;
      pool.add_worker(submit(PodWork{{}, 0, static_cast<std::int32_t>(i)}, {pool.spec().cpu_m, pool.spec().mem_mb}, overhead));
    }
    const auto& d = decisions[i];
    record(TraceKind::ScaleDecision, kNone, kNone, static_cast<std::int32_t>(i), kNone,
           {d.demand, d.target, d.stabilized, pool.current_replicas()});
  }

  // Nothing else can happen: no pending event, no action now and no
  // scale-down waiting for its window.
  if (!acted && !shrinking && queue_.empty()) deadlock("worker pools cannot make progress");
  schedule(now_ + scaler_->config().interval_ms, EventKind::ScalerTick);
}

void Engine::deadlock(const std::string& why) {
  std::vector<std::string> stuck;
  for (TaskIndex t = 0; t < dag_->size(); ++t) {
    if (phase_[t] == TaskPhase::Done) continue;
    std::string state;
    switch (phase_[t]) {
      case TaskPhase::Blocked: state = "blocked on parents"; break;
      case TaskPhase::Running: state = "running"; break;
      default: state = "waiting";
    }
    if (task_pod_[t] != kNone) {
      const auto pod = static_cast<PodIndex>(task_pod_[t]);
      state += " in pod-" + std::to_string(pod) + " (" + to_string(cluster_.status(pod).phase) + ")";
    } else if (resolved_[t].mode == ExecutionMode::WorkerPool) {
      state += " in queue of pool " + dag_->task(t).type;
    }
    stuck.push_back(dag_->task(t).id + ": " + state);
  }
  std::string msg = "deadlock at t=" + std::to_string(now_) + " ms (" + why + "); " + std::to_string(stuck.size()) + " task(s) stuck";
  for (std::size_t i = 0; i < stuck.size() && i < 5; ++i) msg += (i ? "; " : ": ") + stuck[i];
  if (stuck.size() > 5) msg += "; ...";
  throw SimulationError(msg, std::move(stuck));
}

}  // namespace

SimResult run(const SimConfig& config) {
  auto dag = materialize_workflow(config);
  Engine engine(config, std::move(dag));
  return engine.run();
}

std::vector<SuiteEntry> run_suite(const std::vector<SimConfig>& configs, unsigned threads) {
  std::vector<SuiteEntry> out(configs.size());
  auto one = [&](std::size_t i) {
    auto& e = out[i];
    e.name = configs[i].name;
    try {
      e.result = run(configs[i]);
    } catch (const ConfigError& ex) {
      e.error = ex.what();
      e.error_code = 2;
    } catch (const SimulationError& ex) {
      e.error = ex.what();
      e.error_code = 3;
    } catch (const IoError& ex) {
      e.error = ex.what();
      e.error_code = 4;
    } catch (const std::exception& ex) {
      e.error = ex.what();
      e.error_code = 3;
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(configs.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < configs.size(); ++i) one(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  for (unsigned t = 0; t < threads; ++t)
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < configs.size(); i = next++) one(i);
    });
  for (auto& w : workers) w.join();
  return out;
}

}  // namespace kwsim
