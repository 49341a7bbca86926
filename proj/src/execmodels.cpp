#include "kwsim/execmodels.hpp"

#include <algorithm>
#include <set>

namespace kwsim {

using nlohmann::json;

const char* to_string(ExecutionMode mode) noexcept {
  switch (mode) {
    case ExecutionMode::Job: return "Job";
    case ExecutionMode::ClusteredJob: return "ClusteredJob";
    case ExecutionMode::WorkerPool: return "WorkerPool";
  }
  return "?";
}

ExecutionMode parse_execution_mode(std::string_view text, const std::string& path) {
  if (text == "Job") return ExecutionMode::Job;
  if (text == "ClusteredJob") return ExecutionMode::ClusteredJob;
  if (text == "WorkerPool") return ExecutionMode::WorkerPool;
  throw ConfigError(path, "unknown execution mode '" + std::string(text) + "' (expected Job, ClusteredJob or WorkerPool)");
}

bool ClusteringRule::matches(std::string_view type) const {
  return std::find(match_task.begin(), match_task.end(), type) != match_task.end();
}

json clustering_rules_to_json(std::span<const ClusteringRule> rules) {
  json out = json::array();
  for (const auto& r : rules) out.push_back({{"matchTask", r.match_task}, {"size", r.size}, {"timeoutMs", r.timeout_ms}});
  return out;
}

std::vector<ClusteringRule> parse_clustering_rules(const json& doc, const std::string& path) {
  if (!doc.is_array()) throw ConfigError(path, "expected a list of {matchTask, size, timeoutMs}");
  std::vector<ClusteringRule> rules;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto where = path + "[" + std::to_string(i) + "]";
    const auto& r = doc[i];
    if (!r.is_object()) throw ConfigError(where, "expected an object");
    ClusteringRule rule;
    auto m = r.find("matchTask");
    if (m == r.end() || !m->is_array() || m->empty()) throw ConfigError(where + ".matchTask", "required non-empty list of task types");
    for (const auto& t : *m) {
      if (!t.is_string()) throw ConfigError(where + ".matchTask", "task types must be strings");
      rule.match_task.push_back(t.get<std::string>());
    }
    auto s = r.find("size");
    if (s == r.end() || !s->is_number_integer() || s->get<int>() < 1) throw ConfigError(where + ".size", "required integer >= 1");
    rule.size = s->get<int>();
    auto t = r.find("timeoutMs");
    if (t == r.end() || !t->is_number_integer() || t->get<TimeMs>() < 0)
      throw ConfigError(where + ".timeoutMs", "required integer >= 0");
    rule.timeout_ms = t->get<TimeMs>();
    rules.push_back(std::move(rule));
  }
  return rules;
}

ExecutionModelConfig::Resolved ExecutionModelConfig::resolve(std::string_view task_type) const {
  auto find_pool = [&]() -> std::int32_t {
    for (std::size_t i = 0; i < pools.size(); ++i)
      if (pools[i].task_type == task_type) return static_cast<std::int32_t>(i);
    return kNone;
  };
  auto find_rule = [&]() -> std::int32_t {
    for (std::size_t i = 0; i < clustering.size(); ++i)
      if (clustering[i].matches(task_type)) return static_cast<std::int32_t>(i);
    return kNone;
  };

  const std::string type(task_type);
  std::optional<ExecutionMode> mode;
  if (auto it = modes.find(type); it != modes.end()) mode = it->second;
  else if (find_pool() != kNone) mode = ExecutionMode::WorkerPool;
  else if (find_rule() != kNone) mode = ExecutionMode::ClusteredJob;
  else mode = default_mode;

  if (!mode) throw ConfigError("model.modes." + type, "no execution mode for task type '" + type + "' and no default");

  Resolved r{*mode};
  if (*mode == ExecutionMode::ClusteredJob) {
    r.rule = find_rule();
    if (r.rule == kNone) throw ConfigError("model.clustering", "task type '" + type + "' is ClusteredJob but no rule matches it");
  } else if (*mode == ExecutionMode::WorkerPool) {
    r.pool = find_pool();
    if (r.pool == kNone) throw ConfigError("scaler.pools", "task type '" + type + "' is WorkerPool but has no pool spec");
  }
  return r;
}

void ExecutionModelConfig::validate(std::span<const std::string> task_types, const std::string& path) const {
  for (std::size_t i = 0; i < clustering.size(); ++i) {
    const auto where = path + ".clustering[" + std::to_string(i) + "]";
    if (clustering[i].size < 1) throw ConfigError(where + ".size", "must be >= 1");
    if (clustering[i].timeout_ms < 0) throw ConfigError(where + ".timeoutMs", "must be >= 0");
    if (clustering[i].match_task.empty()) throw ConfigError(where + ".matchTask", "must not be empty");
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < pools.size(); ++i) {
    const auto& p = pools[i];
    const auto where = "scaler.pools[" + std::to_string(i) + "]";
    if (p.task_type.empty()) throw ConfigError(where + ".type", "required");
    if (!seen.insert(p.task_type).second) throw ConfigError(where + ".type", "duplicate pool for '" + p.task_type + "'");
    if (p.cpu_m <= 0 || p.mem_mb <= 0) throw ConfigError(where, "worker requests must be > 0");
    if (p.creation_overhead_ms && *p.creation_overhead_ms < 0) throw ConfigError(where + ".overhead_ms", "must be >= 0");
    if (p.min_replicas < 0) throw ConfigError(where + ".min", "must be >= 0");
    if (p.max_replicas < p.min_replicas) throw ConfigError(where + ".max", "must be >= min");
  }
  if (dequeue_latency_ms < 0) throw ConfigError(path + ".dequeue_latency_ms", "must be >= 0");
  for (const auto& t : task_types) resolve(t);
}

DispatchAction dispatch_ready(TaskIndex task, std::string_view task_type, const ExecutionModelConfig& model) {
  const auto r = model.resolve(task_type);
  return DispatchAction{r.mode, task, r.rule, r.pool};
}

// --- clustering --------------------------------------------------------------

BatchBuffer::BatchBuffer(ClusteringRule rule, std::string task_type)
    : rule_(std::move(rule)), task_type_(std::move(task_type)) {
  if (rule_.size < 1) throw std::invalid_argument("clustering size must be >= 1");
}

Batch BatchBuffer::take(TimeMs now) {
  Batch b{std::move(pending_), task_type_, now};
  pending_.clear();
  ++generation_;
  return b;
}

BatchBuffer::Arrival BatchBuffer::push(TaskIndex task, TimeMs now) {
  Arrival a;
  const bool opened = pending_.empty();
  pending_.push_back(task);
  if (pending_.size() >= static_cast<std::size_t>(rule_.size)) {
    a.emitted = take(now);
  } else if (opened) {
    a.arm_timeout_at = now + rule_.timeout_ms;
  }
  a.generation = generation_;
  return a;
}

std::optional<Batch> BatchBuffer::on_timeout(std::uint64_t generation, TimeMs now) {
  if (generation != generation_ || pending_.empty()) return std::nullopt;
  return take(now);
}

std::vector<TimeMs> batch_completion_offsets(std::span<const TimeMs> runtimes) {
  std::vector<TimeMs> out;
  out.reserve(runtimes.size());
  TimeMs acc = 0;
  for (auto r : runtimes) out.push_back(acc += r);
  return out;
}

// --- worker pools ------------------------------------------------------------

WorkerPool::Worker& WorkerPool::at(PodIndex pod) {
  auto it = std::find_if(workers_.begin(), workers_.end(), [&](const Worker& w) { return w.pod == pod; });
  if (it == workers_.end()) throw std::logic_error("pod is not a worker of pool " + spec_.task_type);
  return *it;
}

const WorkerPool::Worker* WorkerPool::worker(PodIndex pod) const {
  auto it = std::find_if(workers_.begin(), workers_.end(), [&](const Worker& w) { return w.pod == pod; });
  return it == workers_.end() ? nullptr : &*it;
}

void WorkerPool::add_worker(PodIndex pod) {
  Worker w;
  w.pod = pod;
  workers_.push_back(w);
}

WorkerPool::Step WorkerPool::worker_free(PodIndex pod) {
  auto& w = at(pod);
  w.current.reset();
  if (w.draining) {
    forget(pod);
    return Step{std::nullopt, true};
  }
  if (!queue_.empty()) {
    w.phase = WorkerPhase::Busy;
    w.current = queue_.front();
    queue_.pop_front();
    return Step{w.current, false};
  }
  w.phase = WorkerPhase::Idle;
  idle_.push_back(pod);
  return Step{};
}

std::optional<WorkerPool::Assignment> WorkerPool::assign_idle() {
  if (queue_.empty() || idle_.empty()) return std::nullopt;
  const PodIndex pod = idle_.front();
  idle_.pop_front();
  auto& w = at(pod);
  w.phase = WorkerPhase::Busy;
  w.current = queue_.front();
  queue_.pop_front();
  return Assignment{pod, *w.current};
}

WorkerPool::Removal WorkerPool::remove_workers(std::int64_t count) {
  Removal out;
  auto take_phase = [&](WorkerPhase phase) {
    for (auto it = workers_.rbegin(); it != workers_.rend() && count > 0; ++it) {
      if (it->draining || it->phase != phase) continue;
      out.remove_now.push_back(it->pod);
      --count;
    }
  };
  take_phase(WorkerPhase::Starting);
  take_phase(WorkerPhase::Idle);
  for (auto pod : out.remove_now) forget(pod);
  for (auto it = workers_.rbegin(); it != workers_.rend() && count > 0; ++it) {
    if (it->draining || it->phase != WorkerPhase::Busy) continue;
    it->draining = true;
    out.drained.push_back(it->pod);
    --count;
  }
  return out;
}

void WorkerPool::forget(PodIndex pod) {
  workers_.erase(std::remove_if(workers_.begin(), workers_.end(), [&](const Worker& w) { return w.pod == pod; }), workers_.end());
  idle_.erase(std::remove(idle_.begin(), idle_.end(), pod), idle_.end());
}

std::int64_t WorkerPool::busy_workers() const {
  return std::count_if(workers_.begin(), workers_.end(), [](const Worker& w) { return !w.draining && w.phase == WorkerPhase::Busy; });
}

std::int64_t WorkerPool::idle_workers() const {
  return std::count_if(workers_.begin(), workers_.end(), [](const Worker& w) { return w.phase == WorkerPhase::Idle; });
}

std::int64_t WorkerPool::current_replicas() const {
  return std::count_if(workers_.begin(), workers_.end(), [](const Worker& w) { return !w.draining; });
}

}  // namespace kwsim
