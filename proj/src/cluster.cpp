#include "kwsim/cluster.hpp"

#include <algorithm>
#include <cmath>

namespace kwsim {

TimeMs BackoffPolicy::delay(int attempts) const {
  if (attempts < 1) throw std::invalid_argument("backoff attempts must be >= 1");
  long double d = static_cast<long double>(initial_ms);
  for (int k = 1; k < attempts; ++k) {
    d *= factor;
    if (d >= static_cast<long double>(cap_ms)) return cap_ms;
  }
  return std::min<TimeMs>(cap_ms, std::llround(static_cast<double>(d)));
}

void BackoffPolicy::validate(const std::string& path) const {
  if (initial_ms <= 0) throw ConfigError(path + ".initial_ms", "must be > 0");
  if (!(factor >= 1.0)) throw ConfigError(path + ".factor", "must be >= 1");
  if (cap_ms < initial_ms) throw ConfigError(path + ".cap_ms", "must be >= initial_ms");
}

std::vector<NodeSpec> ClusterConfig::nodes() const {
  std::vector<NodeSpec> out;
  out.reserve(static_cast<std::size_t>(node_count));
  for (int i = 0; i < node_count; ++i) out.push_back({"node-" + std::to_string(i), node_cpu_m, node_mem_mb});
  return out;
}

void ClusterConfig::validate(const std::string& path) const {
  if (node_count <= 0) throw ConfigError(path + ".nodes.count", "must be > 0");
  if (node_cpu_m <= 0) throw ConfigError(path + ".nodes.cpu_m", "must be > 0");
  if (node_mem_mb <= 0) throw ConfigError(path + ".nodes.mem_mb", "must be > 0");
  backoff.validate(path + ".backoff");
  if (admission.rate_per_s < 0) throw ConfigError(path + ".admission.rate_per_s", "must be >= 0");
  if (admission.rate_per_s > 0 && admission.burst < 1) throw ConfigError(path + ".admission.burst", "must be >= 1");
  if (pod_overhead_ms < 0) throw ConfigError(path + ".pod_overhead_ms", "must be >= 0");
}

// --- admission ---------------------------------------------------------------

namespace {
constexpr std::int64_t kTokenUnit = 1000;
}

TokenBucket::TokenBucket(AdmissionConfig cfg) : cfg_(cfg), level_(cfg.burst * kTokenUnit) {}

TimeMs TokenBucket::acquire(TimeMs now) {
  if (cfg_.rate_per_s == 0) return now;
  const std::int64_t cap = cfg_.burst * kTokenUnit;
  TimeMs t = std::max(now, last_);
  level_ = std::min(cap, level_ + (t - last_) * cfg_.rate_per_s);
  if (level_ < kTokenUnit) {
    const TimeMs wait = (kTokenUnit - level_ + cfg_.rate_per_s - 1) / cfg_.rate_per_s;
    t += wait;
    level_ = std::min(cap, level_ + wait * cfg_.rate_per_s);
  }
  level_ -= kTokenUnit;
  last_ = t;
  return t;
}

// --- cluster -----------------------------------------------------------------

const char* to_string(PodPhase phase) noexcept {
  switch (phase) {
    case PodPhase::Submitted: return "Submitted";
    case PodPhase::Pending: return "Pending";
    case PodPhase::Creating: return "Creating";
    case PodPhase::Running: return "Running";
    case PodPhase::Succeeded: return "Succeeded";
    case PodPhase::Terminated: return "Terminated";
    case PodPhase::Unschedulable: return "Unschedulable";
  }
  return "?";
}

ClusterState::ClusterState(ClusterConfig cfg)
    : cfg_(std::move(cfg)), nodes_(cfg_.nodes()), admission_(cfg_.admission) {
  cfg_.validate();
  allocated_.assign(nodes_.size(), Resources{});
  pool_allocated_.assign(nodes_.size(), Resources{});
}

PodIndex ClusterState::submit_pod(PodSpec spec, TimeMs now) {
  if (spec.cpu_request_m <= 0 || spec.mem_request_mb <= 0)
    throw std::invalid_argument("pod '" + spec.id + "' must request positive cpu and memory");
  if (spec.creation_overhead_ms < 0) throw std::invalid_argument("pod '" + spec.id + "' has negative overhead");
  const auto index = static_cast<PodIndex>(specs_.size());
  if (!by_id_.emplace(spec.id, index).second) throw std::invalid_argument("duplicate pod id '" + spec.id + "'");

  PodStatus st;
  st.eligible_at_ms = admission_.acquire(now);
  specs_.push_back(std::move(spec));
  status_.push_back(st);
  failed_at_release_.push_back(0);
  ++waiting_count_;
  enqueue_waiting(index, st.eligible_at_ms);
  return index;
}

void ClusterState::enqueue_waiting(PodIndex pod, TimeMs at) { waiting_.emplace(at, pod); }

void ClusterState::promote_due(TimeMs now) {
  while (!waiting_.empty() && waiting_.top().first <= now) {
    auto [at, pod] = waiting_.top();
    waiting_.pop();
    const auto& st = status_[pod];
    if (st.phase == PodPhase::Submitted && st.eligible_at_ms == at) eligible_.insert(pod);
    if (st.phase == PodPhase::Pending && st.eligible_at_ms == at) {
      // Back-off is a minimum wait: a pod that failed is only retried once
      // something has been released since.
      if (releases_ > failed_at_release_[pod]) eligible_.insert(pod);
      else parked_.insert(pod);
    }
  }
}

Placement ClusterState::try_place(PodIndex pod, TimeMs now) {
  auto& st = status_.at(pod);
  const auto& spec = specs_[pod];
  if (st.phase != PodPhase::Submitted && st.phase != PodPhase::Pending)
    throw std::logic_error("pod '" + spec.id + "' is " + to_string(st.phase) + ", not schedulable");
  if (st.eligible_at_ms > now) throw std::logic_error("pod '" + spec.id + "' is not eligible yet");
  eligible_.erase(pod);
  parked_.erase(pod);

  const Resources req = spec.requests();
  Placement out{pod};

  const bool feasible = std::any_of(nodes_.begin(), nodes_.end(), [&](const NodeSpec& n) { return req.fits_in(n.capacity()); });
  if (!feasible) {
    st.phase = PodPhase::Unschedulable;
    --waiting_count_;
    out.kind = Placement::Kind::Unschedulable;
    out.attempts = st.attempts;
    return out;
  }

  // Least-allocated spreading: most free cpu after placement, lowest index on ties.
  std::int32_t best = kNone;
  std::int64_t best_free = -1;
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    const Resources free = nodes_[n].capacity() - allocated_[n];
    if (!req.fits_in(free)) continue;
    const auto after = free.cpu_m - req.cpu_m;
    if (after > best_free) {
      best_free = after;
      best = static_cast<std::int32_t>(n);
    }
  }

  if (best == kNone) {
    ++st.attempts;
    st.phase = PodPhase::Pending;
    st.eligible_at_ms = now + cfg_.backoff.delay(st.attempts);
    failed_at_release_[pod] = releases_;
    enqueue_waiting(pod, st.eligible_at_ms);
    out.kind = Placement::Kind::Deferred;
    out.attempts = st.attempts;
    out.next_eligible_ms = st.eligible_at_ms;
    return out;
  }

  allocated_[static_cast<std::size_t>(best)] += req;
  if (spec.pool != kNone) pool_allocated_[static_cast<std::size_t>(best)] += req;
  st.phase = PodPhase::Creating;
  st.node = best;
  st.running_at_ms = now + spec.creation_overhead_ms;
  --waiting_count_;
  out.kind = Placement::Kind::Placed;
  out.node = best;
  out.attempts = st.attempts;
  out.running_at_ms = st.running_at_ms;
  return out;
}

std::vector<Placement> ClusterState::schedule_pass(TimeMs now) {
  promote_due(now);
  std::vector<Placement> out;
  if (eligible_.empty()) return out;
  const std::vector<PodIndex> batch(eligible_.begin(), eligible_.end());
  out.reserve(batch.size());
  for (auto pod : batch) out.push_back(try_place(pod, now));
  return out;
}

void ClusterState::mark_running(PodIndex pod, TimeMs now) {
  auto& st = status_.at(pod);
  if (st.phase != PodPhase::Creating) throw std::logic_error("pod '" + specs_[pod].id + "' is not Creating");
  if (now < st.running_at_ms) throw std::logic_error("pod '" + specs_[pod].id + "' is still being created");
  st.phase = PodPhase::Running;
}

Release ClusterState::complete_pod(PodIndex pod, TimeMs now) {
  auto& st = status_.at(pod);
  if (st.phase != PodPhase::Running)
    throw std::logic_error("cannot complete pod '" + specs_[pod].id + "' in phase " + to_string(st.phase));
  st.phase = PodPhase::Succeeded;
  return release(pod, now);
}

Release ClusterState::terminate_pod(PodIndex pod, TimeMs now) {
  auto& st = status_.at(pod);
  if (st.terminal()) throw std::logic_error("pod '" + specs_[pod].id + "' already finished");
  const bool held = st.allocated();
  if (!held) {
    --waiting_count_;
    eligible_.erase(pod);
    parked_.erase(pod);
  }
  st.phase = PodPhase::Terminated;
  if (!held) return Release{};
  return release(pod, now);
}

Release ClusterState::release(PodIndex pod, TimeMs now) {
  const auto& spec = specs_[pod];
  const auto node = static_cast<std::size_t>(status_[pod].node);
  allocated_[node] -= spec.requests();
  if (spec.pool != kNone) pool_allocated_[node] -= spec.requests();
  ++releases_;
  eligible_.insert(parked_.begin(), parked_.end());
  parked_.clear();
  Release r;
  r.node = status_[pod].node;
  r.freed = spec.requests();
  r.placements = schedule_pass(now);
  return r;
}

std::optional<PodIndex> ClusterState::find(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

Resources ClusterState::total_capacity() const {
  Resources total;
  for (const auto& n : nodes_) total += n.capacity();
  return total;
}

double ClusterState::allocated_fraction() const {
  std::int64_t used = 0;
  for (const auto& a : allocated_) used += a.cpu_m;
  return static_cast<double>(used) / static_cast<double>(total_capacity().cpu_m);
}

std::int64_t ClusterState::free_slots(const Resources& slot, bool exclude_pools) const {
  std::int64_t slots = 0;
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    Resources free = nodes_[n].capacity() - allocated_[n];
    if (exclude_pools) free += pool_allocated_[n];
    slots += std::max<std::int64_t>(0, std::min(free.cpu_m / slot.cpu_m, free.mem_mb / slot.mem_mb));
  }
  return slots;
}

std::optional<TimeMs> ClusterState::next_eligible_time() const {
  if (!eligible_.empty()) return status_[*eligible_.begin()].eligible_at_ms;
  if (waiting_count_ == 0) return std::nullopt;
  std::optional<TimeMs> best;
  for (std::size_t p = 0; p < status_.size(); ++p) {
    const auto& st = status_[p];
    if (st.phase == PodPhase::Submitted || st.phase == PodPhase::Pending)
      if (!best || st.eligible_at_ms < *best) best = st.eligible_at_ms;
  }
  return best;
}

std::size_t ClusterState::in_flight_count() const {
  return static_cast<std::size_t>(std::count_if(status_.begin(), status_.end(), [](const PodStatus& s) { return !s.terminal(); }));
}

void ClusterState::check_invariants(TimeMs now) const {
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    const auto& a = allocated_[n];
    if (a.cpu_m < 0 || a.mem_mb < 0 || !a.fits_in(nodes_[n].capacity()))
      throw std::logic_error("node " + nodes_[n].id + " over-allocated");
  }
  for (std::size_t p = 0; p < status_.size(); ++p) {
    const auto& st = status_[p];
    if (st.phase != PodPhase::Submitted && st.phase != PodPhase::Pending) continue;
    if (st.eligible_at_ms > now) continue;
    const auto req = specs_[p].requests();
    for (std::size_t n = 0; n < nodes_.size(); ++n)
      if (req.fits_in(nodes_[n].capacity() - allocated_[n]))
        throw std::logic_error("eligible pod '" + specs_[p].id + "' left Pending with free capacity on " + nodes_[n].id);
  }
}

}  // namespace kwsim
