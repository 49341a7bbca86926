#include "kwsim/trace.hpp"

#include <cstdio>

namespace kwsim {

namespace {

constexpr const char* kKindNames[] = {
    "TaskReady",     "PodSubmitted",  "PodScheduled", "PodPending",  "PodUnschedulable", "PodCreated",
    "TaskStarted",   "TaskCompleted", "PodCompleted", "PodTerminated", "WorkerDrain",    "ScaleDecision",
};

std::string detail_text(const TraceEvent& e) {
  const auto& d = e.detail;
  switch (e.kind) {
    case TraceKind::PodSubmitted: return "tasks=" + std::to_string(d[0]) + ";cpu_m=" + std::to_string(d[1]);
    case TraceKind::PodScheduled: return "attempts=" + std::to_string(d[0]) + ";cpu_m=" + std::to_string(d[1]);
    case TraceKind::PodPending: return "attempts=" + std::to_string(d[0]) + ";next_ms=" + std::to_string(d[1]);
    case TraceKind::PodCompleted:
    case TraceKind::PodTerminated: return "held=" + std::to_string(d[0]) + ";cpu_m=" + std::to_string(d[1]);
    case TraceKind::ScaleDecision:
      return "demand=" + std::to_string(d[0]) + ";target=" + std::to_string(d[1]) + ";stabilized=" + std::to_string(d[2]) +
             ";replicas=" + std::to_string(d[3]);
    default: return {};
  }
}

}  // namespace

const char* to_string(TraceKind kind) noexcept { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<TraceKind> parse_trace_kind(std::string_view text) noexcept {
  for (std::size_t i = 0; i < std::size(kKindNames); ++i)
    if (text == kKindNames[i]) return static_cast<TraceKind>(i);
  return std::nullopt;
}

std::string format_csv_row(const Trace& trace, const TraceEvent& e) {
  std::string row = std::to_string(e.time_ms);
  row += ',';
  row += to_string(e.kind);
  row += ',';
  if (e.task != kNone) row += trace.task_ids.at(static_cast<std::size_t>(e.task));
  row += ',';
  if (e.pod != kNone) row += trace.pod_ids.at(static_cast<std::size_t>(e.pod));
  row += ',';
  if (e.pool != kNone) row += trace.pool_names.at(static_cast<std::size_t>(e.pool));
  row += ',';
  if (e.node != kNone) row += trace.node_ids.at(static_cast<std::size_t>(e.node));
  row += ',';
  row += detail_text(e);
  return row;
}

std::uint64_t trace_hash(const Trace& trace) {
  std::uint64_t h = 14695981039346656037ull;
  auto feed = [&](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  feed(kCsvHeader);
  feed("\n");
  for (const auto& e : trace.events) {
    feed(format_csv_row(trace, e));
    feed("\n");
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace kwsim
