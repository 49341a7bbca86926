#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kwsim/common.hpp"

namespace kwsim {

enum class TraceKind : std::uint8_t {
  TaskReady,
  PodSubmitted,
  PodScheduled,
  PodPending,
  PodUnschedulable,
  PodCreated,
  TaskStarted,
  TaskCompleted,
  PodCompleted,
  PodTerminated,
  WorkerDrain,
  ScaleDecision,
};

const char* to_string(TraceKind kind) noexcept;
std::optional<TraceKind> parse_trace_kind(std::string_view text) noexcept;

/// One timestamped lifecycle record. Ids index into the owning Trace's name
/// tables; `detail` meaning depends on `kind`:
///   PodSubmitted   {tasks in payload (0 = worker), cpu_m}
///   PodScheduled   {failed attempts before placement, cpu_m}
///   PodPending     {attempts, next eligible ms}
///   PodCompleted / PodTerminated {1 if it held resources, cpu_m released}
///   ScaleDecision  {demand, target, stabilized, replicas after the tick}
struct TraceEvent {
  TimeMs time_ms = 0;
  TraceKind kind = TraceKind::TaskReady;
  std::int32_t task = kNone;
  std::int32_t pod = kNone;
  std::int32_t pool = kNone;
  std::int32_t node = kNone;
  std::array<std::int64_t, 4> detail{};

  bool operator==(const TraceEvent&) const = default;
};

struct Trace {
  std::vector<TraceEvent> events;  ///< non-decreasing time_ms
  std::vector<std::string> task_ids;
  std::vector<std::string> task_types;
  std::vector<std::string> pod_ids;
  std::vector<std::string> pool_names;
  std::vector<std::string> node_ids;
  std::int64_t total_cpu_m = 0;
  std::int64_t slot_capacity = 0;  ///< task-sized slots the cluster can hold

  std::string_view task_name(std::int32_t i) const { return i == kNone ? std::string_view{} : task_ids.at(i); }
};

/// One CSV row: time_ms,kind,task_id,pod_id,pool,node,detail
std::string format_csv_row(const Trace& trace, const TraceEvent& e);
inline constexpr std::string_view kCsvHeader = "time_ms,kind,task_id,pod_id,pool,node,detail";

/// 64-bit FNV-1a over the CSV rendering; the determinism fingerprint.
std::uint64_t trace_hash(const Trace& trace);
std::string hash_hex(std::uint64_t h);

}  // namespace kwsim
