#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kwsim/metrics.hpp"
#include "kwsim/simulator.hpp"

namespace kwsim {

enum class ExportFormat { Csv, Json, GanttImage, UtilizationImage };

const char* to_string(ExportFormat format) noexcept;
/// "csv", "json", "gantt-image", "utilization-image"; throws ConfigError("format").
ExportFormat parse_export_format(std::string_view text);

/// Header plus one row per event; byte-stable for a fixed trace.
void write_csv(const Trace& trace, std::ostream& out);
std::string trace_csv(const Trace& trace);

struct RunSummary {
  TimeMs makespan_ms = 0;
  std::int64_t slot_capacity = 0;
  std::int64_t peak_running = 0;
  double mean_running = 0.0;      ///< over [first ready, last completion]
  double mean_utilization = 0.0;  ///< mean_running / slot_capacity
  std::vector<Interval> stalls;   ///< stall_intervals(trace, stall_gap_ms)
};

RunSummary summarize(const SimResult& result, TimeMs stall_gap_ms = 60000);

nlohmann::json summary_to_json(const SimResult& result, const RunSummary& summary);

/// Full result document: summary, per-stage statistics and every trace event.
nlohmann::json result_to_json(const SimResult& result);

/// One row per task (in first-start order), bars colored by task type.
std::string render_gantt_svg(const Trace& trace);
/// Running tasks (exact series) with the slot ceiling and allocated CPU share.
std::string render_utilization_svg(const SimResult& result);
/// Utilization panels of several runs side by side on a shared time axis.
std::string render_comparison_svg(const std::vector<std::pair<std::string, const SimResult*>>& runs);

/// Writes `result` in `format` to `path`. Throws IoError if the file cannot be written.
void export_result(const SimResult& result, ExportFormat format, const std::string& path);

/// Writes text to a file, creating parent directories. Throws IoError.
void write_text_file(const std::string& path, std::string_view text);

}  // namespace kwsim
