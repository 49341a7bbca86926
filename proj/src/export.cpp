#include "kwsim/export.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace kwsim {

using nlohmann::json;

namespace {

constexpr const char* kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                                    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Round tick spacing giving at most ~10 ticks over `span`.
std::int64_t tick_step(std::int64_t span) {
  std::int64_t step = 1;
  while (span / step > 10) {
    if (span / (step * 2) <= 10) return step * 2;
    if (span / (step * 5) <= 10) return step * 5;
    step *= 10;
  }
  return step;
}

struct Panel {
  double x, y, w, h;
  TimeMs t_end;
  std::int64_t y_max;

  double px(TimeMs t) const { return x + w * static_cast<double>(t) / static_cast<double>(std::max<TimeMs>(t_end, 1)); }
  double py(double v) const { return y + h - h * v / static_cast<double>(std::max<std::int64_t>(y_max, 1)); }
};

void time_axis(std::ostringstream& svg, const Panel& p) {
  const auto secs = std::max<std::int64_t>(p.t_end / 1000, 1);
  const auto step = tick_step(secs);
  svg << "<line x1=\"" << fmt(p.x) << "\" y1=\"" << fmt(p.y + p.h) << "\" x2=\"" << fmt(p.x + p.w) << "\" y2=\""
      << fmt(p.y + p.h) << "\" stroke=\"#333\"/>\n";
  for (std::int64_t s = 0; s <= secs; s += step) {
    const double x = p.px(s * 1000);
    svg << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(p.y + p.h) << "\" x2=\"" << fmt(x) << "\" y2=\"" << fmt(p.y + p.h + 4)
        << "\" stroke=\"#333\"/><text x=\"" << fmt(x) << "\" y=\"" << fmt(p.y + p.h + 16)
        << "\" font-size=\"10\" text-anchor=\"middle\">" << s << "</text>\n";
  }
  svg << "<text x=\"" << fmt(p.x + p.w / 2) << "\" y=\"" << fmt(p.y + p.h + 30)
      << "\" font-size=\"11\" text-anchor=\"middle\">time [s]</text>\n";
}

void utilization_panel(std::ostringstream& svg, const Panel& p, const SimResult& r, const std::string& title) {
  const auto series = running_series(r.trace);
  const auto cap = r.trace.slot_capacity;
  svg << "<text x=\"" << fmt(p.x) << "\" y=\"" << fmt(p.y - 8) << "\" font-size=\"12\">" << escape(title) << "</text>\n";
  svg << "<line x1=\"" << fmt(p.x) << "\" y1=\"" << fmt(p.y) << "\" x2=\"" << fmt(p.x) << "\" y2=\"" << fmt(p.y + p.h)
      << "\" stroke=\"#333\"/>\n";
  const auto ystep = tick_step(p.y_max);
  for (std::int64_t v = 0; v <= p.y_max; v += ystep)
    svg << "<text x=\"" << fmt(p.x - 4) << "\" y=\"" << fmt(p.py(static_cast<double>(v)) + 3)
        << "\" font-size=\"10\" text-anchor=\"end\">" << v << "</text>\n";
  if (cap > 0)
    svg << "<line class=\"capacity\" x1=\"" << fmt(p.x) << "\" y1=\"" << fmt(p.py(static_cast<double>(cap))) << "\" x2=\""
        << fmt(p.x + p.w) << "\" y2=\"" << fmt(p.py(static_cast<double>(cap)))
        << "\" stroke=\"#c00\" stroke-dasharray=\"4 3\"/>\n";

  svg << "<polyline class=\"allocated\" fill=\"none\" stroke=\"#aaa\" points=\"";
  for (const auto& s : r.utilization) svg << fmt(p.px(s.time_ms)) << ',' << fmt(p.py(s.allocated_fraction * static_cast<double>(cap))) << ' ';
  svg << "\"/>\n";

  svg << "<polyline class=\"running\" fill=\"none\" stroke=\"#1f4e9c\" points=\"" << fmt(p.px(0)) << ',' << fmt(p.py(0)) << ' ';
  std::int64_t level = 0;
  for (const auto& s : series) {
    svg << fmt(p.px(s.time_ms)) << ',' << fmt(p.py(static_cast<double>(level))) << ' ';
    level = s.value;
    svg << fmt(p.px(s.time_ms)) << ',' << fmt(p.py(static_cast<double>(level))) << ' ';
  }
  svg << "\"/>\n";
  time_axis(svg, p);
}

TimeMs trace_end(const Trace& t) { return t.events.empty() ? 0 : t.events.back().time_ms; }

}  // namespace

const char* to_string(ExportFormat format) noexcept {
  switch (format) {
    case ExportFormat::Csv: return "csv";
    case ExportFormat::Json: return "json";
    case ExportFormat::GanttImage: return "gantt-image";
    case ExportFormat::UtilizationImage: return "utilization-image";
  }
  return "?";
}

ExportFormat parse_export_format(std::string_view text) {
  for (auto f : {ExportFormat::Csv, ExportFormat::Json, ExportFormat::GanttImage, ExportFormat::UtilizationImage})
    if (text == to_string(f)) return f;
  throw ConfigError("format", "unknown export format '" + std::string(text) +
                                  "' (expected csv, json, gantt-image or utilization-image)");
}

void write_csv(const Trace& trace, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& e : trace.events) out << format_csv_row(trace, e) << '\n';
}

std::string trace_csv(const Trace& trace) {
  std::ostringstream os;
  write_csv(trace, os);
  return os.str();
}

RunSummary summarize(const SimResult& r, TimeMs stall_gap_ms) {
  RunSummary s;
  s.makespan_ms = r.makespan_ms;
  s.slot_capacity = r.trace.slot_capacity;
  const auto series = running_series(r.trace);
  for (const auto& st : series) s.peak_running = std::max(s.peak_running, st.value);
  if (r.makespan_ms > 0) s.mean_running = static_cast<double>(integral(series)) / static_cast<double>(r.makespan_ms);
  if (s.slot_capacity > 0) s.mean_utilization = s.mean_running / static_cast<double>(s.slot_capacity);
  s.stalls = stall_intervals(r.trace, stall_gap_ms);
  return s;
}

json summary_to_json(const SimResult& r, const RunSummary& s) {
  json stalls = json::array();
  for (const auto& iv : s.stalls) stalls.push_back({{"start_ms", iv.start_ms}, {"end_ms", iv.end_ms}});
  json stages = json::array();
  for (const auto& st : r.stages)
    stages.push_back({{"type", st.task_type},
                      {"tasks", st.tasks},
                      {"first_start_ms", st.first_start_ms},
                      {"last_completion_ms", st.last_completion_ms},
                      {"total_runtime_ms", st.total_runtime_ms}});
  return json{{"name", r.name},
              {"makespan_ms", s.makespan_ms},
              {"slot_capacity", s.slot_capacity},
              {"peak_running", s.peak_running},
              {"mean_running", std::stod(fmt(s.mean_running))},
              {"mean_utilization", std::stod(fmt(s.mean_utilization * 100.0)) / 100.0},
              {"stalls", std::move(stalls)},
              {"stages", std::move(stages)},
              {"pods_created", r.pods_created},
              {"trace_hash", hash_hex(r.trace_hash)},
              {"audit_passed", r.audit.passed}};
}

json result_to_json(const SimResult& r) {
  json doc = summary_to_json(r, summarize(r));
  json events = json::array();
  const auto& t = r.trace;
  for (const auto& e : t.events) {
    json j = {{"time_ms", e.time_ms}, {"kind", to_string(e.kind)}};
    if (e.task != kNone) j["task"] = t.task_ids.at(static_cast<std::size_t>(e.task));
    if (e.pod != kNone) j["pod"] = t.pod_ids.at(static_cast<std::size_t>(e.pod));
    if (e.pool != kNone) j["pool"] = t.pool_names.at(static_cast<std::size_t>(e.pool));
    if (e.node != kNone) j["node"] = t.node_ids.at(static_cast<std::size_t>(e.node));
    j["detail"] = e.detail;
    events.push_back(std::move(j));
  }
  doc["events"] = std::move(events);
  return doc;
}

std::string render_gantt_svg(const Trace& trace) {
  struct Row {
    std::int32_t task;
    TimeMs start, end;
  };
  std::vector<Row> rows;
  std::map<std::int32_t, std::size_t> open;
  for (const auto& e : trace.events) {
    if (e.kind == TraceKind::TaskStarted) {
      open[e.task] = rows.size();
      rows.push_back({e.task, e.time_ms, e.time_ms});
    } else if (e.kind == TraceKind::TaskCompleted) {
      if (auto it = open.find(e.task); it != open.end()) rows[it->second].end = e.time_ms;
    }
  }
  std::map<std::string, std::size_t> colors;  // type -> legend position, by first start
  std::vector<std::string> legend;
  for (const auto& r : rows) {
    const auto& type = trace.task_types.at(static_cast<std::size_t>(r.task));
    if (colors.emplace(type, legend.size()).second) legend.push_back(type);
  }

  const double row_h = rows.size() > 400 ? 1.0 : rows.size() > 100 ? 3.0 : 12.0;
  const Panel p{60, 30, 900, std::max(row_h * static_cast<double>(rows.size()), 40.0), trace_end(trace), 1};
  const double height = p.y + p.h + 50 + 16.0 * static_cast<double>(legend.size());

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1000\" height=\"" << fmt(height) << "\" viewBox=\"0 0 1000 "
      << fmt(height) << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"60\" y=\"18\" font-size=\"12\">tasks (" << rows.size() << ")</text>\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& type = trace.task_types.at(static_cast<std::size_t>(r.task));
    const double x0 = p.px(r.start), x1 = p.px(r.end);
    svg << "<rect class=\"task\" x=\"" << fmt(x0) << "\" y=\"" << fmt(p.y + row_h * static_cast<double>(i)) << "\" width=\""
        << fmt(std::max(x1 - x0, 0.5)) << "\" height=\"" << fmt(row_h) << "\" fill=\"" << kPalette[colors[type] % std::size(kPalette)]
        << "\"><title>" << escape(trace.task_ids.at(static_cast<std::size_t>(r.task))) << "</title></rect>\n";
  }
  time_axis(svg, p);
  for (std::size_t i = 0; i < legend.size(); ++i) {
    const double y = p.y + p.h + 44 + 16.0 * static_cast<double>(i);
    svg << "<rect x=\"60\" y=\"" << fmt(y - 9) << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[i % std::size(kPalette)]
        << "\"/><text x=\"76\" y=\"" << fmt(y) << "\" font-size=\"11\">" << escape(legend[i]) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string render_utilization_svg(const SimResult& r) { return render_comparison_svg({{r.name, &r}}); }

std::string render_comparison_svg(const std::vector<std::pair<std::string, const SimResult*>>& runs) {
  TimeMs t_end = 0;
  std::int64_t y_max = 1;
  for (const auto& [_, r] : runs) {
    t_end = std::max(t_end, trace_end(r->trace));
    y_max = std::max(y_max, r->trace.slot_capacity);
    for (const auto& st : running_series(r->trace)) y_max = std::max(y_max, st.value);
  }
  const double panel_w = 420, panel_h = 220, gap = 60;
  const double width = 60 + static_cast<double>(runs.size()) * (panel_w + gap);
  const double height = panel_h + 90;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\"" << fmt(height) << "\" viewBox=\"0 0 "
      << fmt(width) << ' ' << fmt(height) << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const Panel p{60 + static_cast<double>(i) * (panel_w + gap), 30, panel_w, panel_h, t_end, y_max};
    utilization_panel(svg, p, *runs[i].second, runs[i].first);
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) throw IoError("write failed for " + path);
}

void export_result(const SimResult& result, ExportFormat format, const std::string& path) {
  switch (format) {
    case ExportFormat::Csv: write_text_file(path, trace_csv(result.trace)); return;
    case ExportFormat::Json: write_text_file(path, result_to_json(result).dump(1) + "\n"); return;
    case ExportFormat::GanttImage: write_text_file(path, render_gantt_svg(result.trace)); return;
    case ExportFormat::UtilizationImage: write_text_file(path, render_utilization_svg(result)); return;
  }
}

}  // namespace kwsim
