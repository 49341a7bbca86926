#include "kwsim/cli.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "kwsim/export.hpp"
#include "kwsim/scenario.hpp"

namespace kwsim {

using nlohmann::json;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> formats;
};

std::string file_stem(const std::string& name) {
  std::string s;
  for (char c : name) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return s.empty() ? "scenario" : s;
}

std::string seconds(TimeMs ms) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", static_cast<double>(ms) / 1000.0);
  return buf;
}

std::string percent(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", f * 100.0);
  return buf;
}

// Comma-separated integers; empty items are skipped, so "" is an empty list.
template <class T>
std::vector<T> parse_list(const std::string& text, const std::string& path) {
  std::vector<T> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    if (item.empty()) continue;
    T v{};
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || end != item.data() + item.size()) throw ConfigError(path, "expected an integer, got '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::string ratio(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", r);
  return buf;
}

unsigned worker_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string summary_line(const SimResult& r, const RunSummary& s) {
  std::string line = r.name + ": makespan " + seconds(s.makespan_ms) + " s, mean utilization " + percent(s.mean_utilization) +
                     ", peak " + std::to_string(s.peak_running) + "/" + std::to_string(s.slot_capacity) + " running";
  if (!s.stalls.empty()) {
    TimeMs longest = 0;
    for (const auto& iv : s.stalls) longest = std::max(longest, iv.length());
    line += ", " + std::to_string(s.stalls.size()) + " stall(s) >= 60 s (longest " + seconds(longest) + " s)";
  }
  line += ", trace " + hash_hex(r.trace_hash);
  return line;
}

std::vector<ExportFormat> chosen_formats(const Globals& g, std::vector<ExportFormat> fallback) {
  if (g.formats.empty()) return fallback;
  std::vector<ExportFormat> out;
  for (const auto& f : g.formats) out.push_back(parse_export_format(f));
  return out;
}

const char* extension(ExportFormat f) {
  switch (f) {
    case ExportFormat::Csv: return ".trace.csv";
    case ExportFormat::Json: return ".result.json";
    case ExportFormat::GanttImage: return ".gantt.svg";
    case ExportFormat::UtilizationImage: return ".utilization.svg";
  }
  return "";
}

SimResult unwrap(SuiteEntry& e) {
  if (e.result) return std::move(*e.result);
  const std::string msg = e.name + ": " + e.error.value_or("failed");
  if (e.error_code == kExitConfig) throw ConfigError("", msg);
  if (e.error_code == kExitIo) throw IoError(msg);
  throw SimulationError(msg, {});
}

// --- generate ---------------------------------------------------------------

int cmd_generate(const Globals& g, int n, std::ostream& out) {
  auto dag = generate_montage(MontageParams::defaults(n, g.seed.value_or(1)));
  const auto text = serialize_workflow(dag);
  if (g.out.empty() || g.out == "-") {
    out << text;
  } else {
    write_text_file(g.out, text);
    out << "wrote " << dag.size() << " tasks (" << dag.edge_count() << " edges) to " << g.out << "\n";
  }
  return kExitOk;
}

// --- run / plot -------------------------------------------------------------

SimConfig load_with_overrides(const std::string& path, const Globals& g) {
  auto cfg = load_scenario_file(path);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

int cmd_run(const Globals& g, const std::string& scenario, std::ostream& out) {
  auto cfg = load_with_overrides(scenario, g);
  const auto formats = chosen_formats(g, {ExportFormat::Csv, ExportFormat::GanttImage, ExportFormat::UtilizationImage});
  const auto r = run(cfg);
  const auto s = summarize(r);
  const auto dir = std::filesystem::path(resolve_out_dir(g.out));
  const auto stem = file_stem(r.name);
  write_text_file((dir / (stem + ".summary.json")).string(), summary_to_json(r, s).dump(2) + "\n");
  for (auto f : formats) export_result(r, f, (dir / (stem + extension(f))).string());
  out << summary_line(r, s) << "\n";
  return kExitOk;
}

int cmd_plot(const Globals& g, const std::string& scenario, std::ostream& out) {
  auto cfg = load_with_overrides(scenario, g);
  const auto formats = chosen_formats(g, {ExportFormat::GanttImage, ExportFormat::UtilizationImage});
  const auto r = run(cfg);
  const auto dir = std::filesystem::path(resolve_out_dir(g.out));
  for (auto f : formats) {
    const auto path = (dir / (file_stem(r.name) + extension(f))).string();
    export_result(r, f, path);
    out << "wrote " << path << "\n";
  }
  return kExitOk;
}

// --- sweep ------------------------------------------------------------------

struct GridRow {
  int size;
  TimeMs timeout_ms;
  SimResult result;
  RunSummary summary;
};

std::vector<GridRow> run_grid(const SimConfig& base, const std::vector<int>& sizes, const std::vector<TimeMs>& timeouts) {
  if (sizes.empty() || timeouts.empty()) throw ConfigError("grid", "empty parameter grid");
  if (base.model.clustering.empty()) throw ConfigError("model.clustering", "sweep needs a scenario with clustering rules");
  std::vector<SimConfig> cells;
  std::vector<std::pair<int, TimeMs>> params;
  for (int size : sizes)
    for (TimeMs timeout : timeouts) {
      if (size < 1) throw ConfigError("grid.sizes", "sizes must be >= 1");
      if (timeout < 0) throw ConfigError("grid.timeouts", "timeouts must be >= 0");
      auto cfg = base;
      for (auto& rule : cfg.model.clustering) {
        rule.size = size;
        rule.timeout_ms = timeout;
      }
      cfg.name = base.name + "-s" + std::to_string(size) + "-t" + std::to_string(timeout);
      cells.push_back(std::move(cfg));
      params.emplace_back(size, timeout);
    }
  auto entries = run_suite(cells, worker_threads());
  std::vector<GridRow> rows;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto r = unwrap(entries[i]);
    auto s = summarize(r);
    rows.push_back({params[i].first, params[i].second, std::move(r), std::move(s)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) { return a.summary.makespan_ms < b.summary.makespan_ms; });
  return rows;
}

int cmd_sweep(const Globals& g, const std::string& scenario, const std::vector<int>& sizes, const std::vector<TimeMs>& timeouts,
              std::ostream& out) {
  const auto base = load_with_overrides(scenario, g);
  const auto rows = run_grid(base, sizes, timeouts);
  std::string csv = "size,timeout_ms,makespan_ms,mean_utilization,stalls,best\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %-10s %-12s %-10s %-7s\n", "size", "timeout_ms", "makespan_s", "mean_util", "stalls");
  out << line;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::snprintf(line, sizeof line, "%-6d %-10lld %-12s %-10s %-7zu%s\n", r.size, static_cast<long long>(r.timeout_ms),
                  seconds(r.summary.makespan_ms).c_str(), percent(r.summary.mean_utilization).c_str(), r.summary.stalls.size(),
                  i == 0 ? " <- best" : "");
    out << line;
    csv += std::to_string(r.size) + "," + std::to_string(r.timeout_ms) + "," + std::to_string(r.summary.makespan_ms) + "," +
           ratio(r.summary.mean_utilization) + "," + std::to_string(r.summary.stalls.size()) + "," + (i == 0 ? "1" : "0") + "\n";
  }
  const auto dir = std::filesystem::path(resolve_out_dir(g.out));
  write_text_file((dir / (file_stem(base.name) + ".sweep.csv")).string(), csv);
  return kExitOk;
}

// --- compare ----------------------------------------------------------------

// Task types with more than one task: the wide stages that batching and pools target.
std::vector<std::string> parallel_types(const WorkflowDag& dag) {
  std::map<std::string, int> count;
  for (const auto& t : dag.tasks()) ++count[t.type];
  std::vector<std::string> out;
  for (const auto& type : dag.task_types())
    if (count[type] > 1) out.push_back(type);
  return out;
}

int cmd_compare(const Globals& g, const std::string& source, int n, const std::vector<int>& sizes,
                const std::vector<TimeMs>& timeouts, std::ostream& out) {
  SimConfig base;
  base.seed = g.seed.value_or(1);
  if (!source.empty()) {
    std::ifstream in(source);
    if (!in) throw IoError("cannot open " + source);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("", source + ": invalid JSON: " + e.what());
    }
    if (doc.contains("workflow")) {
      base = parse_scenario(doc, std::filesystem::path(source).parent_path().string());
      if (g.seed) base.seed = *g.seed;
      base.model = ExecutionModelConfig{};
    } else {
      base.workflow = WorkflowSource::inline_dag(parse_workflow(doc));
      base.name = base.workflow.dag->name();
    }
  } else {
    base.workflow = WorkflowSource::generated(MontageParams::defaults(n, base.seed));
    base.name = "montage-" + std::to_string(n);
  }
  const auto dag = materialize_workflow(base);
  base.workflow = WorkflowSource::inline_dag(*dag);
  const auto wide = parallel_types(*dag);

  auto job = base;
  job.name = base.name + "-job";

  auto clustered = base;
  clustered.name = base.name + "-clustered";
  if (!wide.empty()) clustered.model.clustering.push_back(ClusteringRule{wide, sizes.empty() ? 1 : sizes.front(), 0});

  auto pools = base;
  pools.name = base.name + "-workerpools";
  for (const auto& type : wide) {
    PoolSpec spec;
    spec.task_type = type;
    pools.model.pools.push_back(spec);
  }

  auto entries = run_suite({job, pools}, 2);
  auto job_r = unwrap(entries[0]);
  auto pool_r = unwrap(entries[1]);
  SimResult best;
  std::string best_label = "no wide stages";
  if (!wide.empty()) {
    auto rows = run_grid(clustered, sizes, timeouts);
    best = std::move(rows.front().result);
    best_label = "size " + std::to_string(rows.front().size) + ", timeout " + std::to_string(rows.front().timeout_ms) + " ms";
  } else {
    best = run(clustered);
  }
  best.name = clustered.name;

  const std::pair<const char*, const SimResult*> models[] = {{"job", &job_r}, {"clustered", &best}, {"workerpools", &pool_r}};
  json report = {{"workflow", dag->name()}, {"seed", base.seed}, {"best_clustering", best_label}};
  char line[200];
  std::snprintf(line, sizeof line, "%-12s %-12s %-10s %-9s %s\n", "model", "makespan_s", "mean_util", "vs_job", "stalls>=60s");
  out << line;
  for (const auto& [label, r] : models) {
    const auto s = summarize(*r);
    const double vs_job = static_cast<double>(r->makespan_ms) / static_cast<double>(job_r.makespan_ms);
    std::snprintf(line, sizeof line, "%-12s %-12s %-10s %-9s %zu\n", label, seconds(r->makespan_ms).c_str(),
                  percent(s.mean_utilization).c_str(), ratio(vs_job).c_str(), s.stalls.size());
    out << line;
    report["models"][label] = summary_to_json(*r, s);
  }
  const double wp_vs_clustered = static_cast<double>(pool_r.makespan_ms) / static_cast<double>(best.makespan_ms);
  report["workerpools_vs_clustered"] = std::stod(ratio(wp_vs_clustered));
  out << "best clustering: " << best_label << "\n";
  out << "workerpools/clustered makespan ratio: " << ratio(wp_vs_clustered) << "\n";
  const auto js = summarize(job_r);
  if (!js.stalls.empty()) out << "job model: " << js.stalls.size() << " stall interval(s) of >= 60 s with work waiting\n";

  const auto dir = std::filesystem::path(resolve_out_dir(g.out));
  const auto stem = file_stem(base.name);
  write_text_file((dir / (stem + ".compare.json")).string(), report.dump(2) + "\n");
  write_text_file((dir / (stem + ".compare.svg")).string(),
                  render_comparison_svg({{"job", &job_r}, {"clustered (" + best_label + ")", &best}, {"worker pools", &pool_r}}));
  return kExitOk;
}

}  // namespace

std::string resolve_out_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("KWSIM_OUT_DIR"); env && *env) return env;
  return "kwsim-out";
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulator of workflow execution models on a Kubernetes-like cluster", "kwsim"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides the scenario's)");
  app.add_option("--out", g.out, "Output directory (generate: output file); env KWSIM_OUT_DIR");
  app.add_option("--format", g.formats, "Export format(s): csv, json, gantt-image, utilization-image")->delimiter(',');

  int n = 3200;
  std::string scenario, source;
  std::string sizes_text = "5,20", timeouts_text = "3000";

  auto* gen = app.add_subcommand("generate", "Write a Montage-shaped workflow (5N tasks)");
  gen->add_option("--n", n, "Number of input images N (>= 4)")->required();

  auto* runc = app.add_subcommand("run", "Simulate a scenario; write trace, summary and charts");
  runc->add_option("scenario", scenario, "Scenario file")->required();

  auto* sweep = app.add_subcommand("sweep", "Run a clustered scenario over a size x timeout grid");
  sweep->add_option("scenario", scenario, "Scenario file with clustering rules")->required();
  sweep->add_option("--sizes", sizes_text, "Batch sizes, comma-separated")->capture_default_str();
  sweep->add_option("--timeouts", timeouts_text, "Batch timeouts in ms, comma-separated")->capture_default_str();

  auto* cmp = app.add_subcommand("compare", "Compare job, clustered and worker-pool models on one workflow");
  cmp->add_option("workflow", source, "Workflow or scenario file (default: generated Montage)");
  cmp->add_option("--n", n, "Montage size when no file is given");
  cmp->add_option("--sizes", sizes_text, "Clustering sizes to search")->capture_default_str();
  cmp->add_option("--timeouts", timeouts_text, "Clustering timeouts (ms) to search")->capture_default_str();

  auto* plot = app.add_subcommand("plot", "Simulate a scenario and render its charts");
  plot->add_option("scenario", scenario, "Scenario file")->required();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (*gen) return cmd_generate(g, n, out);
    if (*runc) return cmd_run(g, scenario, out);
    if (*sweep || *cmp) {
      const auto sizes = parse_list<int>(sizes_text, "grid.sizes");
      const auto timeouts = parse_list<TimeMs>(timeouts_text, "grid.timeouts");
      if (*sweep) return cmd_sweep(g, scenario, sizes, timeouts, out);
      return cmd_compare(g, source, n, sizes, timeouts, out);
    }
    if (*plot) return cmd_plot(g, scenario, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SimulationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitSimulation;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitSimulation;
  }
  return kExitConfig;
}

}  // namespace kwsim
