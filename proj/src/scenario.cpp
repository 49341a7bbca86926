#include "kwsim/scenario.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>

namespace kwsim {

using nlohmann::json;

namespace {

// Typed, path-aware view of one JSON object.
class Fields {
 public:
  Fields(const json& doc, std::string path, std::initializer_list<const char*> allowed) : doc_(doc), path_(std::move(path)) {
    if (!doc.is_object()) throw ConfigError(path_, "expected an object");
    for (const auto& [key, _] : doc.items()) {
      bool known = false;
      for (const char* a : allowed) known = known || key == a;
      if (!known) throw ConfigError(at(key), "unknown field");
    }
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const char* key) const { return doc_.contains(key); }
  const json& raw(const char* key) const { return doc_.at(key); }

  std::int64_t integer(const char* key, std::int64_t fallback, std::int64_t lo,
                       std::int64_t hi = std::numeric_limits<std::int64_t>::max()) const {
    if (!has(key)) return fallback;
    const auto& v = doc_.at(key);
    if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < lo || x > hi) throw ConfigError(at(key), "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return x;
  }

  double number(const char* key, double fallback) const {
    if (!has(key)) return fallback;
    const auto& v = doc_.at(key);
    if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    return v.get<double>();
  }

  std::string string(const char* key, std::string fallback) const {
    if (!has(key)) return fallback;
    const auto& v = doc_.at(key);
    if (!v.is_string()) throw ConfigError(at(key), "expected a string");
    return v.get<std::string>();
  }

 private:
  const json& doc_;
  std::string path_;
};

ClusterConfig parse_cluster(const json& doc, const std::string& path) {
  ClusterConfig c;
  Fields f(doc, path, {"nodes", "backoff", "admission", "pod_overhead_ms"});
  if (f.has("nodes")) {
    Fields n(f.raw("nodes"), f.at("nodes"), {"count", "cpu_m", "mem_mb"});
    c.node_count = static_cast<int>(n.integer("count", c.node_count, 1, 100000));
    c.node_cpu_m = n.integer("cpu_m", c.node_cpu_m, 1);
    c.node_mem_mb = n.integer("mem_mb", c.node_mem_mb, 1);
  }
  if (f.has("backoff")) {
    Fields b(f.raw("backoff"), f.at("backoff"), {"initial_ms", "factor", "cap_ms"});
    c.backoff.initial_ms = b.integer("initial_ms", c.backoff.initial_ms, 0);
    c.backoff.factor = b.number("factor", c.backoff.factor);
    c.backoff.cap_ms = b.integer("cap_ms", c.backoff.cap_ms, 0);
  }
  if (f.has("admission")) {
    Fields a(f.raw("admission"), f.at("admission"), {"rate_per_s", "burst"});
    c.admission.rate_per_s = a.integer("rate_per_s", c.admission.rate_per_s, 0);
    c.admission.burst = a.integer("burst", c.admission.burst, 1);
  }
  c.pod_overhead_ms = f.integer("pod_overhead_ms", c.pod_overhead_ms, 0);
  c.validate(path);
  return c;
}

ExecutionModelConfig parse_model(const json& doc, const std::string& path) {
  ExecutionModelConfig m;
  Fields f(doc, path, {"default", "modes", "clustering", "dequeue_latency_ms"});
  if (f.has("default")) {
    const auto& d = f.raw("default");
    if (d.is_null()) m.default_mode.reset();
    else if (d.is_string()) m.default_mode = parse_execution_mode(d.get<std::string>(), f.at("default"));
    else throw ConfigError(f.at("default"), "expected a mode name or null");
  }
  if (f.has("modes")) {
    const auto& modes = f.raw("modes");
    if (!modes.is_object()) throw ConfigError(f.at("modes"), "expected an object");
    for (const auto& [type, v] : modes.items()) {
      const auto where = f.at("modes") + "." + type;
      if (!v.is_string()) throw ConfigError(where, "expected a mode name");
      m.modes[type] = parse_execution_mode(v.get<std::string>(), where);
    }
  }
  if (f.has("clustering")) m.clustering = parse_clustering_rules(f.raw("clustering"), f.at("clustering"));
  m.dequeue_latency_ms = f.integer("dequeue_latency_ms", 0, 0);
  return m;
}

std::vector<PoolSpec> parse_pools(const json& doc, const std::string& path) {
  if (!doc.is_array()) throw ConfigError(path, "expected an array");
  std::vector<PoolSpec> pools;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto where = path + "[" + std::to_string(i) + "]";
    Fields f(doc[i], where, {"type", "cpu_m", "mem_mb", "min", "max", "overhead_ms"});
    PoolSpec p;
    if (!f.has("type")) throw ConfigError(f.at("type"), "required");
    p.task_type = f.string("type", "");
    if (p.task_type.empty()) throw ConfigError(f.at("type"), "must not be empty");
    p.cpu_m = f.integer("cpu_m", p.cpu_m, 1);
    p.mem_mb = f.integer("mem_mb", p.mem_mb, 1);
    p.min_replicas = f.integer("min", p.min_replicas, 0);
    p.max_replicas = f.integer("max", p.max_replicas, 0);
    if (p.max_replicas < p.min_replicas) throw ConfigError(f.at("max"), "must be >= min");
    if (f.has("overhead_ms")) p.creation_overhead_ms = f.integer("overhead_ms", 0, 0);
    pools.push_back(std::move(p));
  }
  return pools;
}

WorkflowSource parse_workflow_source(const json& doc, const std::string& path, const std::string& base_dir) {
  Fields f(doc, path, {"file", "montage", "inline"});
  const int given = f.has("file") + f.has("montage") + f.has("inline");
  if (given != 1) throw ConfigError(path, "exactly one of file, montage, inline is required");
  if (f.has("file")) {
    std::filesystem::path p = f.string("file", "");
    if (p.empty()) throw ConfigError(f.at("file"), "must not be empty");
    if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
    return WorkflowSource::file(p.lexically_normal().string());
  }
  if (f.has("montage")) return WorkflowSource::generated(parse_montage_params(f.raw("montage"), f.at("montage")));
  try {
    return WorkflowSource::inline_dag(parse_workflow(f.raw("inline")));
  } catch (const WorkflowError& e) {
    throw ConfigError(f.at("inline"), e.what());
  }
}

}  // namespace

SimConfig parse_scenario(const json& doc, const std::string& base_dir) {
  SimConfig c;
  Fields f(doc, "", {"name", "seed", "workflow", "cluster", "model", "scaler", "engine_latency_ms", "max_sim_time_ms",
                     "check_invariants"});
  try {
    c.name = f.string("name", c.name);
    if (f.has("seed")) {
      const auto& s = f.raw("seed");
      if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0))
        throw ConfigError("seed", "expected a non-negative integer");
      c.seed = s.get<std::uint64_t>();
    }
    if (!f.has("workflow")) throw ConfigError("workflow", "required");
    c.workflow = parse_workflow_source(f.raw("workflow"), "workflow", base_dir);
    if (f.has("cluster")) c.cluster = parse_cluster(f.raw("cluster"), "cluster");
    if (f.has("model")) c.model = parse_model(f.raw("model"), "model");
    if (f.has("scaler")) {
      Fields s(f.raw("scaler"), "scaler", {"interval_ms", "stabilization_ms", "pools"});
      c.scaler.interval_ms = s.integer("interval_ms", c.scaler.interval_ms, 1);
      c.scaler.stabilization_ms = s.integer("stabilization_ms", c.scaler.stabilization_ms, 0);
      if (s.has("pools")) c.model.pools = parse_pools(s.raw("pools"), "scaler.pools");
    }
    c.engine_latency_ms = f.integer("engine_latency_ms", c.engine_latency_ms, 0);
    c.max_sim_time_ms = f.integer("max_sim_time_ms", c.max_sim_time_ms, 1);
    if (f.has("check_invariants")) {
      if (!f.raw("check_invariants").is_boolean()) throw ConfigError("check_invariants", "expected a boolean");
      c.check_invariants = f.raw("check_invariants").get<bool>();
    }
  } catch (const json::exception& e) {
    throw ConfigError("", std::string("malformed scenario: ") + e.what());
  }
  return c;
}

SimConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", path + ": invalid JSON: " + e.what());
  }
  return parse_scenario(doc, std::filesystem::path(path).parent_path().string());
}

json scenario_to_json(const SimConfig& c) {
  json wf;
  switch (c.workflow.kind) {
    case WorkflowSource::Kind::File: wf["file"] = c.workflow.path; break;
    case WorkflowSource::Kind::Montage: wf["montage"] = montage_params_to_json(c.workflow.montage.value()); break;
    case WorkflowSource::Kind::Inline:
      if (!c.workflow.dag) throw ConfigError("workflow", "no workflow given");
      wf["inline"] = workflow_to_json(*c.workflow.dag);
      break;
  }
  json modes = json::object();
  for (const auto& [type, mode] : c.model.modes) modes[type] = to_string(mode);
  json model = {{"default", c.model.default_mode ? json(to_string(*c.model.default_mode)) : json(nullptr)},
                {"modes", std::move(modes)},
                {"clustering", clustering_rules_to_json(c.model.clustering)},
                {"dequeue_latency_ms", c.model.dequeue_latency_ms}};
  json pools = json::array();
  for (const auto& p : c.model.pools) {
    json j = {{"type", p.task_type}, {"cpu_m", p.cpu_m}, {"mem_mb", p.mem_mb}, {"min", p.min_replicas}, {"max", p.max_replicas}};
    if (p.creation_overhead_ms) j["overhead_ms"] = *p.creation_overhead_ms;
    pools.push_back(std::move(j));
  }
  const auto& cl = c.cluster;
  return json{
      {"name", c.name},
      {"seed", c.seed},
      {"workflow", std::move(wf)},
      {"cluster",
       {{"nodes", {{"count", cl.node_count}, {"cpu_m", cl.node_cpu_m}, {"mem_mb", cl.node_mem_mb}}},
        {"backoff", {{"initial_ms", cl.backoff.initial_ms}, {"factor", cl.backoff.factor}, {"cap_ms", cl.backoff.cap_ms}}},
        {"admission", {{"rate_per_s", cl.admission.rate_per_s}, {"burst", cl.admission.burst}}},
        {"pod_overhead_ms", cl.pod_overhead_ms}}},
      {"model", std::move(model)},
      {"scaler", {{"interval_ms", c.scaler.interval_ms}, {"stabilization_ms", c.scaler.stabilization_ms}, {"pools", std::move(pools)}}},
      {"engine_latency_ms", c.engine_latency_ms},
      {"max_sim_time_ms", c.max_sim_time_ms},
      {"check_invariants", c.check_invariants},
  };
}

}  // namespace kwsim
