#include "kwsim/workflow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <queue>
#include <random>
#include <sstream>

namespace kwsim {

namespace {

using nlohmann::json;

[[noreturn]] void fail(WorkflowError::Kind kind, const std::string& id, const std::string& message) {
  throw WorkflowError(kind, id, message);
}

}  // namespace

WorkflowDag::WorkflowDag(std::string name, std::vector<TaskSpec> tasks) : name_(std::move(name)), tasks_(std::move(tasks)) {
  const auto n = tasks_.size();
  by_id_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = tasks_[i];
    if (t.id.empty()) fail(WorkflowError::Kind::InvalidTask, "", "task #" + std::to_string(i) + " has an empty id");
    if (t.type.empty()) fail(WorkflowError::Kind::InvalidTask, t.id, "task '" + t.id + "' has an empty type");
    if (t.runtime_ms < 0) fail(WorkflowError::Kind::InvalidTask, t.id, "task '" + t.id + "' has a negative runtime");
    if (t.cpu_request_m <= 0 || t.mem_request_mb <= 0)
      fail(WorkflowError::Kind::InvalidTask, t.id, "task '" + t.id + "' must request positive cpu and memory");
    if (!by_id_.emplace(t.id, static_cast<TaskIndex>(i)).second)
      fail(WorkflowError::Kind::DuplicateId, t.id, "duplicate task id '" + t.id + "'");
  }

  parents_.resize(n);
  children_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& p : tasks_[i].parents) {
      auto it = by_id_.find(p);
      if (it == by_id_.end())
        fail(WorkflowError::Kind::DanglingParent, tasks_[i].id,
             "task '" + tasks_[i].id + "' references unknown parent '" + p + "'");
      auto& ps = parents_[i];
      if (std::find(ps.begin(), ps.end(), it->second) != ps.end()) continue;
      ps.push_back(it->second);
      children_[it->second].push_back(static_cast<TaskIndex>(i));
      ++edge_count_;
    }
  }

  // Kahn's algorithm; the min-heap keeps ties in file order.
  std::vector<std::size_t> indegree(n);
  std::priority_queue<TaskIndex, std::vector<TaskIndex>, std::greater<>> frontier;
  for (std::size_t i = 0; i < n; ++i) {
    indegree[i] = parents_[i].size();
    if (indegree[i] == 0) frontier.push(static_cast<TaskIndex>(i));
  }
  topo_.reserve(n);
  while (!frontier.empty()) {
    auto v = frontier.top();
    frontier.pop();
    topo_.push_back(v);
    for (auto c : children_[v])
      if (--indegree[c] == 0) frontier.push(c);
  }
  if (topo_.size() != n) {
    for (std::size_t i = 0; i < n; ++i)
      if (indegree[i] != 0)
        fail(WorkflowError::Kind::Cycle, tasks_[i].id, "cycle detected through task '" + tasks_[i].id + "'");
  }
}

std::optional<TaskIndex> WorkflowDag::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

TaskIndex WorkflowDag::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw WorkflowError(WorkflowError::Kind::UnknownTask, std::string(id), "unknown task id '" + std::string(id) + "'");
}

std::vector<std::string> WorkflowDag::task_types() const {
  std::vector<std::string> out;
  for (const auto& t : tasks_)
    if (std::find(out.begin(), out.end(), t.type) == out.end()) out.push_back(t.type);
  return out;
}

WorkflowDag parse_workflow(const json& doc) {
  if (!doc.is_object()) fail(WorkflowError::Kind::Parse, "", "workflow document must be a JSON object");
  std::string name = doc.value("name", std::string{"workflow"});
  auto tasks_it = doc.find("tasks");
  if (tasks_it == doc.end() || !tasks_it->is_array()) fail(WorkflowError::Kind::Parse, "", "workflow needs a 'tasks' array");

  std::vector<TaskSpec> tasks;
  tasks.reserve(tasks_it->size());
  std::size_t pos = 0;
  for (const auto& jt : *tasks_it) {
    const std::string where = "tasks[" + std::to_string(pos++) + "]";
    if (!jt.is_object()) fail(WorkflowError::Kind::Parse, "", where + " must be an object");
    try {
      TaskSpec t;
      t.id = jt.at("id").get<std::string>();
      t.type = jt.at("type").get<std::string>();
      t.runtime_ms = jt.at("runtime_ms").get<TimeMs>();
      t.cpu_request_m = jt.value("cpu_m", std::int64_t{1000});
      t.mem_request_mb = jt.value("mem_mb", std::int64_t{2048});
      if (auto p = jt.find("parents"); p != jt.end()) t.parents = p->get<std::vector<std::string>>();
      tasks.push_back(std::move(t));
    } catch (const json::exception& e) {
      fail(WorkflowError::Kind::Parse, jt.value("id", std::string{}), where + ": " + e.what());
    }
  }
  return WorkflowDag(std::move(name), std::move(tasks));
}

WorkflowDag load_workflow(std::istream& source) {
  json doc;
  try {
    source >> doc;
  } catch (const json::parse_error& e) {
    fail(WorkflowError::Kind::Parse, "", std::string("malformed workflow JSON: ") + e.what());
  }
  return parse_workflow(doc);
}

WorkflowDag load_workflow_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open workflow file '" + path + "'");
  return load_workflow(in);
}

namespace {

json task_to_json(const TaskSpec& t) {
  return json{{"id", t.id},           {"type", t.type},          {"runtime_ms", t.runtime_ms},
              {"cpu_m", t.cpu_request_m}, {"mem_mb", t.mem_request_mb}, {"parents", t.parents}};
}

}  // namespace

json workflow_to_json(const WorkflowDag& dag) {
  json tasks = json::array();
  for (const auto& t : dag.tasks()) tasks.push_back(task_to_json(t));
  return json{{"name", dag.name()}, {"tasks", std::move(tasks)}};
}

std::string serialize_workflow(const WorkflowDag& dag) {
  std::ostringstream out;
  out << "{\n  \"name\": " << json(dag.name()).dump() << ",\n  \"tasks\": [";
  bool first = true;
  for (const auto& t : dag.tasks()) {
    out << (first ? "\n    " : ",\n    ") << task_to_json(t).dump();
    first = false;
  }
  out << "\n  ]\n}\n";
  return out.str();
}

std::vector<std::string> ready_tasks(const WorkflowDag& dag, const std::set<std::string>& completed) {
  std::vector<char> done(dag.size(), 0);
  for (const auto& id : completed) done[dag.index_of(id)] = 1;
  std::vector<std::string> out;
  for (TaskIndex i = 0; i < dag.size(); ++i) {
    if (done[i]) continue;
    auto ps = dag.parents_of(i);
    if (std::all_of(ps.begin(), ps.end(), [&](TaskIndex p) { return done[p] != 0; })) out.push_back(dag.task(i).id);
  }
  return out;
}

TimeMs critical_path_ms(const WorkflowDag& dag) {
  std::vector<TimeMs> finish(dag.size(), 0);
  TimeMs best = 0;
  for (auto v : dag.topological_order()) {
    TimeMs start = 0;
    for (auto p : dag.parents_of(v)) start = std::max(start, finish[p]);
    finish[v] = start + dag.task(v).runtime_ms;
    best = std::max(best, finish[v]);
  }
  return best;
}

// --- Montage generator -------------------------------------------------------

MontageParams MontageParams::defaults(int n_inputs, std::uint64_t seed) {
  MontageParams p;
  p.n_inputs = n_inputs;
  p.seed = seed;
  p.runtime = {
      {"mProject", {12000, 0.25}}, {"mDiffFit", {2000, 0.25}}, {"mConcatFit", {10000, 0.25}},
      {"mBgModel", {10000, 0.25}}, {"mBackground", {4000, 0.25}}, {"mImgtbl", {10000, 0.25}},
      {"mAdd", {10000, 0.25}},     {"mShrink", {10000, 0.25}},   {"mJPEG", {10000, 0.25}},
  };
  for (auto type : kMontageTypes) p.requests[std::string(type)] = RequestProfile{};
  return p;
}

namespace {

class RuntimeSampler {
 public:
  RuntimeSampler(const MontageParams& params) : params_(params), engine_(params.seed) {}

  // Integer-only mapping from the engine so results do not depend on the
  // standard library's distribution implementations.
  TimeMs draw(const std::string& type) {
    const auto& m = params_.runtime.at(type);
    const auto span = static_cast<std::uint64_t>(std::llround(static_cast<double>(m.mean_ms) * m.jitter_fraction));
    if (span == 0) return m.mean_ms;
    const auto offset = static_cast<std::int64_t>(engine_() % (2 * span + 1)) - static_cast<std::int64_t>(span);
    return std::max<TimeMs>(0, m.mean_ms + offset);
  }

 private:
  const MontageParams& params_;
  std::mt19937_64 engine_;
};

}  // namespace

WorkflowDag generate_montage(const MontageParams& params) {
  if (params.n_inputs < 4) throw ConfigError("n_inputs", "Montage needs n_inputs >= 4, got " + std::to_string(params.n_inputs));
  for (auto type : kMontageTypes) {
    const std::string t(type);
    auto rt = params.runtime.find(t);
    if (rt == params.runtime.end()) throw ConfigError("runtime." + t, "missing runtime model");
    if (rt->second.mean_ms < 0) throw ConfigError("runtime." + t + ".mean_ms", "must be >= 0");
    if (!(rt->second.jitter_fraction >= 0.0 && rt->second.jitter_fraction < 1.0))
      throw ConfigError("runtime." + t + ".jitter", "must be in [0, 1)");
    auto rq = params.requests.find(t);
    if (rq == params.requests.end()) throw ConfigError("requests." + t, "missing request profile");
    if (rq->second.cpu_m <= 0 || rq->second.mem_mb <= 0) throw ConfigError("requests." + t, "requests must be > 0");
  }

  const int n = params.n_inputs;
  RuntimeSampler sampler(params);
  std::vector<TaskSpec> tasks;
  tasks.reserve(static_cast<std::size_t>(5 * n));

  auto make = [&](std::string id, const std::string& type, std::vector<std::string> parents) {
    const auto& rq = params.requests.at(type);
    tasks.push_back(TaskSpec{std::move(id), type, sampler.draw(type), rq.cpu_m, rq.mem_mb, std::move(parents)});
  };
  auto project = [](int i) { return "mProject_" + std::to_string(i); };

  for (int i = 0; i < n; ++i) make(project(i), "mProject", {});

  std::vector<std::string> diffs;
  for (int i = 0; i < n; ++i) {
    for (int d = 1; d <= 3 && i + d < n; ++d) {
      diffs.push_back("mDiffFit_" + std::to_string(i) + "_" + std::to_string(i + d));
      make(diffs.back(), "mDiffFit", {project(i), project(i + d)});
    }
  }

  make("mConcatFit", "mConcatFit", diffs);
  make("mBgModel", "mBgModel", {"mConcatFit"});

  std::vector<std::string> backgrounds;
  for (int i = 0; i < n; ++i) {
    backgrounds.push_back("mBackground_" + std::to_string(i));
    make(backgrounds.back(), "mBackground", {"mBgModel", project(i)});
  }

  make("mImgtbl", "mImgtbl", backgrounds);
  make("mAdd", "mAdd", {"mImgtbl"});
  make("mShrink", "mShrink", {"mAdd"});
  make("mJPEG", "mJPEG", {"mShrink"});

  return WorkflowDag("montage-" + std::to_string(n), std::move(tasks));
}

json montage_params_to_json(const MontageParams& params) {
  json runtime = json::object();
  for (const auto& [type, m] : params.runtime) runtime[type] = {{"mean_ms", m.mean_ms}, {"jitter", m.jitter_fraction}};
  json requests = json::object();
  for (const auto& [type, r] : params.requests) requests[type] = {{"cpu_m", r.cpu_m}, {"mem_mb", r.mem_mb}};
  return json{{"n_inputs", params.n_inputs}, {"runtime", std::move(runtime)}, {"requests", std::move(requests)}};
}

MontageParams parse_montage_params(const json& doc, const std::string& path) {
  if (!doc.is_object()) throw ConfigError(path, "expected an object");
  auto n_it = doc.find("n_inputs");
  if (n_it == doc.end() || !n_it->is_number_integer()) throw ConfigError(path + ".n_inputs", "required integer");
  auto params = MontageParams::defaults(n_it->get<int>(), 0);
  if (params.n_inputs < 4) throw ConfigError(path + ".n_inputs", "must be >= 4");
  if (auto rt = doc.find("runtime"); rt != doc.end()) {
    if (!rt->is_object()) throw ConfigError(path + ".runtime", "expected an object");
    for (const auto& [type, m] : rt->items()) {
      const auto where = path + ".runtime." + type;
      auto& model = params.runtime[type];
      if (!m.is_object()) throw ConfigError(where, "expected {mean_ms, jitter}");
      if (auto v = m.find("mean_ms"); v != m.end()) {
        if (!v->is_number_integer() || v->get<TimeMs>() < 0) throw ConfigError(where + ".mean_ms", "must be an integer >= 0");
        model.mean_ms = v->get<TimeMs>();
      }
      if (auto v = m.find("jitter"); v != m.end()) {
        if (!v->is_number() || v->get<double>() < 0.0 || v->get<double>() >= 1.0)
          throw ConfigError(where + ".jitter", "must be a number in [0, 1)");
        model.jitter_fraction = v->get<double>();
      }
    }
  }
  if (auto rq = doc.find("requests"); rq != doc.end()) {
    if (!rq->is_object()) throw ConfigError(path + ".requests", "expected an object");
    for (const auto& [type, r] : rq->items()) {
      const auto where = path + ".requests." + type;
      auto& prof = params.requests[type];
      if (!r.is_object()) throw ConfigError(where, "expected {cpu_m, mem_mb}");
      prof.cpu_m = r.value("cpu_m", prof.cpu_m);
      prof.mem_mb = r.value("mem_mb", prof.mem_mb);
      if (prof.cpu_m <= 0 || prof.mem_mb <= 0) throw ConfigError(where, "requests must be > 0");
    }
  }
  return params;
}

}  // namespace kwsim
