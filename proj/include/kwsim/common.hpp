#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kwsim {

/// Simulated time. Integer milliseconds everywhere so that runs are bit-reproducible.
using TimeMs = std::int64_t;

using TaskIndex = std::uint32_t;
using PodIndex = std::uint32_t;

inline constexpr std::int32_t kNone = -1;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or input document. `path` names the offending field
/// (e.g. "cluster.backoff.factor") when known.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& message)
      : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Raised when a workflow document or DAG fails validation.
class WorkflowError : public ConfigError {
 public:
  enum class Kind { Parse, DuplicateId, DanglingParent, Cycle, InvalidTask, UnknownTask };

  WorkflowError(Kind kind, std::string offending_id, const std::string& message)
      : ConfigError("", message), kind_(kind), offending_id_(std::move(offending_id)) {}

  Kind kind() const noexcept { return kind_; }
  const std::string& offending_id() const noexcept { return offending_id_; }

 private:
  Kind kind_;
  std::string offending_id_;
};

/// The simulation could not make progress (or exceeded its time guard).
class SimulationError : public Error {
 public:
  SimulationError(const std::string& message, std::vector<std::string> stuck_tasks)
      : Error(message), stuck_tasks_(std::move(stuck_tasks)) {}

  const std::vector<std::string>& stuck_tasks() const noexcept { return stuck_tasks_; }

 private:
  std::vector<std::string> stuck_tasks_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace kwsim
