// Copyright 2026 The prefopt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PREFOPT_SESSION_HPP_
#define PREFOPT_SESSION_HPP_

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefopt/controller.hpp"
#include "prefopt/errors.hpp"
#include "prefopt/harness.hpp"

namespace prefopt {

// Service errors, one per HTTP status.
struct NotFoundError : Error {
  using Error::Error;
};
struct ConflictError : Error {
  using Error::Error;
};
struct BadRequestError : Error {
  using Error::Error;
};
struct GoneError : Error {
  using Error::Error;
};
struct CapacityError : Error {
  using Error::Error;
};

enum class SessionStatus { awaiting_feedback, advancing, finished };
std::string to_string(SessionStatus status);

struct SessionSpec {
  PlantModel plant;
  std::optional<LatentUtility> utility;  // decides the observables only
  ControllerConfig controller;
  std::optional<Vector> x0;
  std::optional<Box> safety_box;
  std::uint64_t seed = 0;
  std::string preset;
};

// Parses a create request: {"preset": "thermal"} or {"config": {...}}, with
// optional "seed", "T" and "safety_box" (an object, or false to disable).
SessionSpec session_spec_from_json(const nlohmann::json& body);

// Default actuator limits: [0, 6] kW for the thermal preset, otherwise
// u0 +- max(100, 10 ||u0||_inf).
Box default_safety_box(const SessionSpec& spec);

class Session {
 public:
  Session(std::string id, SessionSpec spec);

  const std::string& id() const { return id_; }
  SessionStatus status() const;
  std::size_t step() const;

  nlohmann::json prompt() const;
  nlohmann::json submit(std::size_t step, const std::string& choice);
  nlohmann::json log() const;
  nlohmann::json summary() const;

  std::size_t row_count() const;
  std::vector<nlohmann::json> rows_from(std::size_t index) const;
  // Blocks until more than `known` rows exist, the session finishes, or the
  // timeout elapses. Returns the row count.
  std::size_t wait_for_rows(std::size_t known, std::chrono::milliseconds timeout) const;

  // Trajectory in the harness format (rows so far).
  TrajectoryRecord record() const;
  void set_export_dir(std::filesystem::path dir) { export_dir_ = std::move(dir); }
  std::optional<std::string> exported_to() const;

 private:
  nlohmann::json observables(const Vector& x) const;
  nlohmann::json row_json(const TrajectoryRow& row) const;
  void export_if_finished();

  std::string id_;
  SessionSpec spec_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  DuelingLoop loop_;
  SessionStatus status_ = SessionStatus::awaiting_feedback;
  std::optional<std::filesystem::path> export_dir_;
  std::optional<std::string> exported_;
};

class SessionManager {
 public:
  explicit SessionManager(std::size_t capacity = 64,
                          std::optional<std::filesystem::path> export_dir = std::nullopt);

  std::string create(const nlohmann::json& body);
  std::shared_ptr<Session> get(const std::string& id) const;
  nlohmann::json list() const;
  std::size_t size() const;

 private:
  std::string new_id();

  std::size_t capacity_;
  std::optional<std::filesystem::path> export_dir_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mt19937_64 id_rng_;
};

}  // namespace prefopt

#endif  // PREFOPT_SESSION_HPP_
