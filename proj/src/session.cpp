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

#include "prefopt/session.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

namespace prefopt {

using nlohmann::json;

std::string to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::awaiting_feedback: return "awaiting-feedback";
    case SessionStatus::advancing: return "advancing";
    case SessionStatus::finished: return "finished";
  }
  return "?";
}

namespace {

Vector numbers(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw BadRequestError(field + ": expected an array of numbers");
  Vector out(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw BadRequestError(field + ": expected numbers");
    out(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return out;
}

}  // namespace

Box default_safety_box(const SessionSpec& spec) {
  const Vector& u0 = spec.controller.u0;
  if (spec.preset == "thermal") {
    return Box{Vector::Zero(u0.size()), Vector::Constant(u0.size(), 6.0)};
  }
  const double half = std::max(100.0, 10.0 * u0.cwiseAbs().maxCoeff());
  return Box{(u0.array() - half).matrix(), (u0.array() + half).matrix()};
}

SessionSpec session_spec_from_json(const json& body) {
  if (!body.is_object()) throw BadRequestError("request body must be a JSON object");
  std::optional<ExperimentConfig> cfg;
  std::string preset;
  try {
    if (body.contains("preset")) {
      if (!body.at("preset").is_string()) throw BadRequestError("preset: expected a string");
      preset = body.at("preset").get<std::string>();
      cfg = builtin_config(preset);
    } else if (body.contains("config")) {
      cfg = experiment_config_from_json(body.at("config"));
    } else {
      throw BadRequestError("expected 'preset' or 'config'");
    }
    if (body.contains("T")) {
      if (!body.at("T").is_number_integer() || body.at("T").get<long long>() < 1) {
        throw BadRequestError("T: expected a positive integer");
      }
      cfg->controller.horizon = body.at("T").get<std::size_t>();
    }
  } catch (const ConfigError& e) {
    throw BadRequestError(e.what());
  } catch (const json::exception& e) {
    throw BadRequestError(e.what());
  }

  SessionSpec spec{cfg->plant_model(), cfg->utility, cfg->controller, cfg->x0, cfg->safety_box, 0,
                   preset};
  if (body.contains("seed")) {
    if (!body.at("seed").is_number_unsigned()) throw BadRequestError("seed: expected a non-negative integer");
    spec.seed = body.at("seed").get<std::uint64_t>();
  } else {
    std::random_device rd;
    spec.seed = (static_cast<std::uint64_t>(rd()) << 32) | rd();
  }
  if (body.contains("safety_box")) {
    const json& b = body.at("safety_box");
    if (b.is_boolean() && !b.get<bool>()) {
      spec.safety_box.reset();
    } else if (b.is_object() && b.contains("lower") && b.contains("upper")) {
      spec.safety_box = Box{numbers(b.at("lower"), "safety_box.lower"),
                            numbers(b.at("upper"), "safety_box.upper")};
    } else {
      throw BadRequestError("safety_box: expected {\"lower\": [...], \"upper\": [...]} or false");
    }
  } else if (!spec.safety_box) {
    spec.safety_box = default_safety_box(spec);
  }
  if (spec.safety_box) {
    const auto n = static_cast<std::size_t>(spec.controller.u0.size());
    if (spec.safety_box->lower.size() != spec.safety_box->upper.size() ||
        spec.safety_box->dim() != n) {
      throw BadRequestError("safety_box: dimension does not match the " + std::to_string(n) +
                            " plant inputs");
    }
    if (spec.safety_box->empty()) throw BadRequestError("safety_box: lower exceeds upper");
  }
  return spec;
}

// ---------------------------------------------------------------------------

namespace {

DuelingLoop make_loop(const SessionSpec& spec) {
  LoopOptions opts;
  opts.x0 = spec.x0;
  opts.safety_box = spec.safety_box;
  // No utility: the human is the oracle and the latent value stays unknown.
  return DuelingLoop(spec.plant, spec.controller, std::mt19937_64(spec.seed), std::nullopt, opts);
}

}  // namespace

Session::Session(std::string id, SessionSpec spec)
    : id_(std::move(id)), spec_(std::move(spec)), loop_(make_loop(spec_)) {
  loop_.prime();
  if (loop_.finished()) {
    status_ = SessionStatus::finished;
  } else {
    loop_.propose();
  }
}

SessionStatus Session::status() const {
  std::lock_guard lock(mu_);
  return status_;
}

std::size_t Session::step() const {
  std::lock_guard lock(mu_);
  return loop_.step();
}

json Session::observables(const Vector& x) const {
  if (spec_.utility) {
    if (const auto t = spec_.utility->temperature(x)) return json{{"indoor_temperature_c", *t}};
  }
  return json{{"state", to_std(x)}};
}

json Session::row_json(const TrajectoryRow& row) const {
  return json{{"k", row.k},
              {"observables", observables(row.x)},
              {"u", to_std(row.u)},
              {"v", to_std(row.v)},
              {"applied", to_std(row.applied)},
              {"feedback", row.feedback ? json(*row.feedback) : json(nullptr)},
              {"clamped", row.clamped}};
}

json Session::prompt() const {
  std::lock_guard lock(mu_);
  if (status_ == SessionStatus::finished) throw GoneError("session " + id_ + " is finished");
  const Comparison& c = loop_.comparison();
  return json{{"session_id", id_},
              {"step", c.k},
              {"current", observables(c.current_state)},
              {"previous", observables(c.previous_state)},
              {"deadline_policy", "none: the plant advances only when an answer arrives"}};
}

json Session::submit(std::size_t step, const std::string& choice) {
  int feedback = 0;
  if (choice == "current") {
    feedback = 1;
  } else if (choice == "previous") {
    feedback = -1;
  } else {
    throw BadRequestError("choice must be 'current' or 'previous', got '" + choice + "'");
  }
  json ack;
  {
    std::lock_guard lock(mu_);
    if (status_ == SessionStatus::finished) throw GoneError("session " + id_ + " is finished");
    const std::size_t pending = loop_.comparison().k;
    if (step != pending) {
      throw ConflictError("stale step " + std::to_string(step) + "; pending step is " +
                          std::to_string(pending));
    }
    status_ = SessionStatus::advancing;
    loop_.commit(feedback);
    const TrajectoryRow& logged = loop_.rows().back();
    if (loop_.finished()) {
      status_ = SessionStatus::finished;
    } else {
      loop_.propose();
      status_ = SessionStatus::awaiting_feedback;
    }
    ack = json{{"session_id", id_},
               {"accepted_step", step},
               {"feedback", feedback},
               {"clamped", logged.clamped},
               {"u", to_std(loop_.state().u)},
               {"state", observables(loop_.plant_state())},
               {"status", to_string(status_)}};
    if (status_ != SessionStatus::finished) ack["step"] = loop_.step();
    if (status_ == SessionStatus::finished) export_if_finished();
    if (exported_) ack["exported_to"] = *exported_;
  }
  cv_.notify_all();
  return ack;
}

void Session::export_if_finished() {
  if (!export_dir_ || exported_) return;
  try {
    std::filesystem::create_directories(*export_dir_);
    const std::string stem = (*export_dir_ / ("session_" + id_)).string();
    TrajectoryRecord rec;
    rec.meta.seed = spec_.seed;
    rec.meta.variant = "session";
    rec.meta.plant_id = spec_.plant.id();
    rec.meta.oracle_id = "human";
    rec.meta.eta = spec_.controller.eta;
    rec.meta.delta = spec_.controller.delta;
    rec.meta.horizon = spec_.controller.horizon;
    rec.meta.u0 = spec_.controller.u0;
    rec.meta.final_u = loop_.state().u;
    rec.meta.safety_box = spec_.safety_box.has_value();
    rec.rows = loop_.rows();
    save_trajectory(rec, stem);
    exported_ = stem + ".csv";
  } catch (const std::exception&) {
    // Export is best effort; the log stays available over HTTP.
  }
}

std::optional<std::string> Session::exported_to() const {
  std::lock_guard lock(mu_);
  return exported_;
}

TrajectoryRecord Session::record() const {
  std::lock_guard lock(mu_);
  TrajectoryRecord rec;
  rec.meta.seed = spec_.seed;
  rec.meta.variant = "session";
  rec.meta.plant_id = spec_.plant.id();
  rec.meta.oracle_id = "human";
  rec.meta.eta = spec_.controller.eta;
  rec.meta.delta = spec_.controller.delta;
  rec.meta.horizon = spec_.controller.horizon;
  rec.meta.u0 = spec_.controller.u0;
  rec.meta.final_u = loop_.state().u;
  rec.meta.safety_box = spec_.safety_box.has_value();
  rec.rows = loop_.rows();
  return rec;
}

json Session::log() const {
  std::lock_guard lock(mu_);
  json rows = json::array();
  for (const auto& r : loop_.rows()) rows.push_back(row_json(r));
  return json{{"session_id", id_}, {"status", to_string(status_)}, {"rows", rows}};
}

json Session::summary() const {
  std::lock_guard lock(mu_);
  json j{{"session_id", id_},
         {"status", to_string(status_)},
         {"step", loop_.step()},
         {"horizon", spec_.controller.horizon},
         {"eta", spec_.controller.eta},
         {"delta", spec_.controller.delta},
         {"seed", spec_.seed},
         {"n_u", spec_.plant.n_u()},
         {"safety_box", spec_.safety_box.has_value()}};
  if (!spec_.preset.empty()) j["preset"] = spec_.preset;
  if (spec_.safety_box) {
    j["safety_bounds"] = {{"lower", to_std(spec_.safety_box->lower)},
                          {"upper", to_std(spec_.safety_box->upper)}};
  }
  return j;
}

std::size_t Session::row_count() const {
  std::lock_guard lock(mu_);
  return loop_.rows().size();
}

std::vector<json> Session::rows_from(std::size_t index) const {
  std::lock_guard lock(mu_);
  std::vector<json> out;
  const auto& rows = loop_.rows();
  for (std::size_t i = index; i < rows.size(); ++i) out.push_back(row_json(rows[i]));
  return out;
}

std::size_t Session::wait_for_rows(std::size_t known, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] {
    return loop_.rows().size() > known || status_ == SessionStatus::finished;
  });
  return loop_.rows().size();
}

// ---------------------------------------------------------------------------

SessionManager::SessionManager(std::size_t capacity, std::optional<std::filesystem::path> export_dir)
    : capacity_(capacity), export_dir_(std::move(export_dir)), id_rng_(std::random_device{}()) {}

std::string SessionManager::new_id() {
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(id_rng_()),
                static_cast<unsigned long long>(id_rng_()));
  return buf;
}

std::string SessionManager::create(const json& body) {
  SessionSpec spec = session_spec_from_json(body);
  std::lock_guard lock(mu_);
  const auto active = std::count_if(sessions_.begin(), sessions_.end(), [](const auto& kv) {
    return kv.second->status() != SessionStatus::finished;
  });
  if (static_cast<std::size_t>(active) >= capacity_) {
    throw CapacityError("session capacity " + std::to_string(capacity_) + " reached");
  }
  std::string id;
  do {
    id = new_id();
  } while (sessions_.count(id));
  std::shared_ptr<Session> session;
  try {
    session = std::make_shared<Session>(id, std::move(spec));
  } catch (const BadRequestError&) {
    throw;
  } catch (const Error& e) {
    throw BadRequestError(e.what());
  }
  if (export_dir_) session->set_export_dir(*export_dir_);
  sessions_.emplace(id, std::move(session));
  return id;
}

std::shared_ptr<Session> SessionManager::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
  return it->second;
}

json SessionManager::list() const {
  std::lock_guard lock(mu_);
  json out = json::array();
  for (const auto& [id, s] : sessions_) {
    out.push_back(json{{"session_id", id}, {"status", to_string(s->status())}, {"step", s->step()}});
  }
  return out;
}

std::size_t SessionManager::size() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

}  // namespace prefopt
