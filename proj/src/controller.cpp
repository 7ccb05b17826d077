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

#include "prefopt/controller.hpp"

#include <cmath>
#include <limits>

#include "prefopt/errors.hpp"

namespace prefopt {

void ControllerConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("controller.eta must be positive");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("controller.delta must be positive");
  if (!std::isfinite(gain())) throw ConfigError("controller: eta / (2 delta) is not finite");
  if (horizon == 0) throw ConfigError("controller.T must be a positive integer");
  if (u0.size() == 0) throw ConfigError("controller.u0 must be non-empty");
  if (!u0.allFinite()) throw ConfigError("controller.u0 must be finite");
}

ControllerConfig controller_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("controller: expected an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "eta" && key != "delta" && key != "T" && key != "u0") {
      throw ConfigError("controller." + key + ": unknown field (expected eta, delta, T, u0)");
    }
  }
  ControllerConfig c;
  auto number = [&](const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw ConfigError(std::string("controller.") + key + ": expected a number");
    return j.at(key).get<double>();
  };
  c.eta = number("eta", c.eta);
  c.delta = number("delta", c.delta);
  if (j.contains("T")) {
    if (!j.at("T").is_number_integer() || j.at("T").get<long long>() <= 0) {
      throw ConfigError("controller.T: expected a positive integer");
    }
    c.horizon = j.at("T").get<std::size_t>();
  }
  if (!j.contains("u0") || !j.at("u0").is_array()) {
    throw ConfigError("controller.u0: expected an array of numbers");
  }
  std::vector<double> u0;
  for (const auto& v : j.at("u0")) {
    if (!v.is_number()) throw ConfigError("controller.u0: expected numbers");
    u0.push_back(v.get<double>());
  }
  c.u0 = to_vector(u0);
  c.validate();
  return c;
}

nlohmann::json to_json(const ControllerConfig& config) {
  return {{"eta", config.eta}, {"delta", config.delta}, {"T", config.horizon}, {"u0", to_std(config.u0)}};
}

Vector sample_unit_sphere(std::size_t n, std::mt19937_64& rng) {
  if (n == 0) throw DomainError("sample_unit_sphere: dimension must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector g(static_cast<Eigen::Index>(n));
  double norm = 0.0;
  do {
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = normal(rng);
    norm = g.norm();
  } while (!(norm > 0.0));
  return g / norm;
}

Vector dueling_update(const ControllerState& state, int feedback, const ControllerConfig& config) {
  if (feedback != 1 && feedback != -1) {
    throw DomainError("dueling_update: feedback must be +1 or -1, got " + std::to_string(feedback));
  }
  if (state.u.size() != state.v.size()) throw DimensionError("dueling_update: u and v differ in length");
  if (std::abs(state.v.norm() - 1.0) > 1e-12) throw DomainError("dueling_update: v is not a unit vector");
  return state.u + (config.gain() * feedback) * state.v;
}

// ---------------------------------------------------------------------------

DuelingLoop::DuelingLoop(PlantModel plant, ControllerConfig config, std::mt19937_64 rng,
                         std::optional<LatentUtility> utility, LoopOptions options)
    : plant_(std::move(plant)),
      config_(std::move(config)),
      rng_(rng),
      utility_(std::move(utility)),
      options_(std::move(options)) {
  config_.validate();
  if (static_cast<std::size_t>(config_.u0.size()) != plant_.n_u()) {
    throw DimensionError("controller.u0 has length " + std::to_string(config_.u0.size()) +
                         ", plant has " + std::to_string(plant_.n_u()) + " inputs");
  }
  if (utility_) utility_->check_dimensions(plant_.n_x());
  if (options_.x0 && static_cast<std::size_t>(options_.x0->size()) != plant_.n_x()) {
    throw DimensionError("x0 has length " + std::to_string(options_.x0->size()) + ", plant has " +
                         std::to_string(plant_.n_x()) + " states");
  }
  if (options_.u_star && static_cast<std::size_t>(options_.u_star->size()) != plant_.n_u()) {
    throw DimensionError("u_star does not match the plant input dimension");
  }
  if (options_.safety_box && options_.safety_box->dim() != plant_.n_u()) {
    throw DimensionError("safety box does not match the plant input dimension");
  }
  if (options_.certificate &&
      options_.certificate->P.rows() != static_cast<Eigen::Index>(plant_.n_x())) {
    throw DimensionError("Lyapunov certificate does not match the plant");
  }
  state_.u = config_.u0;
  state_.v = Vector::Zero(config_.u0.size());
  x_ = options_.x0 ? *options_.x0 : plant_.steady_state(config_.u0);
}

Vector DuelingLoop::advance(const Vector& applied) const {
  if (options_.evaluation == Evaluation::steady_state) return plant_.steady_state(applied);
  return plant_.step(x_, applied);
}

double DuelingLoop::evaluate(const Vector& state, const Vector& applied) const {
  if (!utility_) return std::numeric_limits<double>::quiet_NaN();
  return utility_->evaluate(state, applied);
}

TrajectoryRow DuelingLoop::make_row(const Vector& x, const Vector& applied, double eval) const {
  TrajectoryRow row;
  row.k = k_;
  row.x = x;
  row.u = state_.u;
  row.v = state_.v;
  row.applied = applied;
  row.utility = eval;
  if (options_.certificate && options_.evaluation == Evaluation::transient) {
    row.lyapunov = lyapunov_value(*options_.certificate, plant_, x, applied);
  }
  if (options_.u_star) row.dist_to_opt = (state_.u - *options_.u_star).norm();
  return row;
}

void DuelingLoop::prime() {
  if (primed_) throw Error("DuelingLoop::prime: already primed");
  state_.v = sample_unit_sphere(plant_.n_u(), rng_);
  const Vector applied = state_.u + config_.delta * state_.v;
  const Vector next = advance(applied);
  const double eval = evaluate(next, applied);
  rows_.push_back(make_row(x_, applied, eval));
  state_.prev_eval = eval;
  prev_input_ = applied;
  x_ = next;
  k_ = 1;
  state_.k = 1;
  primed_ = true;
}

const Comparison& DuelingLoop::propose() {
  if (!primed_) throw Error("DuelingLoop::propose: loop is not primed");
  if (pending_) return *pending_;
  if (k_ >= config_.horizon) throw Error("DuelingLoop::propose: horizon reached");
  state_.v = sample_unit_sphere(plant_.n_u(), rng_);
  state_.k = k_;
  const Vector applied = state_.u + config_.delta * state_.v;
  Vector next = advance(applied);
  const double eval = evaluate(next, applied);
  pending_ = Comparison{k_, std::move(next), applied, x_, prev_input_, eval,
                        state_.prev_eval.value_or(std::numeric_limits<double>::quiet_NaN())};
  return *pending_;
}

void DuelingLoop::commit(int feedback) {
  if (!pending_) throw Error("DuelingLoop::commit: no pending comparison");
  TrajectoryRow row = make_row(x_, pending_->current_input, pending_->current_eval);
  row.feedback = feedback;
  Vector next_u = dueling_update(state_, feedback, config_);
  if (options_.safety_box) {
    const Vector clamped = options_.safety_box->clamp(next_u);
    row.clamped = clamped != next_u;
    next_u = clamped;
  }
  rows_.push_back(std::move(row));
  state_.u = std::move(next_u);
  state_.prev_eval = pending_->current_eval;
  prev_input_ = pending_->current_input;
  x_ = std::move(pending_->current_state);
  pending_.reset();
  ++k_;
  state_.k = k_;
}

const Comparison& DuelingLoop::comparison() const {
  if (!pending_) throw Error("DuelingLoop::comparison: nothing pending");
  return *pending_;
}

// ---------------------------------------------------------------------------

namespace {

TrajectoryRecord run_loop(const PlantModel& plant, PreferenceOracle& oracle,
                          const ControllerConfig& config, std::mt19937_64& rng,
                          LoopOptions options, const char* variant) {
  TrajectoryRecord record;
  record.meta.seed = 0;
  record.meta.oracle_seed = oracle.seed();
  record.meta.variant = variant;
  record.meta.plant_id = plant.id();
  record.meta.oracle_id = oracle.id();
  record.meta.eta = config.eta;
  record.meta.delta = config.delta;
  record.meta.horizon = config.horizon;
  record.meta.u0 = config.u0;
  record.meta.safety_box = options.safety_box.has_value();

  DuelingLoop loop(plant, config, rng, oracle.utility(), std::move(options));
  try {
    loop.prime();
    while (!loop.finished()) {
      const Comparison& c = loop.propose();
      loop.commit(oracle.sample(c.current_eval, c.previous_eval));
    }
  } catch (const std::exception& e) {
    record.meta.error = std::string(e.what()) + " (at step " + std::to_string(loop.step()) + ")";
  }
  record.meta.final_u = loop.state().u;
  record.rows = loop.take_rows();
  rng = loop.rng();
  return record;
}

}  // namespace

TrajectoryRecord run_closed_loop(const PlantModel& plant, PreferenceOracle& oracle,
                                 const ControllerConfig& config, const Vector& x0,
                                 std::mt19937_64& rng, LoopOptions options) {
  options.evaluation = Evaluation::transient;
  options.x0 = x0;
  return run_loop(plant, oracle, config, rng, std::move(options), "closed-loop");
}

TrajectoryRecord run_algebraic_variant(const PlantModel& plant, PreferenceOracle& oracle,
                                       const ControllerConfig& config, std::mt19937_64& rng,
                                       LoopOptions options) {
  options.evaluation = Evaluation::steady_state;
  options.certificate.reset();
  return run_loop(plant, oracle, config, rng, std::move(options), "algebraic");
}

TrajectoryRecord run_ideal_p_descent(const ReducedUtility& reduced, const LinkFunction& link,
                                     double eta, const Vector& u0, std::size_t horizon) {
  if (!reduced.gradient_available()) {
    throw DomainError("run_ideal_p_descent: utility has no analytic gradient");
  }
  if (!link.smooth()) throw DomainError("run_ideal_p_descent: link must be differentiable at 0");
  if (!(eta > 0.0)) throw DomainError("run_ideal_p_descent: eta must be positive");
  if (static_cast<std::size_t>(u0.size()) != reduced.n_u()) {
    throw DimensionError("run_ideal_p_descent: u0 has the wrong length");
  }
  const Vector u_star = reduced.minimizer();
  const double slope = link.derivative_at_zero();

  TrajectoryRecord record;
  record.meta.variant = "ideal-p-descent";
  record.meta.plant_id = reduced.plant().id();
  record.meta.oracle_id = link.name();
  record.meta.eta = eta;
  record.meta.horizon = horizon;
  record.meta.u0 = u0;
  Vector u = u0;
  for (std::size_t k = 0; k < horizon; ++k) {
    TrajectoryRow row;
    row.k = k;
    row.x = reduced.plant().steady_state(u);
    row.u = u;
    row.v = Vector::Zero(u.size());
    row.applied = u;
    row.utility = reduced.evaluate(u);
    row.dist_to_opt = (u - u_star).norm();
    record.rows.push_back(std::move(row));
    u = u - eta * slope * reduced.gradient(u);
  }
  record.meta.final_u = u;
  return record;
}

}  // namespace prefopt
