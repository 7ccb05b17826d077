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

#ifndef PREFOPT_CONTROLLER_HPP_
#define PREFOPT_CONTROLLER_HPP_

#include <cstddef>
#include <optional>
#include <random>

#include "json.hpp"
#include "prefopt/linalg.hpp"
#include "prefopt/plant.hpp"
#include "prefopt/preference.hpp"
#include "prefopt/trajectory.hpp"

namespace prefopt {

struct ControllerConfig {
  double eta = 0.1;    // step size
  double delta = 0.5;  // exploration radius
  std::size_t horizon = 3000;
  Vector u0;

  // eta / (2 delta): the length of every input update.
  double gain() const { return eta / (2.0 * delta); }
  void validate() const;
};

ControllerConfig controller_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ControllerConfig& config);

struct ControllerState {
  Vector u;
  Vector v;
  std::optional<double> prev_eval;
  std::size_t k = 0;
};

// Uniform draw from the unit sphere in R^n (normalised Gaussian).
Vector sample_unit_sphere(std::size_t n, std::mt19937_64& rng);

// u_k + (eta / (2 delta)) * feedback * v_k. feedback must be +1 or -1.
Vector dueling_update(const ControllerState& state, int feedback, const ControllerConfig& config);

// Where a perturbed input is judged: at the next plant state, or at the
// exact steady state h(u + delta v) (transient-free baseline).
enum class Evaluation { transient, steady_state };

struct LoopOptions {
  Evaluation evaluation = Evaluation::transient;
  std::optional<Vector> x0;  // default h(u0)
  std::optional<LyapunovCertificate> certificate;
  std::optional<Vector> u_star;
  std::optional<Box> safety_box;
};

// The two alternatives put to the user at step k.
struct Comparison {
  std::size_t k = 0;
  Vector current_state;   // x_{k+1}
  Vector current_input;   // u_k + delta v_k
  Vector previous_state;  // x_k
  Vector previous_input;  // u_{k-1} + delta v_{k-1}
  double current_eval = 0.0;
  double previous_eval = 0.0;
};

/// Step-by-step form of the preference-feedback controller.
///
/// prime() applies u_0 + delta v_0 and records its evaluation without an
/// update. Each later step is propose() (draw v_k, advance the plant, form
/// the comparison) followed by commit(feedback) (log row k, update u).
/// Utilities are evaluated only when a utility is supplied; otherwise the
/// evaluation columns hold NaN and feedback must come from outside.
class DuelingLoop {
 public:
  DuelingLoop(PlantModel plant, ControllerConfig config, std::mt19937_64 rng,
              std::optional<LatentUtility> utility, LoopOptions options = {});

  void prime();
  const Comparison& propose();
  void commit(int feedback);

  bool primed() const { return primed_; }
  bool pending() const { return pending_.has_value(); }
  bool finished() const { return primed_ && !pending_ && k_ >= config_.horizon; }
  const Comparison& comparison() const;
  std::size_t step() const { return k_; }
  const ControllerState& state() const { return state_; }
  const Vector& plant_state() const { return x_; }
  const std::vector<TrajectoryRow>& rows() const { return rows_; }
  std::vector<TrajectoryRow> take_rows() { return std::move(rows_); }
  const std::mt19937_64& rng() const { return rng_; }
  const PlantModel& plant() const { return plant_; }
  const ControllerConfig& config() const { return config_; }
  const LoopOptions& options() const { return options_; }

 private:
  Vector advance(const Vector& applied) const;
  double evaluate(const Vector& state, const Vector& applied) const;
  TrajectoryRow make_row(const Vector& x, const Vector& applied, double eval) const;

  PlantModel plant_;
  ControllerConfig config_;
  std::mt19937_64 rng_;
  std::optional<LatentUtility> utility_;
  LoopOptions options_;

  ControllerState state_;
  Vector x_;           // x_k
  Vector prev_input_;  // u_{k-1} + delta v_{k-1}
  std::size_t k_ = 0;
  bool primed_ = false;
  std::optional<Comparison> pending_;
  std::vector<TrajectoryRow> rows_;
};

TrajectoryRecord run_closed_loop(const PlantModel& plant, PreferenceOracle& oracle,
                                 const ControllerConfig& config, const Vector& x0,
                                 std::mt19937_64& rng, LoopOptions options = {});

// Same loop with utilities judged at h(u + delta v); x0 = h(u0).
TrajectoryRecord run_algebraic_variant(const PlantModel& plant, PreferenceOracle& oracle,
                                       const ControllerConfig& config, std::mt19937_64& rng,
                                       LoopOptions options = {});

// u_{k+1} = u_k - eta grad p_{u_k}(u_k) with grad p_{u_k}(u_k) = sigma'(0) grad Phi~(u_k).
TrajectoryRecord run_ideal_p_descent(const ReducedUtility& reduced, const LinkFunction& link,
                                     double eta, const Vector& u0, std::size_t horizon);

}  // namespace prefopt

#endif  // PREFOPT_CONTROLLER_HPP_
