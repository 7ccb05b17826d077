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

#ifndef PREFOPT_PREFERENCE_HPP_
#define PREFOPT_PREFERENCE_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <variant>

#include "json.hpp"
#include "prefopt/linalg.hpp"
#include "prefopt/plant.hpp"

namespace prefopt {

// ---------------------------------------------------------------------------
// Thermal comfort (ISO 7730 / Fanger).

struct PmvEnvironment {
  double met = 1.1;               // metabolic rate [met]
  double clo = 0.57;              // clothing insulation [clo]
  double vel = 0.1;               // relative air velocity [m/s]
  double rh = 50.0;               // relative humidity [%]
  std::optional<double> tr;       // mean radiant temperature [C]; air temperature if unset
  double wme = 0.0;               // external work [met]

  // Throws DomainError outside met in [0.8, 4], clo in [0, 2], rh in [0, 100].
  void validate() const;
};

PmvEnvironment pmv_environment_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PmvEnvironment& env);

// Predicted mean vote at the given air temperature. The clothing surface
// temperature fixed point is iterated to 1e-6 K; more than 150 iterations
// raise ConvergenceError.
double pmv(const PmvEnvironment& env, double air_temperature);

// Predicted percentage dissatisfied, 100 - 95 exp(-(0.03353 PMV^4 + 0.2179 PMV^2)).
double ppd(double pmv_value);

// ---------------------------------------------------------------------------
// Link functions sigma: utility difference -> preference probability.

enum class LinkKind { logistic, probit, sign };

class LinkFunction {
 public:
  explicit LinkFunction(LinkKind kind = LinkKind::logistic) : kind_(kind) {}

  static LinkFunction parse(const std::string& name);

  LinkKind kind() const { return kind_; }
  std::string name() const;

  double operator()(double t) const;
  // sigma'(t); infinite at 0 for the sign link.
  double derivative(double t) const;
  // log sigma(t), accurate where sigma(t) underflows.
  double log_value(double t) const;
  double derivative_at_zero() const { return derivative(0.0); }
  // Global Lipschitz constant of sigma (L_sigma0) and of sigma' (L_sigma1).
  double lipschitz() const;
  double smoothness() const;
  bool smooth() const { return kind_ != LinkKind::sign; }

 private:
  LinkKind kind_;
};

// Probability in [0, 1]; throws DomainError for non-finite t.
double link_eval(const LinkFunction& link, double t);

// ---------------------------------------------------------------------------
// Latent utilities (lower is better).

struct QuadraticTracking {
  Vector x_ref;
};

// PPD of the indoor air temperature offset + x[state_index].
struct PpdComfort {
  std::size_t state_index = 0;
  double temperature_offset = 0.0;
  PmvEnvironment env;
};

struct CustomBlackbox {
  std::string name;
  std::function<double(const Vector&, const Vector&)> fn;
};

enum class UtilityKind { quadratic_tracking, ppd_comfort, custom_blackbox };

class LatentUtility {
 public:
  using Variant = std::variant<QuadraticTracking, PpdComfort, CustomBlackbox>;

  explicit LatentUtility(Variant v);

  static LatentUtility quadratic(Vector x_ref) { return LatentUtility(QuadraticTracking{std::move(x_ref)}); }
  static LatentUtility ppd_comfort(std::size_t state_index, double offset, PmvEnvironment env = {});
  static LatentUtility custom(std::string name, std::function<double(const Vector&, const Vector&)> fn);

  UtilityKind kind() const;
  std::string kind_name() const;
  bool gradient_available() const { return kind() == UtilityKind::quadratic_tracking; }
  const Variant& params() const { return params_; }

  double evaluate(const Vector& x, const Vector& u) const;
  // Gradient with respect to x (quadratic kind only).
  Vector gradient_x(const Vector& x, const Vector& u) const;

  // Scalar the human perceives: indoor temperature for PPD comfort.
  std::optional<double> temperature(const Vector& x) const;

  // Sup of ||grad_x Phi|| over a box of states (quadratic kind).
  double state_lipschitz_on(const Box& state_box) const;

  // Checks dimensions against the plant (state_index, x_ref length).
  void check_dimensions(std::size_t n_x) const;

 private:
  Variant params_;
};

double evaluate_utility(const LatentUtility& utility, const Vector& x, const Vector& input);

LatentUtility utility_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LatentUtility& utility);

/// Steady-state reduction Phi~(u) = Phi(h(u), u).
class ReducedUtility {
 public:
  ReducedUtility(LatentUtility utility, PlantModel plant);

  const LatentUtility& utility() const { return utility_; }
  const PlantModel& plant() const { return plant_; }
  std::size_t n_u() const { return plant_.n_u(); }
  bool gradient_available() const { return utility_.gradient_available(); }

  double evaluate(const Vector& u) const;
  Vector gradient(const Vector& u) const;
  // Constant Hessian 2 H'H of the quadratic kind.
  Matrix hessian() const;
  // Unique minimizer of the quadratic kind (least squares on H u = x_ref).
  Vector minimizer() const;

 private:
  const QuadraticTracking& quadratic() const;

  LatentUtility utility_;
  PlantModel plant_;
};

double evaluate_reduced(const ReducedUtility& reduced, const Vector& input);

// ---------------------------------------------------------------------------
// Comparison oracle.

/// Draws pairwise preferences: +1 means the first alternative is preferred,
/// with probability sigma(phi_second - phi_first). Owns its RNG stream.
class PreferenceOracle {
 public:
  PreferenceOracle(LinkFunction link, LatentUtility utility, std::uint64_t seed);

  const LinkFunction& link() const { return link_; }
  const LatentUtility& utility() const { return utility_; }
  std::uint64_t seed() const { return seed_; }
  std::string id() const { return link_.name() + "/" + utility_.kind_name(); }

  double probability_first(double phi_first, double phi_second) const;
  int sample(double phi_first, double phi_second);

 private:
  LinkFunction link_;
  LatentUtility utility_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
};

int sample_preference(PreferenceOracle& oracle, double phi_first, double phi_second);

}  // namespace prefopt

#endif  // PREFOPT_PREFERENCE_HPP_
