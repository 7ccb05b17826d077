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

#include "prefopt/preference.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "prefopt/errors.hpp"

namespace prefopt {

// ---------------------------------------------------------------------------
// LinkFunction

LinkFunction LinkFunction::parse(const std::string& name) {
  if (name == "logistic" || name == "bradley-terry") return LinkFunction(LinkKind::logistic);
  if (name == "probit" || name == "thurstone-mosteller") return LinkFunction(LinkKind::probit);
  if (name == "sign" || name == "noise-free") return LinkFunction(LinkKind::sign);
  throw ConfigError("unknown link '" + name + "' (expected logistic, probit or sign)");
}

std::string LinkFunction::name() const {
  switch (kind_) {
    case LinkKind::logistic: return "logistic";
    case LinkKind::probit: return "probit";
    case LinkKind::sign: return "sign";
  }
  return "?";
}

double LinkFunction::operator()(double t) const {
  switch (kind_) {
    case LinkKind::logistic:
      if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
      return std::exp(t) / (1.0 + std::exp(t));
    case LinkKind::probit:
      return 0.5 * std::erfc(-t / std::numbers::sqrt2);
    case LinkKind::sign:
      if (t > 0.0) return 1.0;
      if (t < 0.0) return 0.0;
      return 0.5;
  }
  return 0.5;
}

double LinkFunction::derivative(double t) const {
  switch (kind_) {
    case LinkKind::logistic: {
      const double e = std::exp(-std::abs(t));
      return e / ((1.0 + e) * (1.0 + e));
    }
    case LinkKind::probit:
      return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
    case LinkKind::sign:
      return t == 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return 0.0;
}

double LinkFunction::log_value(double t) const {
  switch (kind_) {
    case LinkKind::logistic:
      if (t >= 0.0) return -std::log1p(std::exp(-t));
      return t - std::log1p(std::exp(t));
    case LinkKind::probit:
      if (t > -30.0) return std::log(0.5 * std::erfc(-t / std::numbers::sqrt2));
      // Mills-ratio tail of the normal cdf.
      return -0.5 * t * t - std::log(-t) - 0.5 * std::log(2.0 * std::numbers::pi) +
             std::log1p(-1.0 / (t * t));
    case LinkKind::sign:
      return std::log((*this)(t));
  }
  return 0.0;
}

double LinkFunction::lipschitz() const {
  switch (kind_) {
    case LinkKind::logistic: return 0.25;
    case LinkKind::probit: return 1.0 / std::sqrt(2.0 * std::numbers::pi);
    case LinkKind::sign: return std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

double LinkFunction::smoothness() const {
  switch (kind_) {
    // max |s(1-s)(1-2s)|, attained where s = 1/2 -+ 1/(2 sqrt 3)
    case LinkKind::logistic: return 1.0 / (6.0 * std::sqrt(3.0));
    // max |t phi(t)| at t = 1
    case LinkKind::probit: return std::exp(-0.5) / std::sqrt(2.0 * std::numbers::pi);
    case LinkKind::sign: return std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

double link_eval(const LinkFunction& link, double t) {
  if (!std::isfinite(t)) throw DomainError("link_eval: argument is not finite");
  return link(t);
}

// ---------------------------------------------------------------------------
// LatentUtility

LatentUtility::LatentUtility(Variant v) : params_(std::move(v)) {
  if (const auto* p = std::get_if<PpdComfort>(&params_)) p->env.validate();
  if (const auto* c = std::get_if<CustomBlackbox>(&params_)) {
    if (!c->fn) throw DomainError("custom utility '" + c->name + "' has no function");
  }
}

LatentUtility LatentUtility::ppd_comfort(std::size_t state_index, double offset, PmvEnvironment env) {
  return LatentUtility(PpdComfort{state_index, offset, env});
}

LatentUtility LatentUtility::custom(std::string name,
                                    std::function<double(const Vector&, const Vector&)> fn) {
  return LatentUtility(CustomBlackbox{std::move(name), std::move(fn)});
}

UtilityKind LatentUtility::kind() const {
  switch (params_.index()) {
    case 0: return UtilityKind::quadratic_tracking;
    case 1: return UtilityKind::ppd_comfort;
    default: return UtilityKind::custom_blackbox;
  }
}

std::string LatentUtility::kind_name() const {
  switch (kind()) {
    case UtilityKind::quadratic_tracking: return "quadratic-tracking";
    case UtilityKind::ppd_comfort: return "ppd-comfort";
    case UtilityKind::custom_blackbox: return "custom-blackbox";
  }
  return "?";
}

double LatentUtility::evaluate(const Vector& x, const Vector& u) const {
  if (const auto* q = std::get_if<QuadraticTracking>(&params_)) {
    if (x.size() != q->x_ref.size()) {
      throw DimensionError("quadratic utility: state has length " + std::to_string(x.size()) +
                           ", x_ref has " + std::to_string(q->x_ref.size()));
    }
    return (x - q->x_ref).squaredNorm();
  }
  if (const auto* p = std::get_if<PpdComfort>(&params_)) {
    return ppd(pmv(p->env, *temperature(x)));
  }
  const auto& c = std::get<CustomBlackbox>(params_);
  return c.fn(x, u);
}

Vector LatentUtility::gradient_x(const Vector& x, const Vector& /*u*/) const {
  const auto* q = std::get_if<QuadraticTracking>(&params_);
  if (!q) throw DomainError(kind_name() + " utility has no analytic gradient");
  if (x.size() != q->x_ref.size()) throw DimensionError("quadratic utility: state length mismatch");
  return 2.0 * (x - q->x_ref);
}

std::optional<double> LatentUtility::temperature(const Vector& x) const {
  const auto* p = std::get_if<PpdComfort>(&params_);
  if (!p) return std::nullopt;
  if (p->state_index >= static_cast<std::size_t>(x.size())) {
    throw DimensionError("ppd utility: state_index " + std::to_string(p->state_index) +
                         " outside state of length " + std::to_string(x.size()));
  }
  return p->temperature_offset + x(static_cast<Eigen::Index>(p->state_index));
}

double LatentUtility::state_lipschitz_on(const Box& state_box) const {
  const auto* q = std::get_if<QuadraticTracking>(&params_);
  if (!q) throw DomainError(kind_name() + " utility: no closed-form state Lipschitz constant");
  if (state_box.empty() || state_box.dim() != static_cast<std::size_t>(q->x_ref.size())) {
    throw DimensionError("state_lipschitz_on: box does not match x_ref");
  }
  // ||2(x - x_ref)|| is maximised at the corner farthest from x_ref.
  const Vector far = (state_box.lower - q->x_ref).cwiseAbs().cwiseMax((state_box.upper - q->x_ref).cwiseAbs());
  return 2.0 * far.norm();
}

void LatentUtility::check_dimensions(std::size_t n_x) const {
  if (const auto* q = std::get_if<QuadraticTracking>(&params_)) {
    if (static_cast<std::size_t>(q->x_ref.size()) != n_x) {
      throw DimensionError("utility x_ref has length " + std::to_string(q->x_ref.size()) +
                           ", plant has " + std::to_string(n_x) + " states");
    }
  } else if (const auto* p = std::get_if<PpdComfort>(&params_)) {
    if (p->state_index >= n_x) {
      throw DimensionError("utility state_index " + std::to_string(p->state_index) +
                           " outside plant with " + std::to_string(n_x) + " states");
    }
  }
}

double evaluate_utility(const LatentUtility& utility, const Vector& x, const Vector& input) {
  return utility.evaluate(x, input);
}

LatentUtility utility_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string()) {
    throw ConfigError("utility: expected an object with a string field 'kind'");
  }
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "quadratic" || kind == "quadratic-tracking") {
    if (!j.contains("x_ref") || !j.at("x_ref").is_array()) {
      throw ConfigError("utility.x_ref: expected an array of numbers");
    }
    std::vector<double> ref;
    for (const auto& v : j.at("x_ref")) {
      if (!v.is_number()) throw ConfigError("utility.x_ref: expected numbers");
      ref.push_back(v.get<double>());
    }
    return LatentUtility::quadratic(to_vector(ref));
  }
  if (kind == "ppd" || kind == "ppd-comfort") {
    PpdComfort p;
    if (j.contains("state_index")) {
      if (!j.at("state_index").is_number_unsigned()) {
        throw ConfigError("utility.state_index: expected a non-negative integer");
      }
      p.state_index = j.at("state_index").get<std::size_t>();
    }
    if (j.contains("temperature_offset")) {
      if (!j.at("temperature_offset").is_number()) {
        throw ConfigError("utility.temperature_offset: expected a number");
      }
      p.temperature_offset = j.at("temperature_offset").get<double>();
    }
    p.env = pmv_environment_from_json(j.value("env", nlohmann::json(nullptr)));
    return LatentUtility(p);
  }
  throw ConfigError("utility.kind: unknown kind '" + kind + "' (expected quadratic or ppd)");
}

nlohmann::json to_json(const LatentUtility& utility) {
  if (const auto* q = std::get_if<QuadraticTracking>(&utility.params())) {
    return {{"kind", "quadratic-tracking"}, {"x_ref", to_std(q->x_ref)}};
  }
  if (const auto* p = std::get_if<PpdComfort>(&utility.params())) {
    return {{"kind", "ppd"},
            {"state_index", p->state_index},
            {"temperature_offset", p->temperature_offset},
            {"env", to_json(p->env)}};
  }
  return {{"kind", "custom"}, {"name", std::get<CustomBlackbox>(utility.params()).name}};
}

// ---------------------------------------------------------------------------
// ReducedUtility

ReducedUtility::ReducedUtility(LatentUtility utility, PlantModel plant)
    : utility_(std::move(utility)), plant_(std::move(plant)) {
  utility_.check_dimensions(plant_.n_x());
}

double ReducedUtility::evaluate(const Vector& u) const {
  return utility_.evaluate(plant_.steady_state(u), u);
}

const QuadraticTracking& ReducedUtility::quadratic() const {
  const auto* q = std::get_if<QuadraticTracking>(&utility_.params());
  if (!q) throw DomainError(utility_.kind_name() + " reduced utility has no analytic gradient");
  return *q;
}

Vector ReducedUtility::gradient(const Vector& u) const {
  const auto& q = quadratic();
  const Matrix& h = plant_.steady_state_gain();
  return 2.0 * h.transpose() * (plant_.steady_state(u) - q.x_ref);
}

Matrix ReducedUtility::hessian() const {
  quadratic();
  const Matrix& h = plant_.steady_state_gain();
  return 2.0 * h.transpose() * h;
}

Vector ReducedUtility::minimizer() const {
  const auto& q = quadratic();
  const Matrix& h = plant_.steady_state_gain();
  const Matrix hth = h.transpose() * h;
  Eigen::LDLT<Matrix> ldlt(hth);
  if (ldlt.info() != Eigen::Success || !(symmetric_eigenvalues(hth)(0) > 0.0)) {
    throw DomainError("reduced utility is not strongly convex (H'H is singular)");
  }
  return ldlt.solve(h.transpose() * q.x_ref);
}

double evaluate_reduced(const ReducedUtility& reduced, const Vector& input) {
  return reduced.evaluate(input);
}

// ---------------------------------------------------------------------------
// PreferenceOracle

PreferenceOracle::PreferenceOracle(LinkFunction link, LatentUtility utility, std::uint64_t seed)
    : link_(link), utility_(std::move(utility)), seed_(seed), rng_(seed) {}

double PreferenceOracle::probability_first(double phi_first, double phi_second) const {
  return link_(phi_second - phi_first);
}

int PreferenceOracle::sample(double phi_first, double phi_second) {
  if (std::isnan(phi_first) || std::isnan(phi_second)) {
    throw DomainError("sample_preference: utility is NaN");
  }
  const double t = phi_second - phi_first;
  if (link_.kind() == LinkKind::sign && t != 0.0) return t > 0.0 ? 1 : -1;
  // Ties under the sign link fall through to a fair coin (p = 1/2).
  const double p = std::isfinite(t) ? link_(t) : (t > 0.0 ? 1.0 : 0.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  return uniform(rng_) < p ? 1 : -1;
}

int sample_preference(PreferenceOracle& oracle, double phi_first, double phi_second) {
  return oracle.sample(phi_first, phi_second);
}

}  // namespace prefopt
