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

#include "prefopt/plant.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "prefopt/errors.hpp"

namespace prefopt {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_input(const PlantModel& model, const Vector& u, const char* what) {
  if (static_cast<std::size_t>(u.size()) != model.n_u()) {
    throw DimensionError(std::string(what) + ": input has length " + std::to_string(u.size()) +
                         ", plant expects " + std::to_string(model.n_u()));
  }
}

}  // namespace

PlantModel::PlantModel(Matrix a, Matrix b, std::string id)
    : a_(std::move(a)), b_(std::move(b)), id_(std::move(id)) {
  if (a_.rows() == 0 || a_.rows() != a_.cols()) {
    throw DimensionError("PlantModel: A must be square and non-empty, got " + shape(a_));
  }
  if (b_.rows() != a_.rows() || b_.cols() == 0) {
    throw DimensionError("PlantModel: B must have " + std::to_string(a_.rows()) +
                         " rows and at least one column, got " + shape(b_));
  }
  if (!a_.allFinite() || !b_.allFinite()) {
    throw DomainError("PlantModel: A and B must be finite");
  }
  spectral_radius_ = prefopt::spectral_radius(a_);
  if (!(spectral_radius_ < 1.0)) {
    std::ostringstream os;
    os << "PlantModel: spectral radius of A is " << spectral_radius_ << " (must be < 1)";
    throw StabilityError(os.str());
  }
  const Matrix i_minus_a = Matrix::Identity(a_.rows(), a_.cols()) - a_;
  h_ = i_minus_a.partialPivLu().solve(b_);
}

Vector PlantModel::step(const Vector& x, const Vector& u) const {
  if (static_cast<std::size_t>(x.size()) != n_x()) {
    throw DimensionError("plant_step: state has length " + std::to_string(x.size()) +
                         ", plant expects " + std::to_string(n_x()));
  }
  check_input(*this, u, "plant_step");
  return a_ * x + b_ * u;
}

Vector PlantModel::steady_state(const Vector& u) const {
  check_input(*this, u, "steady_state_map");
  return h_ * u;
}

PlantState plant_step(const PlantModel& model, const PlantState& state, const Vector& input) {
  return {model.step(state.x, input), state.k + 1};
}

Vector steady_state_map(const PlantModel& model, const Vector& u) { return model.steady_state(u); }

double lipschitz_constant_of_h(const PlantModel& model) {
  return operator_norm(model.steady_state_gain());
}

Matrix solve_discrete_lyapunov(const Matrix& a, const Matrix& q, double tail_tol,
                               std::size_t* terms) {
  if (a.rows() != a.cols() || q.rows() != a.rows() || q.cols() != a.cols()) {
    throw DimensionError("solve_discrete_lyapunov: A is " + shape(a) + ", Q is " + shape(q));
  }
  if (!(prefopt::spectral_radius(a) < 1.0)) {
    throw StabilityError("solve_discrete_lyapunov: A is not Schur stable");
  }
  // Partial sum P_N = sum_{k<N} (A')^k Q A^k. The remainder equals
  // (A^N)' P_inf A^N, and P_inf <= ||P_N|| / (1 - ||A^N||^2) whenever
  // ||A^N|| < 1, which gives a computable tail bound.
  constexpr std::size_t kMaxTerms = 2'000'000;
  Matrix p = q;
  Matrix power = a;  // A^N
  Matrix term = q;
  std::size_t n = 1;
  for (; n < kMaxTerms; ++n) {
    const double pn = power.norm();  // Frobenius >= spectral
    if (pn < 1.0) {
      const double bound = pn * pn * p.norm() / (1.0 - pn * pn);
      if (bound < tail_tol) break;
    }
    term = a.transpose() * term * a;
    p += term;
    power = power * a;
  }
  if (n == kMaxTerms) throw ConvergenceError("solve_discrete_lyapunov: series did not converge");
  if (terms) *terms = n;
  return 0.5 * (p + p.transpose());
}

LyapunovCertificate compute_lyapunov_certificate(const PlantModel& model, const Matrix& q,
                                                 double L_h) {
  if (q.rows() != static_cast<Eigen::Index>(model.n_x()) || q.cols() != q.rows()) {
    throw DimensionError("compute_lyapunov_certificate: Q is " + shape(q) + ", expected " +
                         std::to_string(model.n_x()) + "x" + std::to_string(model.n_x()));
  }
  if (!is_symmetric(q)) throw DomainError("compute_lyapunov_certificate: Q is not symmetric");
  const Vector q_eigs = symmetric_eigenvalues(q);
  if (!(q_eigs(0) > 0.0)) {
    throw DomainError("compute_lyapunov_certificate: Q is not positive definite");
  }
  if (!(L_h > 0.0)) throw DomainError("compute_lyapunov_certificate: L_h must be positive");

  LyapunovCertificate cert;
  cert.Q = q;
  cert.P = solve_discrete_lyapunov(model.A(), q, 1e-12, &cert.series_terms);
  const Vector p_eigs = symmetric_eigenvalues(cert.P);
  cert.alpha1 = p_eigs(0);
  cert.alpha2 = p_eigs(p_eigs.size() - 1);
  cert.alpha3 = q_eigs(0);
  cert.mu = 2.0 * (cert.alpha2 / cert.alpha1) * (1.0 - cert.alpha3 / cert.alpha2);
  cert.L_h = L_h;
  cert.a1 = 4.0 * cert.alpha2 * L_h * L_h;
  cert.residual = (model.A().transpose() * cert.P * model.A() - cert.P + q).norm();
  return cert;
}

LyapunovCertificate compute_lyapunov_certificate(const PlantModel& model) {
  const auto n = static_cast<Eigen::Index>(model.n_x());
  return compute_lyapunov_certificate(model, Matrix::Identity(n, n),
                                      lipschitz_constant_of_h(model));
}

double lyapunov_value(const LyapunovCertificate& cert, const PlantModel& model, const Vector& x,
                      const Vector& u) {
  if (cert.P.rows() != static_cast<Eigen::Index>(model.n_x())) {
    throw DimensionError("lyapunov_value: certificate does not match plant");
  }
  if (static_cast<std::size_t>(x.size()) != model.n_x()) {
    throw DimensionError("lyapunov_value: state has length " + std::to_string(x.size()));
  }
  const Vector e = x - model.steady_state(u);
  return e.dot(cert.P * e);
}

double certificate_mu_lower_bound(const PlantModel& model) {
  const double n = operator_norm(model.A());
  return 2.0 * n * n;
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) {
    throw ConfigError("field '" + field + "': expected a non-empty array of rows");
  }
  const std::size_t rows = j.size();
  std::size_t cols = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& row = j[r];
    const std::string where = field + "[" + std::to_string(r) + "]";
    if (!row.is_array() || row.empty()) {
      throw ConfigError("field '" + where + "': expected a non-empty array of numbers");
    }
    if (r == 0) cols = row.size();
    if (row.size() != cols) {
      throw ConfigError("field '" + where + "': row has " + std::to_string(row.size()) +
                        " entries, row 0 has " + std::to_string(cols));
    }
  }
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const auto& v = j[r][c];
      if (!v.is_number()) {
        throw ConfigError("field '" + field + "[" + std::to_string(r) + "][" + std::to_string(c) +
                          "]': expected a number");
      }
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v.get<double>();
    }
  }
  return m;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  auto out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

PlantDefinition plant_from_json(const nlohmann::json& j, const std::string& id) {
  if (!j.is_object()) throw ConfigError("plant: expected an object with fields A and B");
  if (!j.contains("A")) throw ConfigError("plant: missing field 'A'");
  if (!j.contains("B")) throw ConfigError("plant: missing field 'B'");
  Matrix a = matrix_from_json(j.at("A"), "A");
  Matrix b = matrix_from_json(j.at("B"), "B");
  if (a.rows() != a.cols()) throw ConfigError("field 'A': must be square, got " + shape(a));
  if (b.rows() != a.rows()) {
    throw ConfigError("field 'B': has " + std::to_string(b.rows()) + " rows, A has " +
                      std::to_string(a.rows()));
  }
  const double radius = prefopt::spectral_radius(a);
  if (!(radius < 1.0)) {
    std::ostringstream os;
    os << "field 'A': unstable, spectral radius " << radius << " >= 1";
    throw ConfigError(os.str());
  }
  std::optional<Matrix> q;
  if (j.contains("Q") && !j.at("Q").is_null()) {
    q = matrix_from_json(j.at("Q"), "Q");
    if (q->rows() != a.rows() || q->cols() != a.cols()) {
      throw ConfigError("field 'Q': must be " + shape(a) + ", got " + shape(*q));
    }
    if (!is_symmetric(*q)) throw ConfigError("field 'Q': not symmetric");
  }
  std::string name = id;
  if (j.contains("id") && j.at("id").is_string()) name = j.at("id").get<std::string>();
  return {PlantModel(std::move(a), std::move(b), name), std::move(q)};
}

PlantDefinition load_plant_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("plant file '" + path + "': cannot open");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("plant file '" + path + "': " + e.what());
  }
  try {
    return plant_from_json(j, path);
  } catch (const ConfigError& e) {
    throw ConfigError("plant file '" + path + "': " + e.what());
  }
}

nlohmann::json plant_to_json(const PlantModel& model, const std::optional<Matrix>& q) {
  nlohmann::json j;
  j["id"] = model.id();
  j["A"] = matrix_to_json(model.A());
  j["B"] = matrix_to_json(model.B());
  if (q) j["Q"] = matrix_to_json(*q);
  return j;
}

}  // namespace prefopt
