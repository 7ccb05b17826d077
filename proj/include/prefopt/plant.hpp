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

#ifndef PREFOPT_PLANT_HPP_
#define PREFOPT_PLANT_HPP_

#include <cstddef>
#include <optional>
#include <string>

#include "json.hpp"

#include "prefopt/linalg.hpp"

namespace prefopt {

/// Discrete-time LTI plant x' = A x + B u with spectral radius of A < 1.
///
/// The steady-state map h(u) = (I - A)^{-1} B u is precomputed; its gain
/// matrix H is exposed for analysis code that needs it in closed form.
class PlantModel {
 public:
  PlantModel(Matrix a, Matrix b, std::string id = "plant");

  const Matrix& A() const { return a_; }
  const Matrix& B() const { return b_; }
  const Matrix& steady_state_gain() const { return h_; }
  std::size_t n_x() const { return static_cast<std::size_t>(a_.rows()); }
  std::size_t n_u() const { return static_cast<std::size_t>(b_.cols()); }
  double spectral_radius() const { return spectral_radius_; }
  const std::string& id() const { return id_; }

  Vector step(const Vector& x, const Vector& u) const;
  Vector steady_state(const Vector& u) const;

 private:
  Matrix a_;
  Matrix b_;
  Matrix h_;
  double spectral_radius_ = 0.0;
  std::string id_;
};

struct PlantState {
  Vector x;
  std::size_t k = 0;
};

PlantState plant_step(const PlantModel& model, const PlantState& state, const Vector& input);

Vector steady_state_map(const PlantModel& model, const Vector& u);

// Operator 2-norm of (I - A)^{-1} B, the exact Lipschitz constant of h.
double lipschitz_constant_of_h(const PlantModel& model);

/// Quadratic Lyapunov certificate V(x, u) = (x - h(u))' P (x - h(u)) with
/// A'PA - P = -Q, plus the closed-loop constants derived from it.
struct LyapunovCertificate {
  Matrix P;
  Matrix Q;
  double alpha1 = 0.0;  // lambda_min(P)
  double alpha2 = 0.0;  // lambda_max(P)
  double alpha3 = 0.0;  // lambda_min(Q)
  double mu = 0.0;      // 2 (alpha2 / alpha1) (1 - alpha3 / alpha2)
  double a1 = 0.0;      // 4 alpha2 L_h^2
  double L_h = 0.0;
  double residual = 0.0;  // ||A'PA - P + Q||_F
  std::size_t series_terms = 0;

  // False when mu >= 1: the stability bound built from these constants
  // does not contract and downstream checks are vacuous.
  bool contractive() const { return mu < 1.0; }
};

// Sums P = sum_k (A')^k Q A^k until the tail bound drops below `tail_tol`.
// Returns the number of terms through `terms` when non-null.
Matrix solve_discrete_lyapunov(const Matrix& a, const Matrix& q, double tail_tol = 1e-12,
                               std::size_t* terms = nullptr);

LyapunovCertificate compute_lyapunov_certificate(const PlantModel& model, const Matrix& q,
                                                 double L_h);

// Q = I and the exact L_h.
LyapunovCertificate compute_lyapunov_certificate(const PlantModel& model);

double lyapunov_value(const LyapunovCertificate& cert, const PlantModel& model, const Vector& x,
                      const Vector& u);

// Lower bound on mu over every Lyapunov certificate of the plant:
// mu >= 2 ||A||_2^2. A plant with ||A||_2^2 >= 1/2 cannot have mu < 1.
double certificate_mu_lower_bound(const PlantModel& model);

// Plant file / inline object: {"A": [[...]], "B": [[...]], "Q": [[...]]?}.
struct PlantDefinition {
  PlantModel model;
  std::optional<Matrix> Q;
};

PlantDefinition plant_from_json(const nlohmann::json& j, const std::string& id = "plant");
PlantDefinition load_plant_file(const std::string& path);
nlohmann::json plant_to_json(const PlantModel& model, const std::optional<Matrix>& q = std::nullopt);

// Row-major nested array <-> matrix, with field-qualified error messages.
Matrix matrix_from_json(const nlohmann::json& j, const std::string& field);
nlohmann::json matrix_to_json(const Matrix& m);

}  // namespace prefopt

#endif  // PREFOPT_PLANT_HPP_
