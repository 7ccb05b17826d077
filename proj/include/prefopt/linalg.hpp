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

#ifndef PREFOPT_LINALG_HPP_
#define PREFOPT_LINALG_HPP_

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace prefopt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

double spectral_radius(const Matrix& m);

// Largest singular value.
double operator_norm(const Matrix& m);

bool is_symmetric(const Matrix& m, double tol = 1e-12);

// Eigenvalues of a symmetric matrix in ascending order.
Vector symmetric_eigenvalues(const Matrix& m);

Vector to_vector(const std::vector<double>& values);
std::vector<double> to_std(const Vector& v);

// "[1, 2, 3]" for error messages and logs.
std::string format_vector(const Vector& v);

// Axis-aligned box [lower, upper].
struct Box {
  Vector lower;
  Vector upper;

  std::size_t dim() const { return static_cast<std::size_t>(lower.size()); }
  bool empty() const;
  bool contains(const Vector& p) const;
  Vector clamp(const Vector& p) const;
  Vector center() const { return 0.5 * (lower + upper); }
  // Grows every side by `fraction` of its width (at least `min_pad`).
  Box inflated(double fraction, double min_pad = 0.0) const;

  static Box around(const std::vector<Vector>& points);
};

}  // namespace prefopt

#endif  // PREFOPT_LINALG_HPP_
