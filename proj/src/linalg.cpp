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

#include "prefopt/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "prefopt/errors.hpp"

namespace prefopt {

double spectral_radius(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw DimensionError("spectral_radius: matrix is not square");
  }
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

double operator_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

Vector symmetric_eigenvalues(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

Vector to_vector(const std::vector<double>& values) {
  Vector out(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) out(static_cast<Eigen::Index>(i)) = values[i];
  return out;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

std::string format_vector(const Vector& v) {
  std::ostringstream os;
  os << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) os << ", ";
    os << v(i);
  }
  os << ']';
  return os.str();
}

bool Box::empty() const {
  if (lower.size() == 0 || lower.size() != upper.size()) return true;
  return ((upper - lower).array() < 0.0).any();
}

bool Box::contains(const Vector& p) const {
  return p.size() == lower.size() && (p.array() >= lower.array()).all() &&
         (p.array() <= upper.array()).all();
}

Vector Box::clamp(const Vector& p) const {
  if (p.size() != lower.size()) throw DimensionError("Box::clamp: dimension mismatch");
  return p.cwiseMax(lower).cwiseMin(upper);
}

Box Box::inflated(double fraction, double min_pad) const {
  Box out = *this;
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    const double pad = std::max(min_pad, fraction * (upper(i) - lower(i)));
    out.lower(i) -= pad;
    out.upper(i) += pad;
  }
  return out;
}

Box Box::around(const std::vector<Vector>& points) {
  if (points.empty()) throw DomainError("Box::around: no points");
  Box box{points.front(), points.front()};
  for (const auto& p : points) {
    if (p.size() != box.lower.size()) throw DimensionError("Box::around: ragged points");
    box.lower = box.lower.cwiseMin(p);
    box.upper = box.upper.cwiseMax(p);
  }
  return box;
}

}  // namespace prefopt
