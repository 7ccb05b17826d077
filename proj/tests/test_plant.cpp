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

#include <cmath>
#include <random>

#include "doctest.h"
#include "prefopt/analysis.hpp"
#include "prefopt/errors.hpp"
#include "prefopt/plant.hpp"

using namespace prefopt;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

Vector vec(std::initializer_list<double> v) { return to_vector(std::vector<double>(v)); }

PlantModel quad_plant(double c) { return PlantModel(mat({{c, 1}, {0, c}}), Matrix::Identity(2, 2)); }

// Independent oracle: plain loops, no Eigen products.
std::vector<double> matvec(const Matrix& m, const std::vector<double>& x) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()), 0.0);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i] += m(i, j) * x[j];
  return out;
}

PlantModel random_stable(std::mt19937_64& rng, int n, int m, double radius) {
  std::normal_distribution<double> g;
  Matrix a(n, n), b(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) b(i, j) = g(rng);
  a *= radius / spectral_radius(a);
  return PlantModel(a, b);
}

}  // namespace

TEST_CASE("plant_step examples") {
  const PlantModel deadbeat(Matrix::Zero(2, 2), Matrix::Identity(2, 2));
  const auto s = plant_step(deadbeat, PlantState{vec({3, 3}), 4}, vec({1, 2}));
  CHECK(s.x == vec({1, 2}));
  CHECK(s.k == 5);

  // Two steps from rest under u = [-10, 90], checked against plain loops.
  const PlantModel p = quad_plant(0.1);
  const Vector u = vec({-10, 90});
  const auto s1 = plant_step(p, PlantState{vec({0, 0}), 0}, u);
  CHECK(s1.x(0) == doctest::Approx(-10).epsilon(1e-15));
  CHECK(s1.x(1) == doctest::Approx(90).epsilon(1e-15));
  const auto s2 = plant_step(p, s1, u);
  auto oracle = matvec(p.A(), to_std(s1.x));
  oracle[0] += u(0);
  oracle[1] += u(1);
  CHECK(s2.x(0) == doctest::Approx(oracle[0]).epsilon(1e-15));
  CHECK(s2.x(1) == doctest::Approx(oracle[1]).epsilon(1e-15));
  CHECK(s2.x(0) == doctest::Approx(79.0));
  CHECK(s2.x(1) == doctest::Approx(99.0));

  CHECK_THROWS_AS(plant_step(p, PlantState{vec({0, 0}), 0}, vec({1})), DimensionError);
  CHECK_THROWS_AS(plant_step(p, PlantState{vec({0}), 0}, u), DimensionError);
}

TEST_CASE("steady_state_map examples") {
  const PlantModel deadbeat(Matrix::Zero(2, 2), Matrix::Identity(2, 2));
  CHECK(steady_state_map(deadbeat, vec({1, 2})) == vec({1, 2}));

  const Vector h = steady_state_map(quad_plant(0.1), vec({-10, 90}));
  CHECK(h(0) == doctest::Approx(100).epsilon(1e-12));
  CHECK(h(1) == doctest::Approx(100).epsilon(1e-12));

  const PlantModel scalar(mat({{0.5}}), mat({{2}}));
  CHECK(steady_state_map(scalar, vec({1}))(0) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("unstable or malformed plants are rejected") {
  CHECK_THROWS_AS(PlantModel(mat({{1.0}}), mat({{1}})), StabilityError);
  CHECK_THROWS_AS(PlantModel(mat({{0.5, 2}, {0, 1.2}}), Matrix::Identity(2, 2)), StabilityError);
  CHECK_THROWS_AS(PlantModel(mat({{0.5, 0}}), mat({{1}})), DimensionError);
  CHECK_THROWS_AS(PlantModel(mat({{0.5}}), mat({{1}, {1}})), DimensionError);
}

TEST_CASE("fixed point and geometric convergence") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int t = 0; t < 50; ++t) {
    const PlantModel p = random_stable(rng, 1 + t % 5, 1 + t % 3, 0.3 + 0.013 * t);
    Vector u(static_cast<Eigen::Index>(p.n_u()));
    for (auto& x : u) x = g(rng);
    const Vector h = p.steady_state(u);
    CHECK((p.step(h, u) - h).norm() <= 1e-10 * (1.0 + h.norm()));

    Vector x(static_cast<Eigen::Index>(p.n_x()));
    for (auto& xi : x) xi = 10.0 * g(rng);
    const double d0 = (x - h).norm();
    for (int k = 0; k < 200; ++k) x = p.step(x, u);
    const double envelope = 1e3 * d0 * std::pow(p.spectral_radius() + 0.05, 200);
    CHECK((x - h).norm() <= std::max(envelope, 1e-9 * (1.0 + h.norm())));
  }
}

TEST_CASE("lipschitz_constant_of_h examples") {
  CHECK(lipschitz_constant_of_h(PlantModel(Matrix::Zero(3, 3), Matrix::Identity(3, 3))) ==
        doctest::Approx(1.0));
  CHECK(lipschitz_constant_of_h(PlantModel(mat({{0.5}}), mat({{2}}))) == doctest::Approx(4.0));
  // H = [[1/0.9, 1/0.81], [0, 1/0.9]]; largest singular value from the
  // closed-form 2x2 eigenvalues of H'H.
  const double a = 1 / 0.9, b = 1 / 0.81;
  const double t = a * a + b * b + a * a, det = a * a * a * a;
  const double smax = std::sqrt((t + std::sqrt(t * t - 4 * det)) / 2);
  CHECK(lipschitz_constant_of_h(quad_plant(0.1)) == doctest::Approx(smax).epsilon(1e-12));
}

TEST_CASE("Lyapunov certificate examples") {
  SUBCASE("deadbeat") {
    for (int n = 1; n <= 4; ++n) {
      const PlantModel p(Matrix::Zero(n, n), Matrix::Identity(n, n));
      const auto c = compute_lyapunov_certificate(p, Matrix::Identity(n, n), 1.0);
      CHECK((c.P - Matrix::Identity(n, n)).norm() == doctest::Approx(0.0));
      CHECK(c.alpha1 == doctest::Approx(1.0));
      CHECK(c.alpha2 == doctest::Approx(1.0));
      CHECK(c.alpha3 == doctest::Approx(1.0));
      CHECK(c.mu == doctest::Approx(0.0));
      CHECK(c.a1 == doctest::Approx(4.0));
      CHECK(c.contractive());
    }
  }
  SUBCASE("scalar") {
    const PlantModel p(mat({{0.5}}), mat({{2}}));
    const auto c = compute_lyapunov_certificate(p, mat({{1}}), 2.0);
    CHECK(c.P(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(c.alpha1 == doctest::Approx(4.0 / 3.0));
    CHECK(c.alpha3 == doctest::Approx(1.0));
    CHECK(c.mu == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(lyapunov_value(c, p, vec({5}), vec({1})) == doctest::Approx(4.0 / 3.0));
  }
  SUBCASE("quadratic c = 0.1 against a brute-force series") {
    const PlantModel p = quad_plant(0.1);
    const auto c = compute_lyapunov_certificate(p);
    Matrix series = Matrix::Zero(2, 2), ak = Matrix::Identity(2, 2);
    for (int k = 0; k < 200; ++k) {
      Matrix term(2, 2);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) term(i, j) = ak(0, i) * ak(0, j) + ak(1, i) * ak(1, j);
      series += term;
      ak = p.A() * ak;
    }
    CHECK((c.P - series).norm() <= 1e-10);
    CHECK(c.residual <= 1e-10);
    CHECK(c.mu > 1.0);
    CHECK(!c.contractive());
    CHECK(c.mu >= certificate_mu_lower_bound(p) - 1e-12);
  }
  SUBCASE("errors") {
    const PlantModel p = quad_plant(0.1);
    CHECK_THROWS_AS(compute_lyapunov_certificate(p, mat({{1, 0.5}, {0, 1}}), 1.0), DomainError);
    CHECK_THROWS_AS(compute_lyapunov_certificate(p, mat({{1, 0}, {0, -1}}), 1.0), DomainError);
    CHECK_THROWS_AS(compute_lyapunov_certificate(p, Matrix::Identity(3, 3), 1.0), DimensionError);
  }
}

TEST_CASE("Lyapunov decrease and sandwich on random plants") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    const int n = 1 + t % 4;
    const PlantModel p = random_stable(rng, n, 2, 0.2 + 0.035 * t);
    Matrix l(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) l(i, j) = g(rng);
    const Matrix q = l * l.transpose() + 0.1 * Matrix::Identity(n, n);
    const auto c = compute_lyapunov_certificate(p, q, lipschitz_constant_of_h(p));
    CHECK(c.residual <= 1e-10 * (1.0 + c.P.norm()));
    for (int s = 0; s < 50; ++s) {
      Vector x(n), u(2);
      for (auto& v : x) v = 5.0 * g(rng);
      for (auto& v : u) v = g(rng);
      const double d2 = (x - p.steady_state(u)).squaredNorm();
      const double v0 = lyapunov_value(c, p, x, u);
      const double v1 = lyapunov_value(c, p, p.step(x, u), u);
      CHECK(v1 - v0 <= -c.alpha3 * d2 + 1e-8 * (1.0 + v0));
      CHECK(v0 >= c.alpha1 * d2 * (1 - 1e-12) - 1e-12);
      CHECK(v0 <= c.alpha2 * d2 * (1 + 1e-12) + 1e-12);
    }
  }
}

TEST_CASE("mu lower bound holds for every Q") {
  // alpha3 <= alpha2 - alpha1 ||A||^2 for any P, so mu >= 2 ||A||^2.
  std::mt19937_64 rng(9);
  const PlantModel p = quad_plant(0.1);
  const auto search = search_min_mu_certificate(p, 500, rng);
  CHECK(search.best.mu >= search.lower_bound * (1 - 1e-9));
  CHECK(search.lower_bound == doctest::Approx(certificate_mu_lower_bound(p)));
  CHECK(search.best.mu < compute_lyapunov_certificate(p).mu);
}

TEST_CASE("plant JSON") {
  const auto def = plant_from_json(nlohmann::json::parse(
      R"({"A": [[0.1, 1], [0, 0.1]], "B": [[1, 0], [0, 1]], "Q": [[2, 0], [0, 2]], "id": "q"})"));
  CHECK(def.model.n_x() == 2);
  CHECK(def.model.id() == "q");
  REQUIRE(def.Q);
  CHECK((*def.Q)(0, 0) == 2.0);
  const auto round = plant_from_json(plant_to_json(def.model, def.Q));
  CHECK(round.model.A() == def.model.A());

  try {
    plant_from_json(nlohmann::json::parse(R"({"A": [[1.5]], "B": [[1]]})"));
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("field 'A'") != std::string::npos);
    CHECK(std::string(e.what()).find("unstable") != std::string::npos);
  }
  CHECK_THROWS_AS(plant_from_json(nlohmann::json::parse(R"({"A": [[0.5, 0], [0]], "B": [[1]]})")),
                  ConfigError);
  CHECK_THROWS_AS(plant_from_json(nlohmann::json::parse(R"({"A": [[0.5]]})")), ConfigError);
  CHECK_THROWS_AS(plant_from_json(nlohmann::json::parse(R"({"A": [[0.5]], "B": [[1], [2]]})")),
                  ConfigError);
}
