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
#include <limits>
#include <random>

#include "doctest.h"
#include "prefopt/errors.hpp"
#include "prefopt/preference.hpp"

using namespace prefopt;

namespace {

Vector vec(std::initializer_list<double> v) { return to_vector(std::vector<double>(v)); }

// Reference PMV values from an independent ISO 7730 implementation.
struct PmvReference {
  double t, tr, vel, rh, met, clo, value;
};
constexpr PmvReference kPmvReference[] = {
    {15, 15, 0.1, 50, 1.1, 0.57, -3.198882140888444},
    {20, 20, 0.1, 50, 1.1, 0.57, -1.577303714986984},
    {22, 22, 0.1, 50, 1.1, 0.57, -0.9256533090662518},
    {24, 24, 0.1, 50, 1.1, 0.57, -0.3053560022619877},
    {26, 26, 0.1, 50, 1.1, 0.57, 0.3240001445030241},
    {28, 28, 0.1, 50, 1.1, 0.57, 0.9631552567100876},
    {30, 30, 0.1, 50, 1.1, 0.57, 1.6126068016701975},
    {35, 35, 0.1, 50, 1.1, 0.57, 3.2847733606319838},
    {22, 22, 0.1, 60, 1.2, 0.5, -0.7523668571085066},
};
constexpr double kNeutralTemperature = 24.974156009678882;

double ppd_formula(double p) { return 100.0 - 95.0 * std::exp(-(0.03353 * p * p * p * p + 0.2179 * p * p)); }

}  // namespace

TEST_CASE("pmv matches the reference implementation") {
  for (const auto& r : kPmvReference) {
    PmvEnvironment env;
    env.met = r.met;
    env.clo = r.clo;
    env.vel = r.vel;
    env.rh = r.rh;
    env.tr = r.tr;
    CAPTURE(r.t);
    CHECK(std::abs(pmv(env, r.t) - r.value) <= 2e-3);
  }
  CHECK(std::abs(pmv(PmvEnvironment{}, kNeutralTemperature)) <= 2e-3);
}

TEST_CASE("pmv is strictly increasing over 15 to 35 C") {
  const PmvEnvironment env;
  double prev = pmv(env, 15.0);
  for (double t = 15.05; t <= 35.0 + 1e-9; t += 0.05) {
    const double v = pmv(env, t);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("pmv environment validation") {
  PmvEnvironment env;
  env.met = 0.5;
  CHECK_THROWS_AS(pmv(env, 22), DomainError);
  env = PmvEnvironment{};
  env.clo = 2.5;
  CHECK_THROWS_AS(pmv(env, 22), DomainError);
  env = PmvEnvironment{};
  env.rh = 120;
  CHECK_THROWS_AS(pmv(env, 22), DomainError);
  CHECK_THROWS_AS(pmv_environment_from_json(nlohmann::json::parse(R"({"met": 9})")), Error);
  const auto parsed = pmv_environment_from_json(nlohmann::json::parse(R"({"met": 1.2, "tr": 21})"));
  CHECK(parsed.met == 1.2);
  REQUIRE(parsed.tr);
  CHECK(*parsed.tr == 21.0);
}

TEST_CASE("ppd examples") {
  CHECK(ppd(0.0) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(std::abs(ppd(1.0) - 26.1) <= 0.1);
  CHECK(std::abs(ppd(-1.0) - 26.1) <= 0.1);
  for (double p = -3; p <= 3; p += 0.125) {
    CHECK(ppd(p) == ppd(-p));
    CHECK(ppd(p) == doctest::Approx(ppd_formula(p)).epsilon(1e-14));
    CHECK(ppd(p) >= 5.0);
  }
}

TEST_CASE("ppd comfort is single-troughed over 15 to 35 C") {
  const auto u = LatentUtility::ppd_comfort(0, 0.0);
  int direction_changes = 0;
  double prev = u.evaluate(vec({15.0}), vec({0.0}));
  int sign = 0;
  for (double t = 15.1; t <= 35.0 + 1e-9; t += 0.1) {
    const double v = u.evaluate(vec({t}), vec({0.0}));
    const int s = v > prev ? 1 : (v < prev ? -1 : 0);
    if (s != 0 && sign != 0 && s != sign) ++direction_changes;
    if (s != 0) sign = s;
    prev = v;
  }
  CHECK(direction_changes == 1);
  CHECK(u.evaluate(vec({kNeutralTemperature}), vec({0.0})) == doctest::Approx(5.0).epsilon(1e-4));
}

TEST_CASE("evaluate_utility examples") {
  const auto q = LatentUtility::quadratic(vec({100, 100}));
  CHECK(evaluate_utility(q, vec({100, 100}), vec({0, 0})) == 0.0);
  CHECK(evaluate_utility(q, vec({90, 100}), vec({0, 0})) == doctest::Approx(100.0));
  CHECK(q.gradient_available());
  CHECK(q.gradient_x(vec({90, 100}), vec({0, 0})) == vec({-20, 0}));
  CHECK_THROWS_AS(evaluate_utility(q, vec({1, 2, 3}), vec({0, 0})), DimensionError);

  // Offset maps the state to degrees Celsius.
  const auto c = LatentUtility::ppd_comfort(1, 20.0);
  CHECK(!c.gradient_available());
  CHECK(evaluate_utility(c, vec({0, kNeutralTemperature - 20.0}), vec({0})) ==
        doctest::Approx(5.0).epsilon(1e-4));
  REQUIRE(c.temperature(vec({0, 2.5})));
  CHECK(*c.temperature(vec({0, 2.5})) == doctest::Approx(22.5));
}

TEST_CASE("utility JSON round trip and errors") {
  const auto q = utility_from_json(nlohmann::json::parse(R"({"kind": "quadratic-tracking", "x_ref": [1, 2]})"));
  CHECK(q.kind() == UtilityKind::quadratic_tracking);
  CHECK(utility_from_json(to_json(q)).evaluate(vec({0, 0}), vec({0})) == doctest::Approx(5.0));
  const auto c = utility_from_json(
      nlohmann::json::parse(R"({"kind": "ppd-comfort", "state_index": 0, "env": {"clo": 1.0}})"));
  CHECK(c.kind() == UtilityKind::ppd_comfort);
  CHECK_THROWS_AS(utility_from_json(nlohmann::json::parse(R"({"kind": "nope"})")), ConfigError);
  CHECK_THROWS_AS(utility_from_json(nlohmann::json::parse(R"({"kind": "quadratic-tracking"})")), ConfigError);
}

TEST_CASE("evaluate_reduced examples") {
  Matrix a(2, 2);
  a << 0.1, 1, 0, 0.1;
  const PlantModel p(a, Matrix::Identity(2, 2));
  const Vector x_ref = vec({100, 100});
  const ReducedUtility r(LatentUtility::quadratic(x_ref), p);
  const Vector u_star = (Matrix::Identity(2, 2) - a) * x_ref;
  CHECK(std::abs(evaluate_reduced(r, u_star)) <= 1e-18 * 1e4 + 1e-20);
  CHECK((r.minimizer() - u_star).norm() <= 1e-10);

  const PlantModel deadbeat(Matrix::Zero(2, 2), Matrix::Identity(2, 2));
  const ReducedUtility rd(LatentUtility::quadratic(vec({3, -1})), deadbeat);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int i = 0; i < 100; ++i) {
    const Vector u = vec({5 * g(rng), 5 * g(rng)});
    CHECK(evaluate_reduced(rd, u) == doctest::Approx((u - vec({3, -1})).squaredNorm()).epsilon(1e-14));
    const ReducedUtility neg(LatentUtility::quadratic(vec({-3, 1})), deadbeat);
    CHECK(evaluate_reduced(neg, -u) == doctest::Approx(evaluate_reduced(rd, u)).epsilon(1e-14));
  }
}

TEST_CASE("reduced quadratic curvature matches finite differences") {
  Matrix a(2, 2);
  a << 0.7, 0.2, -0.1, 0.3;
  Matrix b(2, 2);
  b << 1, 0.5, 0, 2;
  const PlantModel p(a, b);
  const ReducedUtility r(LatentUtility::quadratic(vec({1, -2})), p);
  const Matrix h = r.hessian();
  const double step = 1e-3;
  Matrix fd(2, 2);
  const Vector u0 = vec({0.3, -0.4});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      Vector ei = Vector::Zero(2), ej = Vector::Zero(2);
      ei(i) = step;
      ej(j) = step;
      fd(i, j) = (r.evaluate(u0 + ei + ej) - r.evaluate(u0 + ei - ej) - r.evaluate(u0 - ei + ej) +
                  r.evaluate(u0 - ei - ej)) /
                 (4 * step * step);
    }
  CHECK((fd - h).norm() <= 1e-5 * h.norm());
  for (int i = 0; i < 2; ++i) {
    Vector e = Vector::Zero(2);
    e(i) = 1e-6;
    const double g = (r.evaluate(u0 + e) - r.evaluate(u0 - e)) / 2e-6;
    CHECK(r.gradient(u0)(i) == doctest::Approx(g).epsilon(1e-6));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("link_eval examples") {
  const LinkFunction logistic(LinkKind::logistic), probit(LinkKind::probit), sign(LinkKind::sign);
  CHECK(link_eval(logistic, 0.0) == 0.5);
  CHECK(link_eval(logistic, std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(link_eval(sign, -2.0) == 0.0);
  CHECK(link_eval(sign, 2.0) == 1.0);
  CHECK(logistic.derivative_at_zero() == 0.25);
  CHECK(logistic.lipschitz() == 0.25);
  CHECK(logistic.smoothness() == doctest::Approx(1.0 / (6.0 * std::sqrt(3.0))).epsilon(1e-15));
  CHECK(probit.derivative_at_zero() == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)));
  CHECK(!sign.smooth());
  CHECK(LinkFunction::parse("probit").kind() == LinkKind::probit);
  CHECK_THROWS_AS(LinkFunction::parse("cauchy"), ConfigError);

  for (const auto& link : {logistic, probit}) {
    double prev = 0.0;
    for (double t = -40; t <= 40; t += 0.25) {
      const double v = link(t);
      CHECK(std::abs(v + link(-t) - 1.0) <= 2 * std::numeric_limits<double>::epsilon());
      CHECK(v >= prev);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      prev = v;
    }
    CHECK(link(-1e3) == doctest::Approx(0.0));
    CHECK(link(1e3) == doctest::Approx(1.0));
    CHECK(std::isfinite(link.log_value(-800.0)));
    CHECK(link.log_value(-800.0) < -700.0);
  }
  CHECK(logistic.log_value(-800.0) == doctest::Approx(-800.0).epsilon(1e-12));
}

TEST_CASE("sample_preference examples and calibration") {
  const auto u = LatentUtility::quadratic(vec({0}));
  SUBCASE("calibration within 4 binomial standard deviations") {
    for (double delta : {0.0, std::log(3.0), -1.3, 4.0}) {
      for (const auto kind : {LinkKind::logistic, LinkKind::probit}) {
        PreferenceOracle oracle(LinkFunction(kind), u, 77);
        const int n = 100000;
        int plus = 0;
        for (int i = 0; i < n; ++i) plus += sample_preference(oracle, 1.0, 1.0 + delta) == 1;
        const double p = LinkFunction(kind)(delta);
        CHECK(oracle.probability_first(1.0, 1.0 + delta) == p);
        const double band = 4.0 * std::sqrt(p * (1 - p) / n);
        CAPTURE(delta);
        CHECK(std::abs(plus / double(n) - p) <= band);
      }
    }
  }
  SUBCASE("logistic at ln 3 is 0.75") {
    PreferenceOracle oracle(LinkFunction(LinkKind::logistic), u, 1);
    CHECK(oracle.probability_first(0.0, std::log(3.0)) == doctest::Approx(0.75));
    CHECK(oracle.probability_first(2.0, 2.0) == 0.5);
  }
  SUBCASE("swap antisymmetry") {
    PreferenceOracle oracle(LinkFunction(LinkKind::logistic), u, 1);
    const double e1 = 2 * oracle.probability_first(0.3, 1.1) - 1;
    const double e2 = 2 * oracle.probability_first(1.1, 0.3) - 1;
    CHECK(e1 == doctest::Approx(-e2).epsilon(1e-15));
  }
  SUBCASE("sign link is noise free") {
    PreferenceOracle oracle(LinkFunction(LinkKind::sign), u, 1);
    for (int i = 0; i < 1000; ++i) {
      CHECK(sample_preference(oracle, 1.0, 1.0 + 1e-12) == 1);
      CHECK(sample_preference(oracle, 2.0, 1.0) == -1);
    }
  }
  SUBCASE("determinism and errors") {
    PreferenceOracle a(LinkFunction(LinkKind::logistic), u, 42), b(LinkFunction(LinkKind::logistic), u, 42);
    for (int i = 0; i < 1000; ++i) CHECK(a.sample(0.0, 0.2) == b.sample(0.0, 0.2));
    CHECK_THROWS_AS(a.sample(std::nan(""), 0.0), DomainError);
    CHECK(a.id() == "logistic/quadratic-tracking");
  }
}
