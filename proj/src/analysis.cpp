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

#include "prefopt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>

#include "prefopt/errors.hpp"

namespace prefopt {

namespace {

using nlohmann::json;

json vec_json(const Vector& v) { return to_std(v); }

std::vector<double> uniform_in(const Box& box, std::mt19937_64& rng) {
  std::vector<double> out(box.dim());
  for (std::size_t i = 0; i < box.dim(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    std::uniform_real_distribution<double> d(box.lower(idx), box.upper(idx));
    out[i] = box.lower(idx) == box.upper(idx) ? box.lower(idx) : d(rng);
  }
  return out;
}

Vector sample_in(const Box& box, std::mt19937_64& rng) { return to_vector(uniform_in(box, rng)); }

// In-place draw of a uniform direction on the unit sphere.
void fill_sphere(Vector& v, std::mt19937_64& rng, std::normal_distribution<double>& normal) {
  double norm = 0.0;
  do {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
    norm = v.norm();
  } while (norm == 0.0);
  v /= norm;
}

double fd_step(double scale) { return 1e-5 * std::max(1.0, std::abs(scale)); }

Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& u) {
  Vector g(u.size());
  Vector probe = u;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double h = fd_step(u(i));
    probe(i) = u(i) + h;
    const double fp = f(probe);
    probe(i) = u(i) - h;
    const double fm = f(probe);
    probe(i) = u(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

Matrix fd_hessian(const std::function<double(const Vector&)>& f, const Vector& u) {
  const Eigen::Index n = u.size();
  Matrix hess(n, n);
  Vector p = u;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double hi = 1e-3 * std::max(1.0, std::abs(u(i)));
    for (Eigen::Index j = i; j < n; ++j) {
      const double hj = 1e-3 * std::max(1.0, std::abs(u(j)));
      auto at = [&](double si, double sj) {
        p = u;
        p(i) += si * hi;
        p(j) += sj * hj;
        return f(p);
      };
      const double v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * hi * hj);
      hess(i, j) = v;
      hess(j, i) = v;
    }
  }
  return hess;
}

std::vector<Vector> box_corners(const Box& box) {
  const std::size_t n = box.dim();
  std::vector<Vector> out;
  out.reserve(std::size_t{1} << n);
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    Vector c(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      c(idx) = (mask >> i) & 1U ? box.upper(idx) : box.lower(idx);
    }
    out.push_back(std::move(c));
  }
  return out;
}

void require_smooth(const LinkFunction& link, const char* where) {
  if (!link.smooth()) {
    throw ConfigError(std::string(where) + ": the " + link.name() +
                      " link has no finite derivative; use logistic or probit");
  }
}

}  // namespace

std::string to_string(CheckStatus status) {
  switch (status) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::vacuous: return "vacuous";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Constants

AssumptionConstants estimate_assumption_constants(const ReducedUtility& reduced, const Box& box) {
  if (box.dim() == 0 || box.empty()) throw DomainError("estimate_assumption_constants: empty box");
  if (box.dim() != reduced.n_u()) {
    throw DimensionError("estimate_assumption_constants: box has dimension " +
                         std::to_string(box.dim()) + ", inputs have " +
                         std::to_string(reduced.n_u()));
  }
  AssumptionConstants out;
  if (reduced.gradient_available()) {
    const Matrix hess = reduced.hessian();
    const Vector eig = symmetric_eigenvalues(hess);
    out.m = eig(0);
    out.L1 = eig(eig.size() - 1);
    // ||grad|| is convex in u, so its sup over the box sits at a corner.
    if (box.dim() <= 20) {
      for (const auto& c : box_corners(box)) out.L0 = std::max(out.L0, reduced.gradient(c).norm());
      out.method = "closed form, gradient norm maximised over box corners";
    } else {
      const Vector star = reduced.minimizer();
      Vector far(star.size());
      for (Eigen::Index i = 0; i < star.size(); ++i) {
        far(i) = std::max(std::abs(box.lower(i) - star(i)), std::abs(box.upper(i) - star(i)));
      }
      out.L0 = out.L1 * far.norm();
      out.method = "closed form, L0 by operator-norm bound";
    }
    out.exact = true;
    return out;
  }

  const auto f = [&](const Vector& u) { return reduced.evaluate(u); };
  const std::size_t n = box.dim();
  const auto per_dim = static_cast<std::size_t>(
      std::clamp(std::floor(std::pow(4096.0, 1.0 / static_cast<double>(n))), 2.0, 17.0));
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= per_dim;
  out.m = std::numeric_limits<double>::infinity();
  Vector u(static_cast<Eigen::Index>(n));
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rest = flat;
    for (std::size_t i = 0; i < n; ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      const double t = static_cast<double>(rest % per_dim) / static_cast<double>(per_dim - 1);
      rest /= per_dim;
      u(idx) = box.lower(idx) + t * (box.upper(idx) - box.lower(idx));
    }
    out.L0 = std::max(out.L0, fd_gradient(f, u).norm());
    const Vector eig = symmetric_eigenvalues(fd_hessian(f, u));
    out.L1 = std::max({out.L1, std::abs(eig(0)), std::abs(eig(eig.size() - 1))});
    out.m = std::min(out.m, eig(0));
  }
  out.exact = false;
  out.method = "finite differences on a " + std::to_string(per_dim) + "^" + std::to_string(n) +
               " grid";
  return out;
}

BoundConstants recompute_derived(BoundConstants c) {
  if (!(c.alpha2 > 0.0)) throw DomainError("bound constants: alpha2 must be positive");
  if (!(c.delta > 0.0)) throw DomainError("bound constants: delta must be positive");
  const double d2 = c.delta * c.delta;
  const double ratio = c.eta / c.delta;
  c.L_p0 = c.L_sigma0 * c.L0;
  c.L_p1 = c.sigma_prime0 * c.L1 + c.L_sigma1 * c.L0 * c.L0;
  c.a2 = c.L_p1 * std::sqrt(static_cast<double>(c.n)) +
         (c.sigma_prime0 * c.L1 + c.L_p1) * (1.0 + ratio);
  const double lead = 2.0 * c.L_sigma0 * c.L_sigma0 * c.L_x * c.L_x / (c.alpha2 * d2);
  c.R1 = lead * (c.mu + 1.0) * c.mu;
  const double offset_statement = 2.0 * d2 + c.eta + std::pow(c.eta / (2.0 * c.delta), 2);
  const double offset_proof = 2.0 * d2 + 2.0 * c.eta + ratio * ratio;
  c.R2 = lead * c.a1 * offset_proof * c.mu + 2.0 * c.a2 * c.a2 * d2;
  c.R2_statement = lead * c.a1 * offset_statement * c.mu + 2.0 * c.a2 * c.a2 * d2;
  c.rho = 1.0 - 2.0 * c.sigma_prime0 * c.m * c.eta;
  c.stability_offset = c.a1 * offset_statement;
  return c;
}

BoundConstants compute_bound_constants(const AssumptionConstants& assumption, double L_x,
                                       const LinkFunction& link, const LyapunovCertificate& cert,
                                       double eta, double delta, std::size_t n) {
  require_smooth(link, "compute_bound_constants");
  if (!(L_x >= 0.0)) throw DomainError("compute_bound_constants: L_x must be non-negative");
  BoundConstants c;
  c.L0 = assumption.L0;
  c.L1 = assumption.L1;
  c.m = assumption.m;
  c.L_x = L_x;
  c.L_sigma0 = link.lipschitz();
  c.L_sigma1 = link.smoothness();
  c.sigma_prime0 = link.derivative_at_zero();
  c.mu = cert.mu;
  c.a1 = cert.a1;
  c.alpha2 = cert.alpha2;
  c.eta = eta;
  c.delta = delta;
  c.n = n;
  return recompute_derived(c);
}

json BoundConstants::to_json() const {
  return json{{"L_0", L0},
              {"L_1", L1},
              {"m", m},
              {"L_x", L_x},
              {"L_sigma0", L_sigma0},
              {"L_sigma1", L_sigma1},
              {"sigma_prime0", sigma_prime0},
              {"mu", mu},
              {"a1", a1},
              {"alpha2", alpha2},
              {"eta", eta},
              {"delta", delta},
              {"n", n},
              {"n_note", "n taken as the perturbation dimension n_u"},
              {"L_p0", L_p0},
              {"L_p1", L_p1},
              {"a2", a2},
              {"R1", R1},
              {"R2", R2},
              {"R2_statement", R2_statement},
              {"R2_note",
               "R2 uses a1 (2 delta^2 + 2 eta + (eta/delta)^2); R2_statement uses "
               "a1 (2 delta^2 + eta + (eta/(2 delta))^2)"},
              {"rho", rho},
              {"stability_offset", stability_offset}};
}

BoundConstants BoundConstants::from_json(const json& j) {
  BoundConstants c;
  c.L0 = j.at("L_0").get<double>();
  c.L1 = j.at("L_1").get<double>();
  c.m = j.at("m").get<double>();
  c.L_x = j.at("L_x").get<double>();
  c.L_sigma0 = j.at("L_sigma0").get<double>();
  c.L_sigma1 = j.at("L_sigma1").get<double>();
  c.sigma_prime0 = j.at("sigma_prime0").get<double>();
  c.mu = j.at("mu").get<double>();
  c.a1 = j.at("a1").get<double>();
  c.alpha2 = j.at("alpha2").get<double>();
  c.eta = j.at("eta").get<double>();
  c.delta = j.at("delta").get<double>();
  c.n = j.at("n").get<std::size_t>();
  c.L_p0 = j.at("L_p0").get<double>();
  c.L_p1 = j.at("L_p1").get<double>();
  c.a2 = j.at("a2").get<double>();
  c.R1 = j.at("R1").get<double>();
  c.R2 = j.at("R2").get<double>();
  c.R2_statement = j.at("R2_statement").get<double>();
  c.rho = j.at("rho").get<double>();
  c.stability_offset = j.at("stability_offset").get<double>();
  return c;
}

CertificateSearch search_min_mu_certificate(const PlantModel& model, std::size_t trials,
                                            std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(model.n_x());
  const double L_h = lipschitz_constant_of_h(model);
  CertificateSearch out;
  out.lower_bound = certificate_mu_lower_bound(model);
  out.best = compute_lyapunov_certificate(model, Matrix::Identity(n, n), L_h);
  out.candidates = 1;
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> log_scale(-3.0, 3.0);
  for (std::size_t t = 0; t < trials; ++t) {
    Matrix q(n, n);
    if (t % 2 == 0) {
      q.setZero();
      for (Eigen::Index i = 0; i < n; ++i) q(i, i) = std::pow(10.0, log_scale(rng));
    } else {
      Matrix l(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) l(i, j) = normal(rng);
      q = l * l.transpose() + 1e-3 * Matrix::Identity(n, n);
      q = 0.5 * (q + q.transpose()).eval();
    }
    try {
      auto cert = compute_lyapunov_certificate(model, q, L_h);
      ++out.candidates;
      if (cert.mu < out.best.mu) out.best = std::move(cert);
    } catch (const Error&) {
      // Numerically indefinite candidate; skip it.
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Preference probability

double preference_probability(const ReducedUtility& reduced, const LinkFunction& link,
                              const Vector& u_ref, const Vector& u) {
  return link_eval(link, reduced.evaluate(u) - reduced.evaluate(u_ref));
}

Vector gradient_of_p(const ReducedUtility& reduced, const LinkFunction& link, const Vector& u_ref,
                     const Vector& u) {
  if (!reduced.gradient_available()) {
    throw DomainError("gradient_of_p: no analytic gradient for utility kind '" +
                      reduced.utility().kind_name() + "'");
  }
  require_smooth(link, "gradient_of_p");
  const double t = reduced.evaluate(u) - reduced.evaluate(u_ref);
  return link.derivative(t) * reduced.gradient(u);
}

// ---------------------------------------------------------------------------
// Lemma 2

json Lemma2Report::to_json() const {
  return json{{"lemma", "2"},
              {"samples", samples},
              {"L_p0", L_p0},
              {"L_p1", L_p1},
              {"max_lipschitz_ratio", max_lipschitz_ratio},
              {"max_smoothness_ratio", max_smoothness_ratio},
              {"min_convex_curvature", min_convex_curvature},
              {"convexity_samples", convexity_samples},
              {"convexity_tolerance", -1e-8},
              {"status", to_string(status)}};
}

Lemma2Report verify_lemma2(const ReducedUtility& reduced, const LinkFunction& link, const Box& box,
                           std::size_t samples, std::mt19937_64& rng) {
  require_smooth(link, "verify_lemma2");
  const AssumptionConstants ac = estimate_assumption_constants(reduced, box);
  Lemma2Report rep;
  rep.samples = samples;
  rep.L_p0 = link.lipschitz() * ac.L0;
  rep.L_p1 = link.derivative_at_zero() * ac.L1 + link.smoothness() * ac.L0 * ac.L0;

  const auto ratio = [](double num, double den) {
    if (num == 0.0) return 0.0;
    return den > 0.0 ? num / den : std::numeric_limits<double>::infinity();
  };

  std::normal_distribution<double> normal;
  Vector dir(static_cast<Eigen::Index>(reduced.n_u()));
  rep.min_convex_curvature = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < samples; ++s) {
    const Vector u_ref = sample_in(box, rng);
    const Vector u1 = sample_in(box, rng);
    const Vector u2 = sample_in(box, rng);
    const auto p = [&](const Vector& u) { return preference_probability(reduced, link, u_ref, u); };
    const auto grad = [&](const Vector& u) {
      return reduced.gradient_available() ? gradient_of_p(reduced, link, u_ref, u)
                                          : fd_gradient(p, u);
    };
    const double du = (u1 - u2).norm();
    rep.max_lipschitz_ratio =
        std::max(rep.max_lipschitz_ratio, ratio(std::abs(p(u1) - p(u2)), rep.L_p0 * du));
    rep.max_smoothness_ratio =
        std::max(rep.max_smoothness_ratio, ratio((grad(u1) - grad(u2)).norm(), rep.L_p1 * du));

    // Second derivative of p along a random direction inside the sublevel set.
    if (reduced.evaluate(u1) <= reduced.evaluate(u_ref)) {
      fill_sphere(dir, rng, normal);
      const double h = 1e-3 * std::max(1.0, u1.norm());
      const double t0 = reduced.evaluate(u1) - reduced.evaluate(u_ref);
      const auto along = [&](double s2) {
        return link(reduced.evaluate(u1 + s2 * dir) - reduced.evaluate(u_ref));
      };
      const double curv = (along(h) - 2.0 * link(t0) + along(-h)) / (h * h);
      rep.min_convex_curvature = std::min(rep.min_convex_curvature, curv);
      ++rep.convexity_samples;
    }
  }
  if (rep.convexity_samples == 0) rep.min_convex_curvature = 0.0;
  const bool ok = rep.max_lipschitz_ratio <= 1.0 && rep.max_smoothness_ratio <= 1.0 &&
                  rep.min_convex_curvature >= -1e-8;
  rep.status = ok ? CheckStatus::pass : CheckStatus::fail;
  return rep;
}

// ---------------------------------------------------------------------------
// Lemma 3

Vector minimize_preference_probability(const ReducedUtility& reduced, const LinkFunction& link,
                                       const Vector& u_ref, std::mt19937_64& rng) {
  require_smooth(link, "minimize_preference_probability");
  const double ref_value = reduced.evaluate(u_ref);
  const auto f = [&](const Vector& u) { return link.log_value(reduced.evaluate(u) - ref_value); };

  const auto descend = [&](Vector u) {
    double fu = f(u);
    double step = 1.0;
    for (int it = 0; it < 50000; ++it) {
      const Vector g = fd_gradient(f, u);
      const double gn = g.norm();
      if (gn < 1e-11) break;
      bool moved = false;
      while (step > 1e-300) {
        const Vector cand = u - step * g;
        const double fc = f(cand);
        if (fc <= fu - 1e-4 * step * gn * gn) {
          moved = (cand - u).norm() > 1e-15 * (1.0 + u.norm());
          u = cand;
          fu = fc;
          step *= 2.0;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    return std::pair{u, fu};
  };

  std::normal_distribution<double> normal;
  const double spread = 0.5 * std::max(1.0, u_ref.norm());
  auto best = descend(u_ref);
  for (int s = 0; s < 4; ++s) {
    Vector start = u_ref;
    for (Eigen::Index i = 0; i < start.size(); ++i) start(i) += spread * normal(rng);
    auto cand = descend(start);
    if (cand.second < best.second) best = std::move(cand);
  }
  return best.first;
}

json Lemma3Report::to_json() const {
  json refs = json::array(), mins = json::array();
  for (const auto& r : references) refs.push_back(vec_json(r));
  for (const auto& m : minimizers) mins.push_back(vec_json(m));
  return json{{"lemma", "3"},       {"u_star", vec_json(u_star)}, {"references", refs},
              {"minimizers", mins}, {"distances", distances},     {"tolerance", tolerance},
              {"status", to_string(status)}};
}

Lemma3Report verify_lemma3(const ReducedUtility& reduced, const LinkFunction& link,
                           const std::vector<Vector>& candidates, std::mt19937_64& rng) {
  if (!reduced.gradient_available()) {
    throw DomainError("verify_lemma3: needs a utility with a known minimizer");
  }
  Lemma3Report rep;
  rep.u_star = reduced.minimizer();
  for (const auto& u_ref : candidates) {
    Vector m = minimize_preference_probability(reduced, link, u_ref, rng);
    rep.references.push_back(u_ref);
    rep.distances.push_back((m - rep.u_star).norm());
    rep.minimizers.push_back(std::move(m));
  }
  const bool ok = std::all_of(rep.distances.begin(), rep.distances.end(),
                              [&](double d) { return d <= rep.tolerance; });
  rep.status = ok ? CheckStatus::pass : CheckStatus::fail;
  return rep;
}

// ---------------------------------------------------------------------------
// Lemma 4

ErrorTermSample compute_error_term(const TrajectoryRecord& record, std::size_t k,
                                   const PlantModel& plant, const ReducedUtility& reduced,
                                   const LinkFunction& link, const BoundConstants& constants,
                                   const LyapunovCertificate& cert, std::size_t inner_samples,
                                   std::mt19937_64& rng, Evaluation evaluation) {
  if (!reduced.gradient_available()) {
    throw DomainError("compute_error_term: no analytic gradient for utility kind '" +
                      reduced.utility().kind_name() + "'");
  }
  if (k == 0 || k >= record.rows.size()) {
    throw DomainError("compute_error_term: step " + std::to_string(k) + " outside [1, " +
                      std::to_string(record.rows.size()) + ")");
  }
  if (inner_samples < 2) throw DomainError("compute_error_term: need at least two inner samples");
  const TrajectoryRow& row = record.rows[k];
  const TrajectoryRow& prev = record.rows[k - 1];
  if (!row.feedback) {
    throw DomainError("compute_error_term: step " + std::to_string(k) + " has no feedback");
  }
  if (!std::isfinite(prev.utility)) {
    throw DomainError("compute_error_term: step " + std::to_string(k - 1) +
                      " has no logged utility");
  }
  const double delta = constants.delta;
  const Vector grad_p = link.derivative_at_zero() * reduced.gradient(row.u);

  ErrorTermSample out;
  out.k = k;
  out.e = -(static_cast<double>(*row.feedback) / (2.0 * delta)) * row.v - grad_p;
  // Steady-state evaluation has no transient, so V is zero there.
  const bool steady = evaluation == Evaluation::steady_state;
  out.lyapunov_prev = steady ? 0.0 : lyapunov_value(cert, plant, prev.x, prev.applied);
  out.bound = std::sqrt(constants.R1 * out.lyapunov_prev + constants.R2);

  // Frozen filtration: x_k, u_k and the previous evaluation stay fixed.
  const Matrix& gain = steady ? plant.steady_state_gain() : plant.B();
  const Vector base =
      steady ? Vector(plant.steady_state_gain() * row.u) : Vector(plant.A() * row.x + plant.B() * row.u);
  const LatentUtility& utility = reduced.utility();
  const double prev_eval = prev.utility;

  const auto n = row.u.size();
  Vector v(n), applied(n), next(base.size());
  Vector sum = Vector::Zero(n), sum_sq = Vector::Zero(n);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  const double scale = 1.0 / (2.0 * delta);
  for (std::size_t i = 0; i < inner_samples; ++i) {
    fill_sphere(v, rng, normal);
    applied = row.u + delta * v;
    next.noalias() = base + delta * (gain * v);
    const double eval = utility.evaluate(next, applied);
    const double p_current = link(prev_eval - eval);
    const double fb = unif(rng) < p_current ? 1.0 : -1.0;
    sum.noalias() += (-scale * fb) * v;
    sum_sq.noalias() += (scale * scale) * v.cwiseAbs2();
  }
  const double N = static_cast<double>(inner_samples);
  const Vector mean = sum / N;
  const Vector var = ((sum_sq / N) - mean.cwiseAbs2()) * (N / (N - 1.0));
  out.conditional_mean_estimate = mean - grad_p;
  out.standard_error = std::sqrt(var.cwiseMax(0.0).sum() / N);
  return out;
}

json Lemma4Report::to_json() const {
  json steps = json::array();
  for (const auto& s : samples) {
    steps.push_back(json{{"k", s.k},
                         {"conditional_mean_norm", s.conditional_mean_estimate.norm()},
                         {"standard_error", s.standard_error},
                         {"lyapunov_prev", s.lyapunov_prev},
                         {"bound", s.bound},
                         {"realised_norm", s.e.norm()},
                         {"margin", s.bound + allowance_sigmas * s.standard_error -
                                        s.conditional_mean_estimate.norm()}});
  }
  return json{{"lemma", "4"},
              {"constants", constants.to_json()},
              {"inner_samples", inner_samples},
              {"allowance", std::to_string(allowance_sigmas) + " standard errors"},
              {"max_ratio", max_ratio},
              {"violations", violations},
              {"status", to_string(status)},
              {"steps", steps}};
}

Lemma4Report verify_lemma4(const TrajectoryRecord& record, const PlantModel& plant,
                           const ReducedUtility& reduced, const LinkFunction& link,
                           const BoundConstants& constants, const LyapunovCertificate& cert,
                           std::size_t inner_samples, std::mt19937_64& rng,
                           Evaluation evaluation) {
  Lemma4Report rep;
  rep.inner_samples = inner_samples;
  rep.constants = constants;
  for (std::size_t k = 1; k < record.rows.size(); ++k) {
    auto s = compute_error_term(record, k, plant, reduced, link, constants, cert, inner_samples,
                                rng, evaluation);
    const double lhs = s.conditional_mean_estimate.norm();
    const double rhs = s.bound + rep.allowance_sigmas * s.standard_error;
    rep.max_ratio = std::max(rep.max_ratio, lhs / rhs);
    if (lhs > rhs) ++rep.violations;
    rep.samples.push_back(std::move(s));
  }
  rep.status = rep.violations == 0 ? CheckStatus::pass : CheckStatus::fail;
  return rep;
}

// ---------------------------------------------------------------------------
// Lemma 1

json Lemma1Report::to_json() const {
  json steps = json::array();
  for (std::size_t k = 0; k < mean.size(); ++k) {
    steps.push_back(json{{"k", k},
                         {"mean", mean[k]},
                         {"bound", k < bound.size() ? bound[k] : 0.0},
                         {"allowance", k < allowance.size() ? allowance[k] : 0.0}});
  }
  return json{{"lemma", "1"},
              {"constants",
               {{"mu", cert.mu},
                {"a1", cert.a1},
                {"alpha1", cert.alpha1},
                {"alpha2", cert.alpha2},
                {"alpha3", cert.alpha3},
                {"L_h", cert.L_h},
                {"offset", offset}}},
              {"replicas", replicas},
              {"allowance", std::to_string(allowance_sigmas) + " standard errors of the mean"},
              {"max_ratio", max_ratio},
              {"violations", violations},
              {"recursion_max_ratio", recursion_max_ratio},
              {"status", to_string(status)},
              {"note", status == CheckStatus::vacuous
                           ? "bound non-contractive (mu >= 1); only the one-step recursion is "
                             "checked"
                           : ""},
              {"steps", steps}};
}

Lemma1Report verify_lemma1(const std::vector<TrajectoryRecord>& ensemble,
                           const LyapunovCertificate& cert, double eta, double delta,
                           double allowance_sigmas) {
  const EnsembleStats st = ensemble_stats(ensemble, Metric::lyapunov);
  Lemma1Report rep;
  rep.cert = cert;
  rep.replicas = st.replicas;
  rep.allowance_sigmas = allowance_sigmas;
  rep.mean = st.mean;
  rep.offset = cert.a1 * (2.0 * delta * delta + eta + std::pow(eta / (2.0 * delta), 2));

  for (std::size_t k = 1; k < st.mean.size(); ++k) {
    const double rhs = cert.mu * st.mean[k - 1] + rep.offset;
    rep.recursion_max_ratio = std::max(rep.recursion_max_ratio, st.mean[k] / rhs);
  }
  if (!cert.contractive()) {
    rep.status = CheckStatus::vacuous;
    return rep;
  }
  const double v0 = st.mean.empty() ? 0.0 : st.mean.front();
  const double tail = rep.offset / (1.0 - cert.mu);
  const double root_r = std::sqrt(static_cast<double>(st.replicas));
  for (std::size_t k = 0; k < st.mean.size(); ++k) {
    const double b = std::pow(cert.mu, static_cast<double>(k)) * v0 + tail;
    const double allow = allowance_sigmas * st.std[k] / root_r + 1e-12 * b;
    rep.bound.push_back(b);
    rep.allowance.push_back(allow);
    rep.max_ratio = std::max(rep.max_ratio, st.mean[k] / (b + allow));
    if (st.mean[k] > b + allow) ++rep.violations;
  }
  rep.status = rep.violations == 0 ? CheckStatus::pass : CheckStatus::fail;
  return rep;
}

// ---------------------------------------------------------------------------
// Theorem 1

json Theorem1Report::to_json() const {
  json steps = json::array();
  for (std::size_t k = k_prime + 1; k < mean_sq.size(); ++k) {
    steps.push_back(json{{"k", k}, {"mean_sq", mean_sq[k]}, {"bound", bound[k]}});
  }
  return json{{"lemma", "theorem1"},
              {"k_prime", k_prime},
              {"rho", rho},
              {"envelope_rate", envelope_rate},
              {"b1", b1},
              {"b2", b2},
              {"C", C},
              {"reconstruction",
               "b1 = R1 E[V0], b2 = R1 a1/(1-mu) (2 delta^2 + eta + (eta/(2 delta))^2) + R2, "
               "matching b_k = 2 eta sqrt(R1 E[V_{k-1}] + R2) against "
               "b_k = 2 eta sqrt(b1 mu^(k-1) + b2)"},
              {"allowance", std::to_string(allowance_sigmas) + " standard errors of the mean"},
              {"max_ratio", max_ratio},
              {"violations", violations},
              {"status", to_string(status)},
              {"note", note},
              {"steps", steps}};
}

Theorem1Report verify_theorem1(const std::vector<TrajectoryRecord>& ensemble,
                               const BoundConstants& constants, double mean_initial_lyapunov,
                               std::size_t k_prime, double allowance_sigmas) {
  if (!(constants.rho > 0.0 && constants.rho < 1.0)) {
    throw ConfigError("verify_theorem1: rho = " + std::to_string(constants.rho) +
                      " outside (0, 1); need eta < 1 / (2 sigma'(0) m)");
  }
  const EnsembleStats st = ensemble_stats(ensemble, Metric::dist_to_opt_squared);
  if (k_prime >= st.mean.size()) {
    throw ConfigError("verify_theorem1: k' = " + std::to_string(k_prime) +
                      " is not inside the horizon");
  }
  Theorem1Report rep;
  rep.k_prime = k_prime;
  rep.rho = constants.rho;
  rep.envelope_rate = 0.5 * (1.0 + constants.rho);
  rep.allowance_sigmas = allowance_sigmas;
  rep.mean_sq = st.mean;
  rep.bound.assign(st.mean.size(), std::numeric_limits<double>::quiet_NaN());
  if (constants.mu >= 1.0) {
    rep.status = CheckStatus::vacuous;
    rep.note = "bound non-contractive (mu >= 1)";
    return rep;
  }
  const double mu = constants.mu;
  const double sp = constants.sigma_prime0;
  const double m = constants.m;
  rep.b1 = constants.R1 * mean_initial_lyapunov;
  rep.b2 = constants.R1 * constants.stability_offset / (1.0 - mu) + constants.R2;
  const double mu_term = std::pow(mu, static_cast<double>(k_prime) - 1.0);
  rep.C = (rep.b1 * mu_term + rep.b2 + 2.0 * sp * m * constants.eta) / (sp * sp * m * m);

  const double root_r = std::sqrt(static_cast<double>(st.replicas));
  const double start = st.mean[k_prime];
  for (std::size_t k = k_prime + 1; k < st.mean.size(); ++k) {
    const double b =
        std::pow(rep.envelope_rate, static_cast<double>(k - k_prime)) * start + rep.C;
    rep.bound[k] = b;
    const double rhs = b + allowance_sigmas * st.std[k] / root_r;
    rep.max_ratio = std::max(rep.max_ratio, st.mean[k] / rhs);
    if (st.mean[k] > rhs) ++rep.violations;
  }
  rep.status = rep.violations == 0 ? CheckStatus::pass : CheckStatus::fail;
  return rep;
}

// ---------------------------------------------------------------------------
// Sequence lemma

double sequence_fixed_point(double rho, double b, double c) {
  if (!(rho < 1.0)) throw DomainError("sequence lemma: rho must be below 1");
  return (b + std::sqrt(b * b + 4.0 * (1.0 - rho) * c)) / (2.0 * (1.0 - rho));
}

double sequence_rate(double rho, double b, double c) {
  const double a_star = sequence_fixed_point(rho, b, c);
  if (a_star == 0.0) return rho;  // b = c = 0: plain geometric decay
  return 1.0 - std::sqrt(b * b + 4.0 * (1.0 - rho) * c) / (2.0 * a_star);
}

json SequenceLemmaReport::to_json() const {
  return json{{"lemma", "5"},
              {"instances", instances},
              {"sequences", sequences},
              {"comparisons", comparisons},
              {"violations", violations},
              {"max_ratio", max_ratio},
              {"status", to_string(status)}};
}

namespace {

void check_one_sequence(double rho, const std::vector<double>& b, double c,
                        const std::vector<double>& a, SequenceLemmaReport& rep) {
  for (std::size_t kp = 0; kp + 1 < a.size(); ++kp) {
    const double a_star = sequence_fixed_point(rho, b[kp], c);
    const double rate = sequence_rate(rho, b[kp], c);
    for (std::size_t k = kp + 1; k < a.size(); ++k) {
      const double bound =
          std::pow(rate, static_cast<double>(k - kp)) * a[kp] * a[kp] + a_star * a_star;
      const double lhs = a[k] * a[k];
      ++rep.comparisons;
      if (bound > 0.0) rep.max_ratio = std::max(rep.max_ratio, lhs / bound);
      if (lhs > bound * (1.0 + 1e-12) + 1e-300) ++rep.violations;
    }
  }
}

}  // namespace

SequenceLemmaReport check_sequence_lemma(double rho, const std::vector<double>& b, double c,
                                         double a0, std::size_t trials, std::mt19937_64& rng) {
  if (!(rho < 1.0)) throw DomainError("check_sequence_lemma: rho must be below 1");
  if (!(c >= 0.0)) throw DomainError("check_sequence_lemma: c must be non-negative");
  if (!(a0 >= 0.0)) throw DomainError("check_sequence_lemma: a0 must be non-negative");
  if (b.empty()) throw DomainError("check_sequence_lemma: empty b sequence");
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!(b[i] >= 0.0)) throw DomainError("check_sequence_lemma: b must be non-negative");
    if (i > 0 && b[i] > b[i - 1]) throw DomainError("check_sequence_lemma: b must not increase");
  }
  SequenceLemmaReport rep;
  rep.instances = 1;
  std::uniform_real_distribution<double> unif;
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<double> a{a0};
    for (std::size_t k = 0; k < b.size(); ++k) {
      const double slack = unif(rng) < 1.0 / 3.0 ? 1.0 : unif(rng);
      const double ak = a.back();
      a.push_back(std::sqrt(std::max(0.0, slack * (rho * ak * ak + b[k] * ak + c))));
    }
    check_one_sequence(rho, b, c, a, rep);
    ++rep.sequences;
  }
  rep.status = rep.violations == 0 ? CheckStatus::pass : CheckStatus::fail;
  return rep;
}

SequenceLemmaReport fuzz_sequence_lemma(std::size_t instances, std::mt19937_64& rng,
                                        std::size_t length) {
  SequenceLemmaReport total;
  std::uniform_real_distribution<double> unif;
  for (std::size_t i = 0; i < instances; ++i) {
    const double rho = 0.95 * (1.0 - unif(rng));  // (0, 0.95]
    const double c = 1.0 - unif(rng);              // (0, 1]
    std::vector<double> b(length);
    b[0] = 1.0 - unif(rng);
    for (std::size_t k = 1; k < length; ++k) b[k] = b[k - 1] * (0.5 + 0.5 * unif(rng));
    const double a0 = 10.0 * unif(rng);
    const auto rep = check_sequence_lemma(std::min(rho, 0.95 - 1e-12), b, c, a0, 1, rng);
    total.sequences += rep.sequences;
    total.comparisons += rep.comparisons;
    total.violations += rep.violations;
    total.max_ratio = std::max(total.max_ratio, rep.max_ratio);
  }
  total.instances = instances;
  total.status = total.violations == 0 ? CheckStatus::pass : CheckStatus::fail;
  return total;
}

// ---------------------------------------------------------------------------
// Ensembles

Metric parse_metric(const std::string& name) {
  if (name == "relative-error") return Metric::relative_error;
  if (name == "dist-to-opt-squared") return Metric::dist_to_opt_squared;
  if (name == "lyapunov") return Metric::lyapunov;
  if (name == "utility") return Metric::utility;
  if (name == "temperature") return Metric::temperature;
  throw ConfigError("unknown metric '" + name +
                    "' (expected relative-error, dist-to-opt-squared, lyapunov, utility or "
                    "temperature)");
}

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::relative_error: return "relative-error";
    case Metric::dist_to_opt_squared: return "dist-to-opt-squared";
    case Metric::lyapunov: return "lyapunov";
    case Metric::utility: return "utility";
    case Metric::temperature: return "temperature";
  }
  return "?";
}

double metric_value(const TrajectoryRow& row, Metric metric, const LatentUtility* utility) {
  switch (metric) {
    case Metric::relative_error: {
      const auto* q = utility ? std::get_if<QuadraticTracking>(&utility->params()) : nullptr;
      if (!q) throw ConfigError("metric relative-error needs a quadratic-tracking utility");
      const double ref = q->x_ref.norm();
      if (ref == 0.0) throw DomainError("metric relative-error: x_ref is zero");
      return (row.x - q->x_ref).norm() / ref;
    }
    case Metric::dist_to_opt_squared:
      if (!row.dist_to_opt) throw DomainError("metric dist-to-opt-squared: column not logged");
      return *row.dist_to_opt * *row.dist_to_opt;
    case Metric::lyapunov:
      if (!row.lyapunov) throw DomainError("metric lyapunov: column not logged");
      return *row.lyapunov;
    case Metric::utility:
      if (!std::isfinite(row.utility)) throw DomainError("metric utility: value is latent");
      return row.utility;
    case Metric::temperature: {
      const auto t = utility ? utility->temperature(row.x) : std::nullopt;
      if (!t) throw ConfigError("metric temperature needs a ppd-comfort utility");
      return *t;
    }
  }
  return 0.0;
}

EnsembleStats ensemble_stats(const std::vector<TrajectoryRecord>& runs, Metric metric,
                             const LatentUtility* utility) {
  if (runs.empty()) throw DomainError("ensemble_stats: no runs");
  const std::size_t len = runs.front().rows.size();
  for (const auto& r : runs) {
    if (r.rows.size() != len) {
      throw DomainError("ensemble_stats: ragged horizons (" + std::to_string(len) + " vs " +
                        std::to_string(r.rows.size()) + " rows)");
    }
  }
  EnsembleStats st;
  st.metric = metric;
  st.replicas = runs.size();
  st.mean.assign(len, 0.0);
  st.std.assign(len, 0.0);
  const double R = static_cast<double>(runs.size());
  std::vector<double> values(runs.size());
  for (std::size_t k = 0; k < len; ++k) {
    for (std::size_t r = 0; r < runs.size(); ++r) {
      values[r] = metric_value(runs[r].rows[k], metric, utility);
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / R;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    st.mean[k] = mean;
    st.std[k] = runs.size() > 1 ? std::sqrt(ss / (R - 1.0)) : 0.0;
  }
  return st;
}

void write_ensemble_csv(const EnsembleStats& stats, std::ostream& out) {
  out << "k,mean,std\n";
  for (std::size_t k = 0; k < stats.mean.size(); ++k) {
    out << k << ',' << format_double(stats.mean[k]) << ',' << format_double(stats.std[k]) << '\n';
  }
}

double peak_rebound(const std::vector<double>& curve) {
  double running_min = std::numeric_limits<double>::infinity();
  double rebound = 0.0;
  for (double v : curve) {
    running_min = std::min(running_min, v);
    rebound = std::max(rebound, v - running_min);
  }
  return rebound;
}

std::optional<std::size_t> settling_step(const std::vector<double>& curve, double target,
                                         double tol) {
  std::optional<std::size_t> since;
  for (std::size_t k = 0; k < curve.size(); ++k) {
    if (std::abs(curve[k] - target) <= tol) {
      if (!since) since = k;
    } else {
      since.reset();
    }
  }
  return since;
}

}  // namespace prefopt
