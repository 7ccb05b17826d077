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

#ifndef PREFOPT_ANALYSIS_HPP_
#define PREFOPT_ANALYSIS_HPP_

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefopt/controller.hpp"
#include "prefopt/linalg.hpp"
#include "prefopt/plant.hpp"
#include "prefopt/preference.hpp"
#include "prefopt/trajectory.hpp"

namespace prefopt {

// Outcome of a bound check. Vacuous: the bound's own preconditions fail
// (typically mu >= 1), so there is nothing to check.
enum class CheckStatus { pass, fail, vacuous };
std::string to_string(CheckStatus status);

// ---------------------------------------------------------------------------
// Constants.

// Lipschitz (L0), smoothness (L1) and strong convexity (m) of Phi~ on a box.
struct AssumptionConstants {
  double L0 = 0.0;
  double L1 = 0.0;
  double m = 0.0;
  bool exact = false;  // closed form (quadratic) or finite-difference estimate
  std::string method;
};

AssumptionConstants estimate_assumption_constants(const ReducedUtility& reduced, const Box& box);

struct BoundConstants {
  // Inputs.
  double L0 = 0.0, L1 = 0.0, m = 0.0;
  double L_x = 0.0;
  double L_sigma0 = 0.0, L_sigma1 = 0.0, sigma_prime0 = 0.0;
  double mu = 0.0, a1 = 0.0, alpha2 = 0.0;
  double eta = 0.0, delta = 0.0;
  std::size_t n = 0;  // perturbation dimension used for sqrt(n)
  // Derived.
  double L_p0 = 0.0, L_p1 = 0.0;
  double a2 = 0.0;
  double R1 = 0.0;
  double R2 = 0.0;            // with a1 (2 delta^2 + 2 eta + (eta / delta)^2), used by the checks
  double R2_statement = 0.0;  // with a1 (2 delta^2 + eta + (eta / (2 delta))^2)
  double rho = 0.0;
  double stability_offset = 0.0;  // a1 (2 delta^2 + eta + (eta / (2 delta))^2)

  nlohmann::json to_json() const;
  static BoundConstants from_json(const nlohmann::json& j);
};

// Pure function of its inputs; recomputing from a serialized report
// reproduces identical values.
BoundConstants compute_bound_constants(const AssumptionConstants& assumption, double L_x,
                                       const LinkFunction& link, const LyapunovCertificate& cert,
                                       double eta, double delta, std::size_t n);

// Recomputes the derived fields from the input fields of `c`.
BoundConstants recompute_derived(BoundConstants c);

// Best mu found by random search over Q, next to the universal lower bound
// 2 ||A||^2 that no quadratic (or other) certificate can beat.
struct CertificateSearch {
  LyapunovCertificate best;
  double lower_bound = 0.0;
  std::size_t candidates = 0;
};
CertificateSearch search_min_mu_certificate(const PlantModel& model, std::size_t trials,
                                            std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Preference probability p_{u_ref}(u) = sigma(Phi~(u) - Phi~(u_ref)).

double preference_probability(const ReducedUtility& reduced, const LinkFunction& link,
                              const Vector& u_ref, const Vector& u);

// sigma'(Phi~(u) - Phi~(u_ref)) grad Phi~(u). Needs an analytic gradient.
Vector gradient_of_p(const ReducedUtility& reduced, const LinkFunction& link, const Vector& u_ref,
                     const Vector& u);

// ---------------------------------------------------------------------------
// Lemma checks.

struct Lemma2Report {
  std::size_t samples = 0;
  double max_lipschitz_ratio = 0.0;   // |dp| / (L_p0 |du|)
  double max_smoothness_ratio = 0.0;  // |d grad p| / (L_p1 |du|)
  double min_convex_curvature = 0.0;  // min FD second derivative where Phi~(u) <= Phi~(u_ref)
  std::size_t convexity_samples = 0;
  double L_p0 = 0.0, L_p1 = 0.0;
  CheckStatus status = CheckStatus::pass;
  nlohmann::json to_json() const;
};

Lemma2Report verify_lemma2(const ReducedUtility& reduced, const LinkFunction& link, const Box& box,
                           std::size_t samples, std::mt19937_64& rng);

struct Lemma3Report {
  Vector u_star;
  std::vector<Vector> references;
  std::vector<Vector> minimizers;
  std::vector<double> distances;
  double tolerance = 1e-4;
  CheckStatus status = CheckStatus::pass;
  nlohmann::json to_json() const;
};

// Multi-start descent on log p_{u_ref}; log keeps the objective informative
// where p itself underflows.
Vector minimize_preference_probability(const ReducedUtility& reduced, const LinkFunction& link,
                                       const Vector& u_ref, std::mt19937_64& rng);

Lemma3Report verify_lemma3(const ReducedUtility& reduced, const LinkFunction& link,
                           const std::vector<Vector>& candidates, std::mt19937_64& rng);

struct ErrorTermSample {
  std::size_t k = 0;
  Vector e;                          // realised e_k
  Vector conditional_mean_estimate;  // Monte Carlo E[e_k | F_k]
  double standard_error = 0.0;       // of the norm estimate
  double lyapunov_prev = 0.0;        // V(x_{k-1}, u_{k-1} + delta v_{k-1})
  double bound = 0.0;                // sqrt(R1 V + R2)
};

// Frozen-filtration resampling of (v_k, feedback) for row k (k >= 1).
ErrorTermSample compute_error_term(const TrajectoryRecord& record, std::size_t k,
                                   const PlantModel& plant, const ReducedUtility& reduced,
                                   const LinkFunction& link, const BoundConstants& constants,
                                   const LyapunovCertificate& cert, std::size_t inner_samples,
                                   std::mt19937_64& rng,
                                   Evaluation evaluation = Evaluation::transient);

struct Lemma4Report {
  std::vector<ErrorTermSample> samples;
  std::size_t inner_samples = 0;
  double allowance_sigmas = 4.0;
  double max_ratio = 0.0;  // ||E e|| / (bound + allowance)
  std::size_t violations = 0;
  CheckStatus status = CheckStatus::pass;
  BoundConstants constants;
  nlohmann::json to_json() const;
};

Lemma4Report verify_lemma4(const TrajectoryRecord& record, const PlantModel& plant,
                           const ReducedUtility& reduced, const LinkFunction& link,
                           const BoundConstants& constants, const LyapunovCertificate& cert,
                           std::size_t inner_samples, std::mt19937_64& rng,
                           Evaluation evaluation = Evaluation::transient);

struct Lemma1Report {
  std::vector<double> mean;   // ensemble mean of V(x_k, u_k + delta v_k)
  std::vector<double> bound;  // mu^k E[V_0] + a1 / (1 - mu) (...)
  std::vector<double> allowance;
  std::size_t replicas = 0;
  double allowance_sigmas = 4.0;
  double max_ratio = 0.0;
  std::size_t violations = 0;
  // mean_k <= mu mean_{k-1} + offset, valid for any mu.
  double recursion_max_ratio = 0.0;
  CheckStatus status = CheckStatus::pass;
  LyapunovCertificate cert;
  double offset = 0.0;
  nlohmann::json to_json() const;
};

// allowance_sigmas = 0 demands the bound exactly.
Lemma1Report verify_lemma1(const std::vector<TrajectoryRecord>& ensemble,
                           const LyapunovCertificate& cert, double eta, double delta,
                           double allowance_sigmas = 4.0);

struct Theorem1Report {
  std::size_t k_prime = 0;
  double rho = 0.0;
  double envelope_rate = 0.0;  // (1 + rho) / 2
  double b1 = 0.0, b2 = 0.0;
  double C = 0.0;
  std::vector<double> mean_sq;  // E ||u_k - u*||^2
  std::vector<double> bound;    // for k > k'
  double max_ratio = 0.0;
  std::size_t violations = 0;
  double allowance_sigmas = 4.0;
  CheckStatus status = CheckStatus::pass;
  std::string note;
  nlohmann::json to_json() const;
};

// Throws ConfigError unless rho = 1 - 2 sigma'(0) m eta lies in (0, 1).
Theorem1Report verify_theorem1(const std::vector<TrajectoryRecord>& ensemble,
                               const BoundConstants& constants, double mean_initial_lyapunov,
                               std::size_t k_prime, double allowance_sigmas = 4.0);

// Closed form of the sequence lemma: a* and rho' for (rho, b, c).
double sequence_fixed_point(double rho, double b, double c);
double sequence_rate(double rho, double b, double c);

struct SequenceLemmaReport {
  std::size_t instances = 0;
  std::size_t sequences = 0;
  std::size_t comparisons = 0;
  std::size_t violations = 0;
  double max_ratio = 0.0;  // a_k^2 / bound
  CheckStatus status = CheckStatus::pass;
  nlohmann::json to_json() const;
};

// Random sequences with a_{k+1}^2 = U (rho a_k^2 + b_k a_k + c), U ~ U[0, 1]
// (U = 1 a third of the time), checked against the bound for all k' < k.
SequenceLemmaReport check_sequence_lemma(double rho, const std::vector<double>& b, double c,
                                         double a0, std::size_t trials, std::mt19937_64& rng);

// Random (rho, b, c, a0) with rho in (0, 0.95), c in (0, 1], b_0 in (0, 1].
SequenceLemmaReport fuzz_sequence_lemma(std::size_t instances, std::mt19937_64& rng,
                                        std::size_t length = 40);

// ---------------------------------------------------------------------------
// Ensembles.

enum class Metric { relative_error, dist_to_opt_squared, lyapunov, utility, temperature };
Metric parse_metric(const std::string& name);
std::string to_string(Metric metric);

// Needs the utility for relative_error (x_ref) and temperature.
double metric_value(const TrajectoryRow& row, Metric metric, const LatentUtility* utility);

struct EnsembleStats {
  Metric metric = Metric::relative_error;
  std::size_t replicas = 0;
  std::vector<double> mean;
  std::vector<double> std;  // sample standard deviation (0 for one replica)
};

EnsembleStats ensemble_stats(const std::vector<TrajectoryRecord>& runs, Metric metric,
                             const LatentUtility* utility = nullptr);
void write_ensemble_csv(const EnsembleStats& stats, std::ostream& out);

// Largest rise of the mean curve above its running minimum.
double peak_rebound(const std::vector<double>& curve);

// First index after which |curve - target| <= tol for the rest of the curve.
std::optional<std::size_t> settling_step(const std::vector<double>& curve, double target, double tol);

}  // namespace prefopt

#endif  // PREFOPT_ANALYSIS_HPP_
