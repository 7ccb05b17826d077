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

// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "prefopt/analysis.hpp"
#include "prefopt/harness.hpp"

using namespace prefopt;
namespace fs = std::filesystem;

namespace {

constexpr double kStepNormTolerance = 1e-12;
constexpr double kRuntimeBudgetSeconds = 10.0;
constexpr double kFinalErrorThreshold = 0.05;
constexpr double kInitialErrorTolerance = 0.01;
constexpr std::size_t kSteadyStateWindow = 1000;
constexpr double kBaselineFactor = 3.0;
constexpr double kComfortBandC = 0.5;
constexpr double kGridLowC = 15.0, kGridHighC = 35.0, kGridStepC = 1e-3;
constexpr std::size_t kTailWindow = 100;
constexpr double kGradientRelativeTolerance = 1e-6;
constexpr std::size_t kGradientPoints = 100;
constexpr double kUnitNormTolerance = 1e-12;
constexpr std::size_t kSphereDraws = 100000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << "  |  " << o.detail << std::endl;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const EnsembleStats& stats_of(const ArmResult& arm, Metric metric) {
  for (const auto& s : arm.stats) {
    if (s.metric == metric) return s;
  }
  throw std::runtime_error("metric " + to_string(metric) + " missing");
}

double tail_mean(const std::vector<double>& v, std::size_t window) {
  const std::size_t n = std::min(window, v.size());
  double s = 0.0;
  for (std::size_t i = v.size() - n; i < v.size(); ++i) s += v[i];
  return s / static_cast<double>(n);
}

double peak(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

ExperimentResult run_builtin(const std::string& name, bool verify) {
  auto config = builtin_config(name);
  if (!verify) config.verify.clear();
  return run_experiment(config, RunOptions{std::nullopt, 0, verify});
}

std::string status_of(const nlohmann::json& reports, const std::string& lemma) {
  if (!reports.contains(lemma)) return "missing";
  return reports.at(lemma).value("status", "missing");
}

}  // namespace

int main() {
  std::cout << "prefopt acceptance suite" << std::endl;

  // Shared runs.
  const auto c01 = run_builtin("quadratic-c01", true);
  const auto c07 = run_builtin("quadratic-c07", false);
  const auto alg = run_builtin("quadratic-algebraic", false);
  const auto thermal = run_builtin("thermal", false);

  report("algorithm fidelity", [&] {
    auto config = builtin_config("quadratic-c01");
    config.controller.horizon = 3000;
    config.verify.clear();
    config.metrics = {Metric::relative_error};
    const auto t0 = std::chrono::steady_clock::now();
    const auto first = run_experiment(config, RunOptions{std::nullopt, 0, false});
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    double worst = 0.0;
    for (const auto& arm : {std::cref(first.arms.front()), std::cref(c01.arms.front())}) {
      for (const auto& run : arm.get().runs) {
        for (std::size_t k = 2; k < run.rows.size(); ++k) {
          const double norm = (run.rows[k].u - run.rows[k - 1].u).norm();
          worst = std::max(worst, std::abs(norm - config.controller.gain()));
        }
      }
    }

    const fs::path base = fs::temp_directory_path() / "prefopt_acceptance";
    fs::remove_all(base);
    write_result(first, base / "a");
    write_result(run_experiment(config, RunOptions{std::nullopt, 0, false}), base / "b");
    bool identical = true;
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(base / "a")) {
      if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
      identical = identical && slurp(e.path()) == slurp(base / "b" / fs::relative(e.path(), base / "a"));
      ++files;
    }
    fs::remove_all(base);
    const bool pass = worst <= kStepNormTolerance && identical && files > 20 && seconds < kRuntimeBudgetSeconds;
    return Outcome{pass, "max | ||du|| - eta/(2 delta) | = " + fmt(worst) + " (tol " + fmt(kStepNormTolerance) +
                             "); " + std::to_string(files) + " files " + (identical ? "byte-identical" : "DIFFER") +
                             "; 20 x 3000 ensemble in " + fmt(seconds) + " s (budget " +
                             fmt(kRuntimeBudgetSeconds) + " s)"};
  });

  report("quadratic c = 0.1 reaches the accuracy of the algebraic baseline", [&] {
    const auto& m = stats_of(c01.arms.front(), Metric::relative_error).mean;
    const auto& b = stats_of(alg.arms.front(), Metric::relative_error).mean;
    const double closed_ss = tail_mean(m, kSteadyStateWindow), base_ss = tail_mean(b, kSteadyStateWindow);
    const double ratio = std::max(closed_ss, base_ss) / std::min(closed_ss, base_ss);
    const bool pass = std::abs(m.front() - 1.0) <= kInitialErrorTolerance && m.back() < kFinalErrorThreshold &&
                      ratio <= kBaselineFactor;
    return Outcome{pass, "mean relative error " + fmt(m.front()) + " -> " + fmt(m.back()) + " at T = " +
                             std::to_string(m.size()) + " (threshold " + fmt(kFinalErrorThreshold) +
                             "); steady-state closed loop " + fmt(closed_ss) + " vs algebraic " + fmt(base_ss) +
                             ", ratio " + fmt(ratio) + " (max " + fmt(kBaselineFactor) + ")"};
  });

  report("quadratic c = 0.7 shows larger overshoot and final spread than c = 0.1", [&] {
    const auto& s01 = stats_of(c01.arms.front(), Metric::relative_error);
    const auto& s07 = stats_of(c07.arms.front(), Metric::relative_error);
    // Both curves start at exactly 1 (x0 = h(u0) = 0), so overshoot is the
    // rise of the mean curve above its running minimum.
    const double o01 = peak_rebound(s01.mean), o07 = peak_rebound(s07.mean);
    const bool pass = o07 > o01 && s07.std.back() > s01.std.back();
    return Outcome{pass, "overshoot (peak rise above running minimum) " + fmt(o07) + " vs " + fmt(o01) +
                             "; raw peak " + fmt(peak(s07.mean)) + " vs " + fmt(peak(s01.mean)) + "; final std " +
                             fmt(s07.std.back()) + " vs " + fmt(s01.std.back())};
  });

  report("thermal comfort tracking", [&] {
    PmvEnvironment env;
    double best_t = kGridLowC, best = std::numeric_limits<double>::infinity();
    for (double t = kGridLowC; t <= kGridHighC + 1e-12; t += kGridStepC) {
      const double v = ppd(pmv(env, t));
      if (v < best) {
        best = v;
        best_t = t;
      }
    }
    std::string detail = "PPD minimum at " + fmt(best_t) + " C;";
    bool pass = true;
    std::optional<std::size_t> settle_logistic, settle_sign;
    for (const auto& arm : thermal.arms) {
      const auto& mean = stats_of(arm, Metric::temperature).mean;
      const double final_t = tail_mean(mean, kTailWindow);
      const auto settle = settling_step(mean, best_t, kComfortBandC);
      pass = pass && std::abs(final_t - best_t) <= kComfortBandC && settle.has_value();
      if (arm.link.kind() == LinkKind::logistic) settle_logistic = settle;
      if (arm.link.kind() == LinkKind::sign) settle_sign = settle;
      detail += " " + arm.label + ": final " + fmt(final_t) + " C, enters the " + fmt(kComfortBandC) +
                " C band for good at step " + (settle ? std::to_string(*settle) : "never") + ";";
    }
    pass = pass && settle_logistic && settle_sign && *settle_sign < *settle_logistic;
    return Outcome{pass, detail + " sign faster: " + (pass ? "yes" : "no")};
  });

  report("Lemma 1 Lyapunov bound", [&] {
    const auto& rep = c01.reports.at("1");
    const std::string st = rep.at("status");
    std::string detail = "quadratic c = 0.1: " + st;
    if (rep.contains("certificate")) {
      const auto& cert = rep.at("certificate");
      detail += " (mu = " + fmt(cert.at("mu").get<double>()) + ", lower bound 2 ||A||^2 = " +
                fmt(cert.value("mu_lower_bound", std::nan(""))) + " for every Q)";
    }
    detail += ", recursion max ratio " + fmt(rep.value("recursion_max_ratio", std::nan(""))) + ";";

    // Deadbeat plant: every replica and step against the constant bound, no allowance.
    const PlantModel deadbeat(Matrix::Zero(2, 2), Matrix::Identity(2, 2));
    const auto cert = compute_lyapunov_certificate(deadbeat);
    const auto util = LatentUtility::quadratic(to_vector({100, 100}));
    auto cc = builtin_config("quadratic-c01").controller;
    cc.horizon = 3000;
    const double offset = cert.a1 * (2 * cc.delta * cc.delta + cc.eta + std::pow(cc.eta / (2 * cc.delta), 2));
    double worst = 0.0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
      PreferenceOracle oracle(LinkFunction(LinkKind::logistic), util, s);
      std::mt19937_64 rng(s);
      LoopOptions opt;
      opt.certificate = cert;
      const auto run = run_closed_loop(deadbeat, oracle, cc, deadbeat.steady_state(cc.u0), rng, opt);
      for (std::size_t k = 1; k < run.rows.size(); ++k) worst = std::max(worst, *run.rows[k].lyapunov / offset);
    }
    detail += " deadbeat: mu = " + fmt(cert.mu) + ", max V / constant bound = " + fmt(worst);
    return Outcome{st == "pass" && cert.mu == 0.0 && worst <= 1.0, detail};
  });

  report("Lemma 2 and Lemma 3", [&] {
    const auto& l2 = c01.reports.at("2");
    const auto& l3 = c01.reports.at("3");
    const bool pass = status_of(c01.reports, "2") == "pass" && status_of(c01.reports, "3") == "pass" &&
                      l2.at("samples") == 10000 && l3.at("distances").size() == 5;
    double max_d = 0.0;
    for (const auto& d : l3.at("distances")) max_d = std::max(max_d, d.get<double>());
    return Outcome{pass, "Lipschitz ratio " + fmt(l2.at("max_lipschitz_ratio")) + ", smoothness ratio " +
                             fmt(l2.at("max_smoothness_ratio")) + ", min partial-convex curvature " +
                             fmt(l2.at("min_convex_curvature")) + " over 10^4 pairs; max minimizer distance " +
                             fmt(max_d) + " (tol 1e-4) over 5 references"};
  });

  report("Lemma 4 error-term bound", [&] {
    const auto& l4 = c01.reports.at("4");
    const bool pass = status_of(c01.reports, "4") == "pass" && l4.at("inner_samples") == 10000;
    return Outcome{pass, std::to_string(l4.at("steps").size()) + " logged steps, " +
                             std::to_string(l4.at("inner_samples").get<std::size_t>()) +
                             " inner samples, max ||E e|| / (bound + 4 se) = " + fmt(l4.at("max_ratio")) +
                             ", violations " + std::to_string(l4.at("violations").get<std::size_t>())};
  });

  report("Theorem 1 envelope", [&] {
    const auto& t1 = c01.reports.at("theorem1");
    const std::string st = t1.at("status");
    return Outcome{st == "pass", "k' = " + std::to_string(t1.at("k_prime").get<std::size_t>()) + ", rho = " +
                                     fmt(t1.at("rho")) + ": " + st +
                                     (t1.value("note", "").empty() ? "" : " (" + t1.at("note").get<std::string>() + ")")};
  });

  report("Lemma 5 fuzzing", [&] {
    const auto& l5 = c01.reports.at("5");
    const bool pass = status_of(c01.reports, "5") == "pass" && l5.at("instances") == 10000;
    return Outcome{pass, std::to_string(l5.at("instances").get<std::size_t>()) + " instances, " +
                             std::to_string(l5.at("comparisons").get<std::size_t>()) + " comparisons, violations " +
                             std::to_string(l5.at("violations").get<std::size_t>()) + ", max ratio " +
                             fmt(l5.at("max_ratio"))};
  });

  report("numerical hygiene", [&] {
    const auto config = builtin_config("quadratic-c01");
    const ReducedUtility reduced(config.latent_utility(), config.plant_model());
    const LinkFunction logistic(LinkKind::logistic);
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> n01;
    double worst_grad = 0.0;
    for (std::size_t i = 0; i < kGradientPoints; ++i) {
      const Vector u = reduced.minimizer() + 0.05 * to_vector({n01(rng), n01(rng)});
      const Vector ref = reduced.minimizer() + 0.05 * to_vector({n01(rng), n01(rng)});
      const Vector g = gradient_of_p(reduced, logistic, ref, u);
      Vector fd(2);
      for (int j = 0; j < 2; ++j) {
        Vector e = Vector::Zero(2);
        e(j) = 1e-6;
        fd(j) = (preference_probability(reduced, logistic, ref, u + e) -
                 preference_probability(reduced, logistic, ref, u - e)) /
                2e-6;
      }
      worst_grad = std::max(worst_grad, (g - fd).norm() / g.norm());
    }
    double worst_norm = 0.0;
    Vector mean = Vector::Zero(3);
    for (std::size_t i = 0; i < kSphereDraws; ++i) {
      const Vector v = sample_unit_sphere(3, rng);
      worst_norm = std::max(worst_norm, std::abs(v.norm() - 1.0));
      mean += v;
    }
    mean /= static_cast<double>(kSphereDraws);
    const double mean_bound = 4.0 / std::sqrt(static_cast<double>(kSphereDraws));
    const bool pass = worst_grad < kGradientRelativeTolerance && worst_norm <= kUnitNormTolerance &&
                      mean.cwiseAbs().maxCoeff() < mean_bound;
    return Outcome{pass, "gradient of p vs central differences: max relative error " + fmt(worst_grad) +
                             " at " + std::to_string(kGradientPoints) + " points; sphere: max | ||v|| - 1 | " +
                             fmt(worst_norm) + ", max |mean| " + fmt(mean.cwiseAbs().maxCoeff()) + " (bound " +
                             fmt(mean_bound) + ")"};
  });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
