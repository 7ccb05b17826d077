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

#include "prefopt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <unsupported/Eigen/MatrixFunctions>

#include "prefopt/errors.hpp"

#ifndef PREFOPT_GIT_DESCRIBE
#define PREFOPT_GIT_DESCRIBE "unknown"
#endif

namespace prefopt {

namespace fs = std::filesystem;
using nlohmann::json;

Variant parse_variant(const std::string& name) {
  if (name == "closed-loop") return Variant::closed_loop;
  if (name == "algebraic") return Variant::algebraic;
  if (name == "ideal" || name == "ideal-p-descent") return Variant::ideal;
  throw ConfigError("variant: unknown '" + name + "' (expected closed-loop, algebraic or ideal)");
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::closed_loop: return "closed-loop";
    case Variant::algebraic: return "algebraic";
    case Variant::ideal: return "ideal";
  }
  return "?";
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

// ---------------------------------------------------------------------------
// ExperimentConfig

const PlantModel& ExperimentConfig::plant_model() const {
  if (!plant) throw ConfigError("config '" + name + "': no plant");
  return plant->model;
}

const LatentUtility& ExperimentConfig::latent_utility() const {
  if (!utility) throw ConfigError("config '" + name + "': no utility");
  return *utility;
}

void ExperimentConfig::validate() const {
  const PlantModel& p = plant_model();
  const LatentUtility& util = latent_utility();
  if (replicas < 1) throw ConfigError("replicas: must be at least 1");
  if (oracles.empty()) throw ConfigError("oracle: at least one oracle is required");
  for (const auto& o : oracles) {
    if (o.label.empty()) throw ConfigError("oracles: every oracle needs a label");
  }
  for (std::size_t i = 0; i < oracles.size(); ++i) {
    for (std::size_t j = i + 1; j < oracles.size(); ++j) {
      if (oracles[i].label == oracles[j].label) {
        throw ConfigError("oracles: duplicate label '" + oracles[i].label + "'");
      }
    }
  }
  try {
    controller.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("controller: ") + e.what());
  }
  if (static_cast<std::size_t>(controller.u0.size()) != p.n_u()) {
    throw ConfigError("controller.u0: length " + std::to_string(controller.u0.size()) +
                      " but the plant has " + std::to_string(p.n_u()) + " inputs");
  }
  if (x0 && static_cast<std::size_t>(x0->size()) != p.n_x()) {
    throw ConfigError("x0: length " + std::to_string(x0->size()) + " but the plant has " +
                      std::to_string(p.n_x()) + " states");
  }
  try {
    util.check_dimensions(p.n_x());
  } catch (const Error& e) {
    throw ConfigError(std::string("utility: ") + e.what());
  }
  if (safety_box) {
    if (safety_box->dim() != p.n_u()) {
      throw ConfigError("safety_box: dimension " + std::to_string(safety_box->dim()) +
                        " but the plant has " + std::to_string(p.n_u()) + " inputs");
    }
    if (safety_box->empty()) throw ConfigError("safety_box: lower exceeds upper");
  }
  for (Metric m : metrics) {
    const bool quad = util.kind() == UtilityKind::quadratic_tracking;
    if ((m == Metric::relative_error || m == Metric::dist_to_opt_squared) && !quad) {
      throw ConfigError("metrics: " + to_string(m) + " needs a quadratic utility");
    }
    if (m == Metric::temperature && util.kind() != UtilityKind::ppd_comfort) {
      throw ConfigError("metrics: temperature needs a ppd utility");
    }
    if (m == Metric::lyapunov && variant != Variant::closed_loop) {
      throw ConfigError("metrics: lyapunov is only logged for the closed-loop variant");
    }
  }
  if (variant == Variant::ideal) {
    if (!util.gradient_available()) throw ConfigError("variant ideal: needs a quadratic utility");
    for (const auto& o : oracles) {
      if (!o.link.smooth()) throw ConfigError("variant ideal: needs a smooth link");
    }
  }
  static const std::vector<std::string> known{"1", "2", "3", "4", "5", "theorem1"};
  for (const auto& v : verify) {
    if (std::find(known.begin(), known.end(), v) == known.end()) {
      throw ConfigError("verify: unknown check '" + v + "' (expected 1, 2, 3, 4, 5 or theorem1)");
    }
  }
}

json ExperimentConfig::to_json() const {
  json j;
  j["version"] = 1;
  j["name"] = name;
  j["plant"] = plant_to_json(plant_model(), plant->Q);
  j["utility"] = prefopt::to_json(latent_utility());
  json o = json::array();
  for (const auto& spec : oracles) o.push_back({{"label", spec.label}, {"link", spec.link.name()}});
  j["oracles"] = o;
  j["controller"] = prefopt::to_json(controller);
  j["variant"] = to_string(variant);
  j["x0"] = x0 ? json(to_std(*x0)) : json("steady-state");
  j["replicas"] = replicas;
  j["seed"] = seed;
  json m = json::array();
  for (Metric metric : metrics) m.push_back(to_string(metric));
  j["metrics"] = m;
  j["verify"] = verify;
  j["verify_settings"] = {{"k_prime", verify_settings.k_prime},
                          {"lemma2_samples", verify_settings.lemma2_samples},
                          {"lemma3_candidates", verify_settings.lemma3_candidates},
                          {"lemma4_inner_samples", verify_settings.lemma4_inner_samples},
                          {"lemma5_instances", verify_settings.lemma5_instances},
                          {"certificate_trials", verify_settings.certificate_trials}};
  if (safety_box) {
    j["safety_box"] = {{"lower", to_std(safety_box->lower)}, {"upper", to_std(safety_box->upper)}};
  }
  return j;
}

std::uint64_t ExperimentConfig::hash() const {
  const std::string text = to_json().dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

Vector number_array(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw ConfigError(field + ": expected a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw ConfigError(field + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return to_vector(out);
}

std::size_t positive_count(const json& j, const std::string& field) {
  if (!j.is_number_integer() || j.get<long long>() < 1) {
    throw ConfigError(field + ": expected a positive integer");
  }
  return j.get<std::size_t>();
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  static const std::vector<std::string> allowed{
      "version", "name",    "plant",    "utility", "oracle",          "oracles",    "controller",
      "variant", "x0",      "replicas", "seed",    "metrics",         "verify",     "verify_settings",
      "safety_box"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("config: unknown field '" + key + "'");
    }
  }
  if (!j.contains("version") || j.at("version") != 1) {
    throw ConfigError("config: field 'version' must be 1");
  }
  ExperimentConfig c;
  c.name = j.value("name", std::string("experiment"));

  if (!j.contains("plant")) throw ConfigError("config: missing field 'plant'");
  const json& pj = j.at("plant");
  std::string file;
  if (pj.is_string()) file = pj.get<std::string>();
  if (pj.is_object() && pj.contains("file")) file = pj.at("file").get<std::string>();
  if (!file.empty()) {
    fs::path path = file;
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    if (!fs::exists(path)) throw ConfigError("plant: file '" + path.string() + "' does not exist");
    c.plant.emplace(load_plant_file(path.string()));
    c.plant_file = path.string();
  } else {
    try {
      c.plant.emplace(plant_from_json(pj));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("plant: ") + e.what());
    }
  }

  if (!j.contains("utility")) throw ConfigError("config: missing field 'utility'");
  c.utility.emplace(utility_from_json(j.at("utility")));

  if (j.contains("oracle") && j.contains("oracles")) {
    throw ConfigError("config: give either 'oracle' or 'oracles', not both");
  }
  auto read_oracle = [](const json& o, std::size_t index) {
    if (o.is_string()) return OracleSpec{o.get<std::string>(), LinkFunction::parse(o.get<std::string>())};
    if (!o.is_object() || !o.contains("link") || !o.at("link").is_string()) {
      throw ConfigError("oracles[" + std::to_string(index) + "]: expected {\"link\": ...}");
    }
    const auto link = LinkFunction::parse(o.at("link").get<std::string>());
    return OracleSpec{o.value("label", link.name()), link};
  };
  if (j.contains("oracles")) {
    if (!j.at("oracles").is_array()) throw ConfigError("oracles: expected an array");
    for (std::size_t i = 0; i < j.at("oracles").size(); ++i) {
      c.oracles.push_back(read_oracle(j.at("oracles")[i], i));
    }
  } else if (j.contains("oracle")) {
    c.oracles.push_back(read_oracle(j.at("oracle"), 0));
  } else {
    c.oracles.push_back(OracleSpec{"logistic", LinkFunction(LinkKind::logistic)});
  }

  if (!j.contains("controller")) throw ConfigError("config: missing field 'controller'");
  c.controller = controller_config_from_json(j.at("controller"));
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  if (j.contains("x0")) {
    const json& x = j.at("x0");
    if (x.is_string()) {
      if (x.get<std::string>() != "steady-state") {
        throw ConfigError("x0: expected \"steady-state\" or an array of numbers");
      }
    } else {
      c.x0 = number_array(x, "x0");
    }
  }
  if (j.contains("replicas")) c.replicas = positive_count(j.at("replicas"), "replicas");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("metrics")) {
    for (const auto& m : j.at("metrics")) c.metrics.push_back(parse_metric(m.get<std::string>()));
  }
  if (j.contains("verify")) {
    for (const auto& v : j.at("verify")) {
      c.verify.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
  }
  if (j.contains("verify_settings")) {
    const json& s = j.at("verify_settings");
    auto& vs = c.verify_settings;
    if (s.contains("k_prime")) vs.k_prime = s.at("k_prime").get<std::size_t>();
    if (s.contains("lemma2_samples")) vs.lemma2_samples = positive_count(s.at("lemma2_samples"), "verify_settings.lemma2_samples");
    if (s.contains("lemma3_candidates")) vs.lemma3_candidates = positive_count(s.at("lemma3_candidates"), "verify_settings.lemma3_candidates");
    if (s.contains("lemma4_inner_samples")) vs.lemma4_inner_samples = positive_count(s.at("lemma4_inner_samples"), "verify_settings.lemma4_inner_samples");
    if (s.contains("lemma5_instances")) vs.lemma5_instances = positive_count(s.at("lemma5_instances"), "verify_settings.lemma5_instances");
    if (s.contains("certificate_trials")) vs.certificate_trials = s.at("certificate_trials").get<std::size_t>();
  }
  if (j.contains("safety_box")) {
    const json& b = j.at("safety_box");
    if (!b.is_object() || !b.contains("lower") || !b.contains("upper")) {
      throw ConfigError("safety_box: expected {\"lower\": [...], \"upper\": [...]}");
    }
    c.safety_box = Box{number_array(b.at("lower"), "safety_box.lower"),
                       number_array(b.at("upper"), "safety_box.upper")};
    if (c.safety_box->lower.size() != c.safety_box->upper.size()) {
      throw ConfigError("safety_box: lower and upper differ in length");
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Thermal surrogate

PlantModel thermal_rc_plant(const ThermalRcParameters& p) {
  constexpr int n = 13;
  Matrix g = Matrix::Zero(n, n);
  Vector to_outdoor = Vector::Zero(n);
  Vector cap(n);
  cap(0) = p.c_air;
  auto connect = [&](int i, int j, double r) {
    g(i, j) += 1.0 / r;
    g(j, i) += 1.0 / r;
  };
  for (int e = 0; e < 6; ++e) {
    const int inner = 1 + 2 * e;
    const int outer = 2 + 2 * e;
    cap(inner) = p.c_inner;
    cap(outer) = p.c_outer;
    connect(0, inner, p.r_inner);
    connect(inner, outer, p.r_mid);
    to_outdoor(outer) += 1.0 / p.r_outer;
  }
  to_outdoor(0) += 1.0 / p.r_infiltration;

  Matrix ac(n, n);
  for (int i = 0; i < n; ++i) {
    ac.row(i) = g.row(i) / cap(i);
    ac(i, i) = -(g.row(i).sum() + to_outdoor(i)) / cap(i);
  }
  Matrix bc = Matrix::Zero(n, 1);
  bc(0, 0) = 1000.0 / p.c_air;  // kW

  // Zero-order hold via the augmented exponential [[Ac, Bc], [0, 0]].
  Matrix aug = Matrix::Zero(n + 1, n + 1);
  aug.topLeftCorner(n, n) = ac * p.dt;
  aug.topRightCorner(n, 1) = bc * p.dt;
  const Matrix e = aug.exp();
  return PlantModel(e.topLeftCorner(n, n), e.topRightCorner(n, 1), "thermal-rc13");
}

// ---------------------------------------------------------------------------
// Builtins

namespace {

ExperimentConfig quadratic_config(const std::string& name, double c, Variant variant) {
  ExperimentConfig cfg;
  cfg.name = name;
  Matrix a(2, 2);
  a << c, 1.0, 0.0, c;
  cfg.plant.emplace(PlantDefinition{PlantModel(a, Matrix::Identity(2, 2), name), std::nullopt});
  Vector ref(2);
  ref << 100.0, 100.0;
  cfg.utility.emplace(LatentUtility::quadratic(ref));
  cfg.oracles.push_back(OracleSpec{"logistic", LinkFunction(LinkKind::logistic)});
  cfg.controller.eta = 0.1;
  cfg.controller.delta = 0.5;
  cfg.controller.horizon = 6000;
  cfg.controller.u0 = Vector::Zero(2);
  cfg.variant = variant;
  cfg.replicas = 20;
  cfg.seed = 1;
  cfg.metrics = {Metric::relative_error, Metric::dist_to_opt_squared};
  if (variant == Variant::closed_loop) cfg.metrics.push_back(Metric::lyapunov);
  return cfg;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

}  // namespace

std::vector<std::string> builtin_names() {
  return {"quadratic-c01", "quadratic-c07", "quadratic-algebraic", "thermal"};
}

std::vector<std::string> suggest_builtins(const std::string& name) {
  std::vector<std::string> out;
  for (const auto& b : builtin_names()) {
    const bool close = edit_distance(name, b) <= 3 ||
                       (!name.empty() && b.find(name) != std::string::npos);
    if (close) out.push_back(b);
  }
  if (out.empty()) out = builtin_names();
  return out;
}

ExperimentConfig builtin_config(const std::string& name) {
  if (name == "quadratic-c01") {
    auto cfg = quadratic_config(name, 0.1, Variant::closed_loop);
    cfg.verify = {"1", "2", "3", "4", "5", "theorem1"};
    return cfg;
  }
  if (name == "quadratic-c07") {
    auto cfg = quadratic_config(name, 0.7, Variant::closed_loop);
    cfg.verify = {"1"};
    return cfg;
  }
  if (name == "quadratic-algebraic") return quadratic_config(name, 0.1, Variant::algebraic);
  if (name == "thermal") {
    ExperimentConfig cfg;
    cfg.name = name;
    const ThermalRcParameters params;
    cfg.plant.emplace(PlantDefinition{thermal_rc_plant(params), std::nullopt});
    cfg.utility.emplace(LatentUtility::ppd_comfort(0, params.outdoor));
    cfg.oracles = {OracleSpec{"logistic", LinkFunction(LinkKind::logistic)},
                   OracleSpec{"sign", LinkFunction(LinkKind::sign)}};
    cfg.controller.eta = 0.05;
    cfg.controller.delta = 0.25;
    cfg.controller.horizon = 2000;
    cfg.controller.u0 = Vector::Constant(1, 1.0);
    cfg.replicas = 20;
    cfg.seed = 1;
    cfg.metrics = {Metric::temperature, Metric::utility};
    return cfg;
  }
  std::string list;
  for (const auto& s : suggest_builtins(name)) list += (list.empty() ? "" : ", ") + s;
  throw ConfigError("unknown builtin '" + name + "'; did you mean: " + list);
}

std::vector<ExperimentConfig> builtin_configs() {
  std::vector<ExperimentConfig> out;
  for (const auto& n : builtin_names()) out.push_back(builtin_config(n));
  return out;
}

// ---------------------------------------------------------------------------
// Running

namespace {

bool needs_certificate_search(const ExperimentConfig& config) {
  for (const auto& v : config.verify) {
    if (v == "1" || v == "4" || v == "theorem1") return true;
  }
  return false;
}

std::uint64_t oracle_seed_for(std::uint64_t replica_seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(replica_seed),
                    static_cast<std::uint32_t>(replica_seed >> 32), 0x6f72u, 0x61636c65u};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::optional<Vector> known_optimum(const ExperimentConfig& config) {
  if (!config.latent_utility().gradient_available()) return std::nullopt;
  return ReducedUtility(config.latent_utility(), config.plant_model()).minimizer();
}

TrajectoryRecord run_replica(const ExperimentConfig& config, const OracleSpec& oracle_spec,
                             const LyapunovCertificate& cert, std::size_t r) {
  const PlantModel& plant = config.plant_model();
  const std::uint64_t seed = config.seed + r;
  TrajectoryRecord record;
  if (config.variant == Variant::ideal) {
    const ReducedUtility reduced(config.latent_utility(), plant);
    record = run_ideal_p_descent(reduced, oracle_spec.link, config.controller.eta,
                                 config.controller.u0, config.controller.horizon);
    record.meta.seed = seed;
    record.meta.plant_id = plant.id();
    return record;
  }
  std::mt19937_64 rng(seed);
  PreferenceOracle oracle(oracle_spec.link, config.latent_utility(), oracle_seed_for(seed));
  LoopOptions opts;
  opts.x0 = config.x0;
  opts.u_star = known_optimum(config);
  opts.safety_box = config.safety_box;
  if (config.variant == Variant::algebraic) {
    record = run_algebraic_variant(plant, oracle, config.controller, rng, opts);
  } else {
    opts.certificate = cert;
    const Vector x0 = config.x0 ? *config.x0 : plant.steady_state(config.controller.u0);
    record = run_closed_loop(plant, oracle, config.controller, x0, rng, opts);
  }
  record.meta.seed = seed;
  return record;
}

std::vector<Vector> collect(const std::vector<TrajectoryRecord>& runs, bool inputs,
                            const PlantModel& plant) {
  std::vector<Vector> out;
  for (const auto& r : runs) {
    for (const auto& row : r.rows) {
      if (inputs) {
        out.push_back(row.u);
        out.push_back(row.applied);
      } else {
        out.push_back(row.x);
        out.push_back(plant.steady_state(row.applied));
      }
    }
  }
  return out;
}

json skipped(const std::string& lemma, const std::string& reason) {
  return json{{"lemma", lemma}, {"status", "skipped"}, {"reason", reason}};
}

}  // namespace

ExperimentCertificate experiment_certificate(const ExperimentConfig& config) {
  const PlantModel& plant = config.plant_model();
  const auto n = static_cast<Eigen::Index>(plant.n_x());
  const Matrix q = config.plant->Q ? *config.plant->Q : Matrix(Matrix::Identity(n, n));
  ExperimentCertificate out;
  out.cert = compute_lyapunov_certificate(plant, q, lipschitz_constant_of_h(plant));
  if (!config.plant->Q && !out.cert.contractive() && needs_certificate_search(config) &&
      config.verify_settings.certificate_trials > 0) {
    std::mt19937_64 rng(0x5eed5eedULL);
    out.search = search_min_mu_certificate(plant, config.verify_settings.certificate_trials, rng);
    if (out.search->best.mu < out.cert.mu) out.cert = out.search->best;
  }
  return out;
}

json run_checks(const ExperimentConfig& config, const std::vector<ArmResult>& arms,
                const std::vector<std::string>& which, bool& failed) {
  json reports = json::object();
  const ArmResult* arm = nullptr;
  for (const auto& a : arms) {
    if (a.link.smooth() && !a.runs.empty()) {
      arm = &a;
      break;
    }
  }
  const PlantModel& plant = config.plant_model();
  const LatentUtility& utility = config.latent_utility();
  const bool quadratic = utility.gradient_available();
  const bool closed_loop = config.variant == Variant::closed_loop;
  const auto& cc = config.controller;
  const auto& vs = config.verify_settings;

  std::optional<ExperimentCertificate> ec;
  std::optional<BoundConstants> constants;
  std::optional<ReducedUtility> reduced;
  std::optional<Box> input_box;
  if (quadratic) reduced.emplace(utility, plant);

  auto certificate = [&]() -> const ExperimentCertificate& {
    if (!ec) ec = experiment_certificate(config);
    return *ec;
  };
  auto inputs = [&]() -> const Box& {
    if (!input_box) input_box = Box::around(collect(arm->runs, true, plant)).inflated(0.1, 1e-3);
    return *input_box;
  };
  auto bound_constants = [&]() -> const BoundConstants& {
    if (!constants) {
      const Box states = Box::around(collect(arm->runs, false, plant)).inflated(0.1, 1e-3);
      const auto ac = estimate_assumption_constants(*reduced, inputs());
      constants = compute_bound_constants(ac, utility.state_lipschitz_on(states), arm->link,
                                          certificate().cert, cc.eta, cc.delta, plant.n_u());
    }
    return *constants;
  };
  auto certificate_json = [&]() {
    const auto& c = certificate();
    json j{{"mu", c.cert.mu},
           {"Q", matrix_to_json(c.cert.Q)},
           {"mu_lower_bound", certificate_mu_lower_bound(plant)},
           {"retuned", c.search.has_value() && c.search->best.mu == c.cert.mu}};
    if (c.search) j["search_candidates"] = c.search->candidates;
    return j;
  };

  for (const auto& lemma : which) {
    std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL +
                        std::hash<std::string>{}(lemma));
    json rep;
    if (lemma == "5") {
      rep = fuzz_sequence_lemma(vs.lemma5_instances, rng).to_json();
    } else if (!arm) {
      rep = skipped(lemma, "no arm with a smooth link");
    } else if (lemma == "1") {
      if (!closed_loop) {
        rep = skipped(lemma, "Lyapunov values are only logged for the closed-loop variant");
      } else {
        rep = verify_lemma1(arm->runs, certificate().cert, cc.eta, cc.delta).to_json();
        rep["certificate"] = certificate_json();
      }
    } else if (!quadratic) {
      rep = skipped(lemma, "needs a quadratic utility with a known optimum");
    } else if (lemma == "2") {
      rep = verify_lemma2(*reduced, arm->link, inputs(), vs.lemma2_samples, rng).to_json();
    } else if (lemma == "3") {
      std::vector<Vector> refs;
      std::uniform_real_distribution<double> unif;
      for (std::size_t i = 0; i < vs.lemma3_candidates; ++i) {
        Vector u(inputs().lower.size());
        for (Eigen::Index d = 0; d < u.size(); ++d) {
          u(d) = inputs().lower(d) + unif(rng) * (inputs().upper(d) - inputs().lower(d));
        }
        refs.push_back(u);
      }
      rep = verify_lemma3(*reduced, arm->link, refs, rng).to_json();
    } else if (lemma == "4") {
      if (!closed_loop) {
        rep = skipped(lemma, "defined for the closed-loop variant");
      } else {
        rep = verify_lemma4(arm->runs.front(), plant, *reduced, arm->link, bound_constants(),
                            certificate().cert, vs.lemma4_inner_samples, rng)
                  .to_json();
        rep["certificate"] = certificate_json();
      }
    } else if (lemma == "theorem1") {
      if (!closed_loop) {
        rep = skipped(lemma, "defined for the closed-loop variant");
      } else {
        const auto v0 = ensemble_stats(arm->runs, Metric::lyapunov).mean.front();
        rep = verify_theorem1(arm->runs, bound_constants(), v0, vs.k_prime).to_json();
        rep["constants"] = bound_constants().to_json();
        rep["certificate"] = certificate_json();
      }
    } else {
      throw ConfigError("unknown check '" + lemma + "'");
    }
    rep["arm"] = arm ? arm->label : "";
    if (rep.value("status", "") == "fail") failed = true;
    reports[lemma] = rep;
  }
  return reports;
}

void write_result(const ExperimentResult& result, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "config.json");
    out << result.config.to_json().dump(2) << '\n';
  }
  for (const auto& arm : result.arms) {
    const fs::path arm_dir = dir / arm.label;
    fs::create_directories(arm_dir);
    for (std::size_t r = 0; r < arm.runs.size(); ++r) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "replica_%03zu", r);
      save_trajectory(arm.runs[r], (arm_dir / stem).string());
    }
    for (const auto& st : arm.stats) {
      std::ofstream out(arm_dir / ("ensemble_" + to_string(st.metric) + ".csv"));
      write_ensemble_csv(st, out);
    }
  }
  if (!result.reports.empty()) {
    fs::create_directories(dir / "reports");
    for (const auto& [name, rep] : result.reports.items()) {
      std::ofstream out(dir / "reports" / ("lemma_" + name + ".json"));
      out << rep.dump(2) << '\n';
    }
  }
  std::ofstream out(dir / "manifest.json");
  out << result.manifest.dump(2) << '\n';
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult result;
  result.config = config;

  const PlantModel& plant = config.plant_model();
  const auto n = static_cast<Eigen::Index>(plant.n_x());
  // The logged Lyapunov column uses the certificate the checks will use.
  const LyapunovCertificate cert =
      config.variant == Variant::closed_loop
          ? experiment_certificate(config).cert
          : compute_lyapunov_certificate(plant, Matrix::Identity(n, n), lipschitz_constant_of_h(plant));

  const std::size_t arms = config.oracles.size();
  const std::size_t tasks = arms * config.replicas;
  std::vector<TrajectoryRecord> records(tasks);
  std::vector<std::string> task_errors(tasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks; t = next++) {
      const std::size_t arm = t / config.replicas;
      const std::size_t r = t % config.replicas;
      try {
        records[t] = run_replica(config, config.oracles[arm], cert, r);
      } catch (const std::exception& e) {
        task_errors[t] = e.what();
      }
    }
  };
  std::size_t threads = options.threads ? options.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, tasks);
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (std::size_t a = 0; a < arms; ++a) {
    ArmResult arm{config.oracles[a].label, config.oracles[a].link, {}, {}};
    for (std::size_t r = 0; r < config.replicas; ++r) {
      const std::size_t t = a * config.replicas + r;
      if (!task_errors[t].empty() && !result.aborted) {
        result.aborted = true;
        result.error = arm.label + " replica " + std::to_string(r) + ": " + task_errors[t];
      }
      if (records[t].meta.error && !result.aborted) {
        result.aborted = true;
        result.error = arm.label + " replica " + std::to_string(r) + ": " + *records[t].meta.error;
      }
      arm.runs.push_back(std::move(records[t]));
    }
    result.arms.push_back(std::move(arm));
  }

  if (!result.aborted) {
    for (auto& arm : result.arms) {
      for (Metric m : config.metrics) {
        arm.stats.push_back(ensemble_stats(arm.runs, m, &config.latent_utility()));
      }
    }
    if (options.verify && !config.verify.empty()) {
      result.reports = run_checks(config, result.arms, config.verify, result.checks_failed);
    }
  }

  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json arm_labels = json::array();
  for (const auto& a : result.arms) arm_labels.push_back(a.label);
  json statuses = json::object();
  for (const auto& [name, rep] : result.reports.items()) statuses[name] = rep.value("status", "");
  result.manifest = json{{"version", PREFOPT_GIT_DESCRIBE},
                         {"config_hash", hex64(config.hash())},
                         {"name", config.name},
                         {"replicas", config.replicas},
                         {"seed", config.seed},
                         {"arms", arm_labels},
                         {"wall_time_seconds", result.wall_seconds},
                         {"aborted", result.aborted},
                         {"checks", statuses}};
  if (result.aborted) result.manifest["error"] = result.error;
  if (options.out_dir) write_result(result, *options.out_dir);
  return result;
}

ExperimentResult load_result(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("result directory '" + dir.string() + "' not found");
  ExperimentResult result;
  result.config = load_experiment_config(dir / "config.json");
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw ConfigError("result directory '" + dir.string() + "' has no manifest.json");
    result.manifest = json::parse(in);
  }
  const std::uint64_t hash = result.config.hash();
  if (result.manifest.value("config_hash", std::string()) != hex64(hash)) {
    throw ConfigError("manifest hash does not match config.json in '" + dir.string() + "'");
  }
  result.aborted = result.manifest.value("aborted", false);
  for (const auto& spec : result.config.oracles) {
    ArmResult arm{spec.label, spec.link, {}, {}};
    const fs::path arm_dir = dir / spec.label;
    if (fs::is_directory(arm_dir)) {
      std::vector<std::string> stems;
      for (const auto& entry : fs::directory_iterator(arm_dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("replica_", 0) == 0 && entry.path().extension() == ".json") {
          stems.push_back((arm_dir / entry.path().stem()).string());
        }
      }
      std::sort(stems.begin(), stems.end());
      for (const auto& s : stems) arm.runs.push_back(load_trajectory(s));
    }
    result.arms.push_back(std::move(arm));
  }
  return result;
}

}  // namespace prefopt
