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

#ifndef PREFOPT_HARNESS_HPP_
#define PREFOPT_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefopt/analysis.hpp"
#include "prefopt/controller.hpp"
#include "prefopt/plant.hpp"
#include "prefopt/preference.hpp"
#include "prefopt/trajectory.hpp"

namespace prefopt {

struct OracleSpec {
  std::string label;
  LinkFunction link;
};

enum class Variant { closed_loop, algebraic, ideal };
Variant parse_variant(const std::string& name);
std::string to_string(Variant variant);

struct VerifySettings {
  std::size_t k_prime = 500;
  std::size_t lemma2_samples = 10000;
  std::size_t lemma3_candidates = 5;
  std::size_t lemma4_inner_samples = 10000;
  std::size_t lemma5_instances = 10000;
  std::size_t certificate_trials = 2000;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::optional<PlantDefinition> plant;
  std::string plant_file;  // set when the plant came from a file
  std::optional<LatentUtility> utility;
  std::vector<OracleSpec> oracles;
  ControllerConfig controller;
  Variant variant = Variant::closed_loop;
  std::optional<Vector> x0;  // default h(u0)
  std::size_t replicas = 20;
  std::uint64_t seed = 1;
  std::vector<Metric> metrics;
  std::vector<std::string> verify;
  VerifySettings verify_settings;
  std::optional<Box> safety_box;

  const PlantModel& plant_model() const;
  const LatentUtility& latent_utility() const;

  // Checks every cross-dimension before anything runs; throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  // FNV-1a over the canonical JSON dump.
  std::uint64_t hash() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

std::string hex64(std::uint64_t value);

// 13-node resistor-capacitor building surrogate: air plus inner and outer
// nodes of six envelope elements (four walls, roof, floor). States are
// temperatures relative to a constant outdoor temperature; the input is
// heating power in kW on the air node. Exact zero-order-hold discretisation.
struct ThermalRcParameters {
  double c_air = 2e6;    // J/K
  double c_inner = 4e6;  // J/K
  double c_outer = 6e6;  // J/K
  double r_inner = 0.0114;     // air to inner node, K/W
  double r_mid = 0.05;         // inner to outer node, K/W
  double r_outer = 0.0016;     // outer node to outdoor, K/W
  double r_infiltration = 1.0 / 30.0;  // air to outdoor, K/W
  double dt = 900.0;           // s
  double outdoor = 10.0;       // C
};
PlantModel thermal_rc_plant(const ThermalRcParameters& params = {});

std::vector<std::string> builtin_names();
// Throws ConfigError listing close names when `name` is unknown.
ExperimentConfig builtin_config(const std::string& name);
std::vector<ExperimentConfig> builtin_configs();
std::vector<std::string> suggest_builtins(const std::string& name);

struct ArmResult {
  std::string label;
  LinkFunction link;
  std::vector<TrajectoryRecord> runs;
  std::vector<EnsembleStats> stats;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<ArmResult> arms;
  nlohmann::json reports = nlohmann::json::object();
  nlohmann::json manifest = nlohmann::json::object();
  double wall_seconds = 0.0;
  bool aborted = false;
  std::string error;
  bool checks_failed = false;  // any non-vacuous check failed
};

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  std::size_t threads = 0;  // 0: hardware concurrency
  bool verify = true;
};

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Certificate used for the logged Lyapunov column and the checks: Q from the
// plant definition, else the identity, retuned by random search when the
// identity is not contractive and a check needs it.
struct ExperimentCertificate {
  LyapunovCertificate cert;
  std::optional<CertificateSearch> search;
};
ExperimentCertificate experiment_certificate(const ExperimentConfig& config);

// Runs the named checks ("1".."5", "theorem1") on the first arm with a smooth
// link. Sets `failed` when a non-vacuous check fails.
nlohmann::json run_checks(const ExperimentConfig& config, const std::vector<ArmResult>& arms,
                          const std::vector<std::string>& which, bool& failed);

// Reloads config, manifest and replica files written by run_experiment.
ExperimentResult load_result(const std::filesystem::path& dir);

void write_result(const ExperimentResult& result, const std::filesystem::path& dir);

}  // namespace prefopt

#endif  // PREFOPT_HARNESS_HPP_
