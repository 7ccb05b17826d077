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

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "prefopt/analysis.hpp"
#include "prefopt/cli.hpp"
#include "prefopt/errors.hpp"
#include "prefopt/harness.hpp"

using namespace prefopt;
namespace fs = std::filesystem;

namespace {

Vector vec(std::initializer_list<double> v) { return to_vector(std::vector<double>(v)); }

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "prefopt");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("prefopt_test_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "version": 1,
    "name": "small",
    "plant": {"A": [[0.5, 0], [0, 0.2]], "B": [[1, 0], [0, 1]]},
    "utility": {"kind": "quadratic-tracking", "x_ref": [1, 2]},
    "oracle": "logistic",
    "controller": {"eta": 0.1, "delta": 0.5, "T": 50, "u0": [0, 0]},
    "replicas": 3,
    "seed": 4,
    "metrics": ["relative-error"]
  })");
}

}  // namespace

TEST_CASE("list-builtins prints four names") {
  const auto r = cli({"list-builtins"});
  CHECK(r.code == 0);
  CHECK(r.out == "quadratic-c01\nquadratic-c07\nquadratic-algebraic\nthermal\n");
  CHECK(builtin_configs().size() == 4);
}

TEST_CASE("builtin contents") {
  const auto c01 = builtin_config("quadratic-c01");
  Matrix a(2, 2);
  a << 0.1, 1, 0, 0.1;
  CHECK(c01.plant_model().A() == a);
  CHECK(c01.plant_model().B() == Matrix::Identity(2, 2));
  CHECK(c01.controller.eta == 0.1);
  CHECK(c01.controller.delta == 0.5);
  CHECK(c01.replicas == 20);
  const auto& q = std::get<QuadraticTracking>(c01.latent_utility().params());
  CHECK(q.x_ref == vec({100, 100}));

  // c07 differs from c01 only in c (and the names that carry it).
  auto j01 = c01.to_json(), j07 = builtin_config("quadratic-c07").to_json();
  CHECK(j07["plant"]["A"] == nlohmann::json::parse("[[0.7, 1.0], [0.0, 0.7]]"));
  for (auto* j : {&j01, &j07}) {
    j->erase("name");
    j->erase("verify");
    (*j)["plant"].erase("A");
    (*j)["plant"].erase("id");
  }
  CHECK(j01 == j07);

  const auto alg = builtin_config("quadratic-algebraic");
  CHECK(alg.variant == Variant::algebraic);
  CHECK(alg.plant_model().A() == a);

  const auto th = builtin_config("thermal");
  CHECK(th.plant_model().n_x() == 13);
  CHECK(th.plant_model().n_u() == 1);
  CHECK(th.plant_model().spectral_radius() < 1.0);
  CHECK(th.latent_utility().kind() == UtilityKind::ppd_comfort);
  REQUIRE(th.oracles.size() == 2);
  CHECK(th.oracles[0].link.kind() == LinkKind::logistic);
  CHECK(th.oracles[1].link.kind() == LinkKind::sign);
  for (const auto& c : builtin_configs()) CHECK_NOTHROW(c.validate());
}

TEST_CASE("unknown builtin exits 2 with suggestions") {
  const auto r = cli({"run", "quadratc-c01", "--no-verify"});
  CHECK(r.code == 2);
  CHECK(r.err.find("quadratic-c01") != std::string::npos);
  CHECK(r.err.find("did you mean") != std::string::npos);
  CHECK(cli({"bogus-subcommand"}).code == 2);
}

TEST_CASE("run twice gives byte-identical outputs") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  REQUIRE(cli({"run", "quadratic-c01", "--replicas", "2", "--seed", "7", "--out", a.string(), "--no-verify"}).code == 0);
  REQUIRE(cli({"run", "quadratic-c01", "--replicas", "2", "--seed", "7", "--out", b.string(), "--no-verify"}).code == 0);
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file() || entry.path().filename() == "manifest.json") continue;
    const fs::path rel = fs::relative(entry.path(), a);
    CAPTURE(rel.string());
    CHECK(slurp(entry.path()) == slurp(b / rel));
    ++compared;
  }
  CHECK(compared >= 6);
  CHECK(fs::exists(a / "logistic" / "replica_000.csv"));
  CHECK(fs::exists(a / "logistic" / "ensemble_relative-error.csv"));
  auto ma = nlohmann::json::parse(slurp(a / "manifest.json"));
  auto mb = nlohmann::json::parse(slurp(b / "manifest.json"));
  CHECK(ma["config_hash"] == mb["config_hash"]);
  CHECK(ma["replicas"] == 2);
  CHECK(ma["seed"] == 7);
  CHECK(ma["aborted"] == false);

  const auto loaded = load_result(a);
  CHECK(loaded.arms.front().runs.size() == 2);
  CHECK(loaded.config.replicas == 2);
  CHECK(loaded.config.seed == 7);
  CHECK(hex64(loaded.config.hash()) == ma["config_hash"].get<std::string>());

  SUBCASE("verify --lemma 5 runs the fuzz check") {
    const auto r = cli({"verify", a.string(), "--lemma", "5"});
    CHECK(r.code == 0);
    CHECK(fs::exists(a / "reports" / "lemma_5.json"));
    const auto rep = nlohmann::json::parse(slurp(a / "reports" / "lemma_5.json"));
    CHECK(rep["status"] == "pass");
    CHECK(rep["violations"] == 0);
  }
  SUBCASE("tampered config is detected") {
    std::ofstream(a / "config.json") << small_config().dump();
    CHECK(cli({"verify", a.string(), "--lemma", "5"}).code != 0);
  }
}

TEST_CASE("R = 1 and T = 1 give one row with zero spread") {
  auto config = experiment_config_from_json(small_config(), ".");
  config.replicas = 1;
  config.controller.horizon = 1;
  const auto r = run_experiment(config, RunOptions{std::nullopt, 1, false});
  REQUIRE(r.arms.size() == 1);
  REQUIRE(r.arms[0].runs.size() == 1);
  CHECK(r.arms[0].runs[0].rows.size() == 1);
  REQUIRE(!r.arms[0].stats.empty());
  CHECK(r.arms[0].stats[0].std == std::vector<double>{0.0});
}

TEST_CASE("config files and validation") {
  const fs::path dir = scratch("cfg");
  auto j = small_config();
  std::ofstream(dir / "ok.json") << j.dump();
  const fs::path out = dir / "out";
  const auto r = cli({"run", (dir / "ok.json").string(), "--out", out.string()});
  CHECK(r.code == 0);
  CHECK(fs::exists(out / "logistic" / "replica_002.csv"));
  CHECK(!fs::exists(out / "logistic" / "replica_003.csv"));

  SUBCASE("plant from a separate file") {
    std::ofstream(dir / "plant.json") << j["plant"].dump();
    j["plant"] = "plant.json";
    const auto cfg = experiment_config_from_json(j, dir);
    CHECK(cfg.plant_model().A()(0, 0) == 0.5);
    CHECK(cfg.plant_file.find("plant.json") != std::string::npos);
    j["plant"] = "missing.json";
    CHECK_THROWS_AS(experiment_config_from_json(j, dir), ConfigError);
  }
  SUBCASE("dimension mismatches are rejected before running") {
    for (const char* patch : {
             R"([{"op": "replace", "path": "/controller/u0", "value": [0, 0, 0]}])",
             R"([{"op": "replace", "path": "/utility/x_ref", "value": [1]}])",
             R"([{"op": "replace", "path": "/plant/B", "value": [[1], [0], [0]]}])",
             R"([{"op": "add", "path": "/x0", "value": [1]}])",
             R"([{"op": "replace", "path": "/version", "value": 2}])",
             R"([{"op": "add", "path": "/surprise", "value": 1}])",
             R"([{"op": "replace", "path": "/replicas", "value": 0}])",
             R"([{"op": "replace", "path": "/oracle", "value": "cauchy"}])",
             R"([{"op": "replace", "path": "/metrics", "value": ["bogus"]}])",
         }) {
      CAPTURE(patch);
      const auto bad = j.patch(nlohmann::json::parse(patch));
      std::ofstream(dir / "bad.json") << bad.dump();
      const auto res = cli({"run", (dir / "bad.json").string(), "--out", (dir / "bad_out").string()});
      CHECK(res.code == 2);
      CHECK(!fs::exists(dir / "bad_out" / "manifest.json"));
    }
  }
}

TEST_CASE("export-plant writes a loadable plant") {
  const fs::path dir = scratch("export");
  CHECK(cli({"export-plant", "thermal", "--out", (dir / "t.json").string()}).code == 0);
  const auto def = plant_from_json(nlohmann::json::parse(slurp(dir / "t.json")));
  CHECK(def.model.n_x() == 13);
  CHECK((def.model.A() - thermal_rc_plant().A()).norm() == 0.0);
}

TEST_CASE("quadratic-c01 mean relative error decreases to its floor") {
  auto config = builtin_config("quadratic-c01");
  config.verify.clear();
  config.metrics = {Metric::relative_error};
  const auto r = run_experiment(config, RunOptions{std::nullopt, 1, false});
  const auto& mean = r.arms.front().stats.front().mean;
  CHECK(mean.front() == doctest::Approx(1.0));
  const std::size_t block = 250;
  std::vector<double> blocks;
  for (std::size_t b = 0; b + block <= mean.size(); b += block) {
    double s = 0.0;
    for (std::size_t k = b; k < b + block; ++k) s += mean[k];
    blocks.push_back(s / block);
  }
  const double floor = blocks.back();
  bool at_floor = false;
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    at_floor = at_floor || blocks[i] <= 2.0 * floor;
    CAPTURE(i);
    if (at_floor) {
      CHECK(blocks[i] <= 2.0 * floor);
    } else {
      CHECK(blocks[i] < blocks[i - 1]);
    }
  }
  CHECK(at_floor);
}

TEST_CASE("quadratic-c07 overshoots more and spreads more than quadratic-c01") {
  auto run = [](const std::string& name) {
    auto config = builtin_config(name);
    config.verify.clear();
    config.metrics = {Metric::relative_error};
    return run_experiment(config, RunOptions{std::nullopt, 1, false}).arms.front().stats.front();
  };
  const auto s01 = run("quadratic-c01"), s07 = run("quadratic-c07");
  CHECK(s01.mean.front() == s07.mean.front());
  CHECK(peak_rebound(s07.mean) > peak_rebound(s01.mean));
  CHECK(s07.std.back() > s01.std.back());
}

TEST_CASE("shipped config files reproduce the builtins") {
  const fs::path root = PREFOPT_SOURCE_DIR;
  for (const auto& name : builtin_names()) {
    CAPTURE(name);
    const auto loaded = load_experiment_config(root / "configs" / (name + ".json"));
    const auto builtin = builtin_config(name);
    CHECK(loaded.plant_model().A() == builtin.plant_model().A());
    CHECK(loaded.plant_model().B() == builtin.plant_model().B());
    CHECK(loaded.to_json() == builtin.to_json());
  }
}
