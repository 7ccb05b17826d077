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

#include "prefopt/cli.hpp"

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "prefopt/harness.hpp"
#include "prefopt/server.hpp"

namespace prefopt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

ExperimentConfig resolve_target(const std::string& target) {
  if (fs::is_regular_file(target)) return load_experiment_config(target);
  return builtin_config(target);
}

void print_reports(const json& reports, std::ostream& out) {
  for (const auto& [name, rep] : reports.items()) {
    out << "  check " << std::left << std::setw(9) << name << rep.value("status", "?");
    if (rep.contains("max_ratio")) out << "  max ratio " << rep["max_ratio"].get<double>();
    if (rep.contains("violations")) out << "  violations " << rep["violations"].get<std::size_t>();
    if (rep.contains("reason")) out << "  (" << rep["reason"].get<std::string>() << ")";
    if (rep.contains("certificate") && rep["certificate"].contains("mu")) {
      out << "  mu " << rep["certificate"]["mu"].get<double>() << " (>= "
          << rep["certificate"]["mu_lower_bound"].get<double>() << " for any certificate)";
    }
    out << '\n';
  }
}

int cmd_run(const std::string& target, std::optional<std::uint64_t> seed,
            std::optional<std::size_t> replicas, std::optional<std::size_t> horizon,
            std::string out_dir, std::size_t threads, bool no_verify, std::ostream& out) {
  ExperimentConfig cfg = resolve_target(target);
  if (seed) cfg.seed = *seed;
  if (replicas) cfg.replicas = *replicas;
  if (horizon) cfg.controller.horizon = *horizon;
  cfg.validate();
  if (out_dir.empty()) out_dir = (fs::path("results") / cfg.name).string();
  RunOptions opts;
  opts.out_dir = out_dir;
  opts.threads = threads;
  opts.verify = !no_verify;
  const ExperimentResult res = run_experiment(cfg, opts);
  out << cfg.name << ": " << cfg.replicas << " replicas x " << cfg.controller.horizon
      << " steps, " << res.arms.size() << " arm(s), " << std::fixed << std::setprecision(2)
      << res.wall_seconds << " s -> " << out_dir << '\n';
  out << std::defaultfloat << std::setprecision(6);
  for (const auto& arm : res.arms) {
    for (const auto& st : arm.stats) {
      out << "  " << std::left << std::setw(9) << arm.label << ' ' << std::setw(20)
          << to_string(st.metric) << " final mean " << st.mean.back() << "  std "
          << st.std.back() << '\n';
    }
  }
  print_reports(res.reports, out);
  if (res.aborted) {
    out << "aborted: " << res.error << " (partial results kept)\n";
    return 1;
  }
  return res.checks_failed ? 1 : 0;
}

int cmd_verify(const std::string& dir, const std::string& lemma, std::ostream& out) {
  ExperimentResult res = load_result(dir);
  std::vector<std::string> which;
  if (lemma.empty()) {
    which = res.config.verify;
    if (which.empty()) which = {"1", "2", "3", "4", "5", "theorem1"};
  } else if (lemma == "all") {
    which = {"1", "2", "3", "4", "5", "theorem1"};
  } else {
    which = {lemma};
  }
  bool failed = false;
  const json reports = run_checks(res.config, res.arms, which, failed);
  fs::create_directories(fs::path(dir) / "reports");
  for (const auto& [name, rep] : reports.items()) {
    std::ofstream f(fs::path(dir) / "reports" / ("lemma_" + name + ".json"));
    f << rep.dump(2) << '\n';
  }
  out << "verify " << dir << '\n';
  print_reports(reports, out);
  return failed ? 1 : 0;
}

int cmd_serve(const std::string& address, std::uint16_t port, std::size_t capacity,
              const std::string& export_dir, const std::string& token, std::ostream& out) {
  std::optional<fs::path> exports;
  if (!export_dir.empty()) exports = export_dir;
  auto sessions = std::make_shared<SessionManager>(capacity, exports);
  Server server(sessions, ServerOptions{address, port, token});
  server.start();
  out << "listening on http://" << address << ':' << server.port() << '\n' << std::flush;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  out << "stopped\n";
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"prefopt: preference-based online feedback optimization"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicas;
  std::optional<std::size_t> horizon;
  std::string out_dir;
  std::size_t threads = 0;
  bool no_verify = false;
  std::string target;
  auto* run = app.add_subcommand("run", "Run an experiment from a config file or builtin name");
  run->add_option("target", target, "Config file or builtin name")->required();
  run->add_option("--seed", seed, "Base seed (replica r uses seed + r)");
  run->add_option("--replicas", replicas, "Number of replicas");
  run->add_option("--horizon", horizon, "Override the horizon T");
  run->add_option("--out", out_dir, "Output directory (default results/<name>)");
  run->add_option("--threads", threads, "Worker threads (default: all cores)");
  run->add_flag("--no-verify", no_verify, "Skip the configured checks");

  std::string dir;
  std::string lemma;
  auto* verify = app.add_subcommand("verify", "Run checks on a result directory");
  verify->add_option("dir", dir, "Result directory written by run")->required();
  verify->add_option("--lemma", lemma, "1, 2, 3, 4, 5, theorem1 or all")
      ->check(CLI::IsMember({"1", "2", "3", "4", "5", "theorem1", "all"}));

  std::string address = "127.0.0.1";
  std::uint16_t port = 8080;
  std::size_t capacity = 64;
  std::string export_dir;
  std::string token;
  auto* serve = app.add_subcommand("serve", "Serve live preference sessions over HTTP");
  serve->add_option("--port", port, "TCP port (0 picks a free one)");
  serve->add_option("--address", address, "Bind address");
  serve->add_option("--capacity", capacity, "Maximum concurrent unfinished sessions");
  serve->add_option("--export-dir", export_dir, "Write finished sessions here as CSV");
  serve->add_option("--token", token, "Require this bearer token");

  auto* list = app.add_subcommand("list-builtins", "List builtin experiment names");

  std::string builtin;
  std::string plant_out;
  auto* export_plant = app.add_subcommand("export-plant", "Write a builtin's plant as JSON");
  export_plant->add_option("builtin", builtin, "Builtin name")->required();
  export_plant->add_option("--out", plant_out, "Output file (default stdout)");

  std::string show_target;
  auto* show = app.add_subcommand("show-config", "Print the resolved config as JSON");
  show->add_option("target", show_target, "Config file or builtin name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(target, seed, replicas, horizon, out_dir, threads, no_verify, out);
    if (*verify) return cmd_verify(dir, lemma, out);
    if (*serve) return cmd_serve(address, port, capacity, export_dir, token, out);
    if (*list) {
      for (const auto& n : builtin_names()) out << n << '\n';
      return 0;
    }
    if (*export_plant) {
      const ExperimentConfig cfg = builtin_config(builtin);
      const std::string text = plant_to_json(cfg.plant_model(), cfg.plant->Q).dump(2);
      if (plant_out.empty()) {
        out << text << '\n';
      } else {
        std::ofstream f(plant_out);
        f << text << '\n';
      }
      return 0;
    }
    if (*show) {
      out << resolve_target(show_target).to_json().dump(2) << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace prefopt
