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

#ifndef PREFOPT_TRAJECTORY_HPP_
#define PREFOPT_TRAJECTORY_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefopt/linalg.hpp"

namespace prefopt {

struct TrajectoryRow {
  std::size_t k = 0;
  Vector x;        // plant state at the start of step k
  Vector u;        // nominal input u_k
  Vector v;        // exploration direction v_k
  Vector applied;  // u_k + delta v_k
  std::optional<int> feedback;
  double utility = 0.0;  // evaluation made at step k; NaN when latent
  std::optional<double> lyapunov;
  std::optional<double> dist_to_opt;
  bool clamped = false;
};

struct TrajectoryMetadata {
  std::uint64_t seed = 0;
  std::uint64_t oracle_seed = 0;
  std::string variant;  // closed-loop | algebraic | ideal-p-descent | session
  std::string plant_id;
  std::string oracle_id;
  double eta = 0.0;
  double delta = 0.0;
  std::size_t horizon = 0;
  Vector u0;
  Vector final_u;
  bool safety_box = false;
  std::optional<std::string> error;  // set when the run stopped early
};

struct TrajectoryRecord {
  TrajectoryMetadata meta;
  std::vector<TrajectoryRow> rows;

  std::size_t n_x() const { return rows.empty() ? 0 : static_cast<std::size_t>(rows.front().x.size()); }
  std::size_t n_u() const { return rows.empty() ? 0 : static_cast<std::size_t>(rows.front().u.size()); }
  bool complete() const { return !meta.error; }
};

// Column order: k, x_0.., u_0.., v_0.., feedback, utility, lyapunov, dist_to_opt.
// Missing values are empty fields; doubles use shortest round-trip form.
std::string csv_header(std::size_t n_x, std::size_t n_u);
void write_csv(const TrajectoryRecord& record, std::ostream& out);
void write_csv_row(const TrajectoryRow& row, std::ostream& out);
TrajectoryRecord read_csv(std::istream& in, std::size_t n_x, std::size_t n_u);

nlohmann::json metadata_to_json(const TrajectoryRecord& record);
TrajectoryMetadata metadata_from_json(const nlohmann::json& j);

// Writes <stem>.csv and the <stem>.json sidecar.
void save_trajectory(const TrajectoryRecord& record, const std::string& stem);
TrajectoryRecord load_trajectory(const std::string& stem);

std::string format_double(double value);

}  // namespace prefopt

#endif  // PREFOPT_TRAJECTORY_HPP_
