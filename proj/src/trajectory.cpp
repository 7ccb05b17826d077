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

#include "prefopt/trajectory.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "prefopt/errors.hpp"

namespace prefopt {

std::string format_double(double value) {
  if (std::isnan(value)) return "";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, end);
}

namespace {

double parse_double(const std::string& field, std::size_t line) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("trajectory csv line " + std::to_string(line) + ": bad number '" + field + "'");
  }
  return value;
}

void put_vector(std::ostream& out, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << format_double(v(i));
}

std::vector<double> json_numbers(const nlohmann::json& j) {
  std::vector<double> out;
  for (const auto& v : j) out.push_back(v.get<double>());
  return out;
}

}  // namespace

std::string csv_header(std::size_t n_x, std::size_t n_u) {
  std::ostringstream os;
  os << 'k';
  for (std::size_t i = 0; i < n_x; ++i) os << ",x_" << i;
  for (std::size_t i = 0; i < n_u; ++i) os << ",u_" << i;
  for (std::size_t i = 0; i < n_u; ++i) os << ",v_" << i;
  os << ",feedback,utility,lyapunov,dist_to_opt";
  return os.str();
}

void write_csv_row(const TrajectoryRow& row, std::ostream& out) {
  out << row.k;
  put_vector(out, row.x);
  put_vector(out, row.u);
  put_vector(out, row.v);
  out << ',';
  if (row.feedback) out << *row.feedback;
  out << ',' << format_double(row.utility);
  out << ',';
  if (row.lyapunov) out << format_double(*row.lyapunov);
  out << ',';
  if (row.dist_to_opt) out << format_double(*row.dist_to_opt);
  out << '\n';
}

void write_csv(const TrajectoryRecord& record, std::ostream& out) {
  out << csv_header(record.n_x(), record.n_u()) << '\n';
  for (const auto& row : record.rows) write_csv_row(row, out);
}

TrajectoryRecord read_csv(std::istream& in, std::size_t n_x, std::size_t n_u) {
  TrajectoryRecord record;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("trajectory csv: empty input");
  if (line != csv_header(n_x, n_u)) {
    throw ConfigError("trajectory csv: header does not match n_x = " + std::to_string(n_x) +
                      ", n_u = " + std::to_string(n_u));
  }
  const std::size_t columns = 1 + n_x + 2 * n_u + 4;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != columns) {
      throw ConfigError("trajectory csv line " + std::to_string(line_no) + ": expected " +
                        std::to_string(columns) + " fields, got " + std::to_string(fields.size()));
    }
    TrajectoryRow row;
    std::size_t c = 0;
    row.k = static_cast<std::size_t>(parse_double(fields[c++], line_no));
    auto take = [&](std::size_t n) {
      Vector v(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = parse_double(fields[c++], line_no);
      return v;
    };
    row.x = take(n_x);
    row.u = take(n_u);
    row.v = take(n_u);
    const auto& fb = fields[c++];
    if (!fb.empty()) row.feedback = static_cast<int>(parse_double(fb, line_no));
    const auto& util = fields[c++];
    row.utility = util.empty() ? std::nan("") : parse_double(util, line_no);
    const auto& lyap = fields[c++];
    if (!lyap.empty()) row.lyapunov = parse_double(lyap, line_no);
    const auto& dist = fields[c++];
    if (!dist.empty()) row.dist_to_opt = parse_double(dist, line_no);
    record.rows.push_back(std::move(row));
  }
  return record;
}

nlohmann::json metadata_to_json(const TrajectoryRecord& record) {
  const auto& m = record.meta;
  nlohmann::json j{{"seed", m.seed},
                   {"oracle_seed", m.oracle_seed},
                   {"variant", m.variant},
                   {"plant_id", m.plant_id},
                   {"oracle_id", m.oracle_id},
                   {"config", {{"eta", m.eta}, {"delta", m.delta}, {"T", m.horizon}, {"u0", to_std(m.u0)}}},
                   {"final_u", to_std(m.final_u)},
                   {"rows", record.rows.size()},
                   {"n_x", record.n_x()},
                   {"n_u", record.n_u()},
                   {"safety_box", m.safety_box}};
  auto clamped = nlohmann::json::array();
  for (const auto& row : record.rows) {
    if (row.clamped) clamped.push_back(row.k);
  }
  j["clamped_steps"] = clamped;
  j["error"] = m.error ? nlohmann::json(*m.error) : nlohmann::json(nullptr);
  return j;
}

TrajectoryMetadata metadata_from_json(const nlohmann::json& j) {
  TrajectoryMetadata m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.oracle_seed = j.at("oracle_seed").get<std::uint64_t>();
  m.variant = j.at("variant").get<std::string>();
  m.plant_id = j.at("plant_id").get<std::string>();
  m.oracle_id = j.at("oracle_id").get<std::string>();
  const auto& c = j.at("config");
  m.eta = c.at("eta").get<double>();
  m.delta = c.at("delta").get<double>();
  m.horizon = c.at("T").get<std::size_t>();
  m.u0 = to_vector(json_numbers(c.at("u0")));
  m.final_u = to_vector(json_numbers(j.at("final_u")));
  m.safety_box = j.value("safety_box", false);
  if (j.contains("error") && j.at("error").is_string()) m.error = j.at("error").get<std::string>();
  return m;
}

void save_trajectory(const TrajectoryRecord& record, const std::string& stem) {
  {
    std::ofstream csv(stem + ".csv", std::ios::binary);
    if (!csv) throw Error("cannot write " + stem + ".csv");
    write_csv(record, csv);
  }
  std::ofstream meta(stem + ".json", std::ios::binary);
  if (!meta) throw Error("cannot write " + stem + ".json");
  meta << metadata_to_json(record).dump(2) << '\n';
}

TrajectoryRecord load_trajectory(const std::string& stem) {
  std::ifstream meta_in(stem + ".json");
  if (!meta_in) throw ConfigError("cannot open " + stem + ".json");
  const auto j = nlohmann::json::parse(meta_in);
  std::ifstream csv(stem + ".csv");
  if (!csv) throw ConfigError("cannot open " + stem + ".csv");
  TrajectoryRecord record = read_csv(csv, j.at("n_x").get<std::size_t>(), j.at("n_u").get<std::size_t>());
  record.meta = metadata_from_json(j);
  for (auto k : j.value("clamped_steps", nlohmann::json::array())) {
    const auto idx = k.get<std::size_t>();
    if (idx < record.rows.size()) record.rows[idx].clamped = true;
  }
  // Applied input is not a CSV column; rebuild it from u + delta v.
  for (auto& row : record.rows) row.applied = row.u + record.meta.delta * row.v;
  return record;
}

}  // namespace prefopt
