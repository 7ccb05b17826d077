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
#include <sstream>

#include "prefopt/errors.hpp"
#include "prefopt/preference.hpp"

namespace prefopt {

namespace {

void require_range(double value, double lo, double hi, const char* field) {
  if (!std::isfinite(value) || value < lo || value > hi) {
    std::ostringstream os;
    os << "PMV environment: " << field << " = " << value << " outside [" << lo << ", " << hi
       << "]";
    throw DomainError(os.str());
  }
}

}  // namespace

void PmvEnvironment::validate() const {
  require_range(met, 0.8, 4.0, "met");
  require_range(clo, 0.0, 2.0, "clo");
  require_range(rh, 0.0, 100.0, "rh");
  require_range(vel, 0.0, 2.0, "vel");
  require_range(wme, 0.0, met, "wme");
  if (tr) require_range(*tr, -50.0, 100.0, "tr");
}

PmvEnvironment pmv_environment_from_json(const nlohmann::json& j) {
  PmvEnvironment env;
  if (j.is_null()) return env;
  if (!j.is_object()) throw ConfigError("env: expected an object");
  auto read = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number()) throw ConfigError(std::string("env.") + key + ": expected a number");
    out = j.at(key).get<double>();
  };
  read("met", env.met);
  read("clo", env.clo);
  read("vel", env.vel);
  read("rh", env.rh);
  read("wme", env.wme);
  if (j.contains("tr") && !j.at("tr").is_null()) {
    if (!j.at("tr").is_number()) throw ConfigError("env.tr: expected a number or null");
    env.tr = j.at("tr").get<double>();
  }
  for (const auto& [key, _] : j.items()) {
    if (key != "met" && key != "clo" && key != "vel" && key != "rh" && key != "tr" && key != "wme") {
      throw ConfigError("env: unknown field '" + key + "'");
    }
  }
  try {
    env.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return env;
}

nlohmann::json to_json(const PmvEnvironment& env) {
  nlohmann::json j{{"met", env.met}, {"clo", env.clo}, {"vel", env.vel}, {"rh", env.rh},
                   {"wme", env.wme}};
  j["tr"] = env.tr ? nlohmann::json(*env.tr) : nlohmann::json(nullptr);
  return j;
}

double pmv(const PmvEnvironment& env, double air_temperature) {
  env.validate();
  if (!std::isfinite(air_temperature) || air_temperature < -50.0 || air_temperature > 100.0) {
    throw DomainError("pmv: air temperature out of range");
  }
  const double ta = air_temperature;
  const double tr = env.tr.value_or(ta);

  const double pa = env.rh * 10.0 * std::exp(16.6536 - 4030.183 / (ta + 235.0));  // [Pa]
  const double icl = 0.155 * env.clo;                                             // [m2K/W]
  const double m = env.met * 58.15;                                               // [W/m2]
  const double w = env.wme * 58.15;
  const double mw = m - w;
  const double fcl = icl <= 0.078 ? 1.0 + 1.29 * icl : 1.05 + 0.645 * icl;
  const double hcf = 12.1 * std::sqrt(env.vel);
  const double taa = ta + 273.0;
  const double tra = tr + 273.0;

  const double p1 = icl * fcl;
  const double p2 = p1 * 3.96;
  const double p3 = p1 * 100.0;
  const double p4 = p1 * taa;
  const double p5 = 308.7 - 0.028 * mw + p2 * std::pow(tra / 100.0, 4);

  // Clothing surface temperature (scaled by 1/100 K), damped fixed point.
  const double tcla = taa + (35.5 - ta) / (3.5 * icl + 0.1);
  double xn = tcla / 100.0;
  double xf = tcla / 50.0;
  double hc = hcf;
  constexpr double kTol = 1e-8;  // 1e-6 K
  int iterations = 0;
  while (std::abs(xn - xf) > kTol) {
    xf = 0.5 * (xf + xn);
    const double hcn = 2.38 * std::pow(std::abs(100.0 * xf - taa), 0.25);
    hc = std::max(hcf, hcn);
    xn = (p5 + p4 * hc - p2 * std::pow(xf, 4)) / (100.0 + p3 * hc);
    if (++iterations > 150) {
      throw ConvergenceError("pmv: clothing temperature iteration did not converge");
    }
  }
  const double tcl = 100.0 * xn - 273.0;

  const double hl1 = 3.05e-3 * (5733.0 - 6.99 * mw - pa);           // skin diffusion
  const double hl2 = mw > 58.15 ? 0.42 * (mw - 58.15) : 0.0;        // sweating
  const double hl3 = 1.7e-5 * m * (5867.0 - pa);                    // latent respiration
  const double hl4 = 0.0014 * m * (34.0 - ta);                      // dry respiration
  const double hl5 = 3.96 * fcl * (std::pow(xn, 4) - std::pow(tra / 100.0, 4));  // radiation
  const double hl6 = fcl * hc * (tcl - ta);                         // convection

  const double ts = 0.303 * std::exp(-0.036 * m) + 0.028;
  return ts * (mw - hl1 - hl2 - hl3 - hl4 - hl5 - hl6);
}

double ppd(double pmv_value) {
  if (!std::isfinite(pmv_value)) throw DomainError("ppd: PMV is not finite");
  const double p2 = pmv_value * pmv_value;
  return 100.0 - 95.0 * std::exp(-(0.03353 * p2 * p2 + 0.2179 * p2));
}

}  // namespace prefopt
