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

#ifndef PREFOPT_ERRORS_HPP_
#define PREFOPT_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace prefopt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector or matrix shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A plant violates the spectral-radius < 1 requirement.
class StabilityError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent configuration (files, builtins, CLI overrides).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Iterative numerical routine failed to converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// Invalid argument to a numerical routine (NaN, out-of-range parameter, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace prefopt

#endif  // PREFOPT_ERRORS_HPP_
