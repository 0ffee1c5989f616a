/*
 * Copyright 2026 The ctdesign Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CTDESIGN_ERRORS_HPP_
#define CTDESIGN_ERRORS_HPP_

#include <stdexcept>
#include <string>
#include <vector>

namespace ctdesign {

/// Raised when a factorisation or transform cannot be completed; the message
/// carries the diagnostics (matrix size, jitter tried, clipped mass, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by iterative procedures (network training, TV reconstruction,
/// evidence optimisation) that diverge. Keeps the objective trace so callers
/// can log it.
class OptimisationError : public std::runtime_error {
 public:
  OptimisationError(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}

  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

/// Bad or inconsistent configuration file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ctdesign

#endif  // CTDESIGN_ERRORS_HPP_
