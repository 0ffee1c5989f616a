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

#ifndef CTDESIGN_CONFIG_HPP_
#define CTDESIGN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ctdesign/design.hpp"
#include "ctdesign/network.hpp"
#include "ctdesign/phantom.hpp"

namespace ctdesign {

/// Flat "key = value" file. '#' starts a comment; keys are unique. Typed
/// getters throw ConfigError naming the key and the offending text.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text, const std::string& source = "<string>");
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback);
  int get_int(const std::string& key, int fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  double get_double(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback);

  /// Keys present in the file that no getter asked for.
  std::vector<std::string> unused_keys() const;

 private:
  const std::string* lookup(const std::string& key);

  std::string source_;
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

/// Design methods understood by the harness.
inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m = {"isotropic",    "matern",      "lindip-block", "lindip-gprior",
                                             "lindip-gprior-retrain", "equidistant", "random"};
  return m;
}
bool is_baseline(const std::string& method);
bool is_linearised(const std::string& method);

struct ExperimentConfig {
  // geometry
  int height = 64;
  int width = 64;
  int n_candidates = 100;
  int detector_count = 93;
  // data
  PhantomSpec phantom;
  double noise_pct = 0.05;
  int n_images = 10;
  int validation_images = 10;
  std::uint64_t seed = 0;
  // protocol
  int pilot_size = 5;
  int steps = 15;
  int eval_every = 5;
  std::vector<std::string> methods = {"isotropic", "matern", "lindip-gprior", "equidistant", "random"};
  std::vector<Objective> objectives = {Objective::ESE, Objective::EIG};
  int samples = 1000;
  JitterOptions jitter{};
  // network and linearised priors
  NetworkSpec network;
  int dip_fit_iterations = 3000;
  double dip_fit_learning_rate = 3e-3;
  double dip_fit_tv_strength = 3.0;
  int retrain_every = 5;
  int retrain_iterations = 500;
  bool retrain_warm_start = true;
  // reconstruction
  std::string schedule = "desk";  // desk | full
  bool evaluate_tv = true;
  bool evaluate_dip = false;
  double tv_learning_rate = 1e-2;
  double dip_learning_rate = 3e-3;
  int dip_eval_every = 100;
  double data_range = 1.0;
  // execution
  int workers = 1;
  bool write_svg = true;
  std::filesystem::path output_dir = "runs/desk";

  /// Throws ConfigError on inconsistent values.
  void validate() const;
  /// Angle counts at which reconstructions are evaluated: pilot, pilot + cadence, ..., pilot + steps.
  std::vector<int> evaluation_points() const;
  /// Resolved configuration in the file format, with units.
  std::string to_text() const;
};

/// Reads every known key (absent keys keep their defaults) and rejects
/// unknown keys.
ExperimentConfig load_experiment_config(ConfigFile& file);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace ctdesign

#endif  // CTDESIGN_CONFIG_HPP_
