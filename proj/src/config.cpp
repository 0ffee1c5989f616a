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

#include "ctdesign/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ctdesign/errors.hpp"

namespace ctdesign {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& source) {
  ConfigFile cfg;
  cfg.source_ = source;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    if (cfg.values_.count(key)) throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key " + key);
    cfg.values_[key] = value;
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

const std::string* ConfigFile::lookup(const std::string& key) {
  used_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) {
  const std::string* v = lookup(key);
  return v ? *v : fallback;
}

int ConfigFile::get_int(const std::string& key, int fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  int out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size())
    throw ConfigError(source_ + ": " + key + " expects an integer, got '" + *v + "'");
  return out;
}

std::uint64_t ConfigFile::get_u64(const std::string& key, std::uint64_t fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size())
    throw ConfigError(source_ + ": " + key + " expects a non-negative integer, got '" + *v + "'");
  return out;
}

double ConfigFile::get_double(const std::string& key, double fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  try {
    std::size_t pos = 0;
    const double out = std::stod(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("trailing text");
    return out;
  } catch (const std::exception&) {
    throw ConfigError(source_ + ": " + key + " expects a number, got '" + *v + "'");
  }
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  const std::string s = lower(*v);
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  throw ConfigError(source_ + ": " + key + " expects true or false, got '" + *v + "'");
}

std::vector<std::string> ConfigFile::get_list(const std::string& key, const std::vector<std::string>& fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  std::vector<std::string> out;
  std::stringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> ConfigFile::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!used_.count(k)) out.push_back(k);
  return out;
}

bool is_baseline(const std::string& method) { return method == "equidistant" || method == "random"; }

bool is_linearised(const std::string& method) { return method.rfind("lindip-", 0) == 0; }

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (height < 2 || width < 2) fail("image size must be at least 2 x 2");
  if (n_candidates < 1) fail("candidate_angles must be positive");
  if (detector_count < 1) fail("detector_pixels must be positive");
  try {
    phantom.validate();
    network.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (phantom.height != height || phantom.width != width) fail("phantom size must match the image size");
  if (network.height != height || network.width != width) fail("network size must match the image size");
  if (!(noise_pct >= 0.0) || noise_pct >= 1.0) fail("noise_fraction must lie in [0, 1)");
  if (n_images < 1) fail("images must be positive");
  if (validation_images < 0) fail("validation_images must be >= 0");
  if (pilot_size < 1) fail("pilot_angles must be positive");
  if (steps < 0) fail("design_steps must be >= 0");
  if (pilot_size + steps > n_candidates) fail("pilot_angles + design_steps exceeds candidate_angles");
  if (eval_every < 1 || steps % eval_every != 0) fail("eval_every_angles must divide design_steps");
  if (methods.empty()) fail("methods is empty");
  for (const std::string& m : methods)
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
      fail("unknown method '" + m + "'");
  if (objectives.empty()) fail("objectives is empty");
  if (samples < 1) fail("samples must be positive");
  if (!(jitter.start > 0.0) || jitter.max < jitter.start) fail("jitter fractions must satisfy 0 < start <= max");
  if (dip_fit_iterations < 0 || retrain_iterations < 0) fail("iteration counts must be >= 0");
  if (!(dip_fit_learning_rate > 0.0) || !(tv_learning_rate > 0.0) || !(dip_learning_rate > 0.0))
    fail("learning rates must be positive");
  if (!(dip_fit_tv_strength >= 0.0)) fail("dip_fit_tv_strength must be >= 0");
  if (retrain_every < 1) fail("retrain_every_angles must be positive");
  if (schedule != "desk" && schedule != "full") fail("recon_schedule must be desk or full");
  if (std::abs(noise_pct - 0.05) > 1e-9 && std::abs(noise_pct - 0.10) > 1e-9 && (evaluate_tv || evaluate_dip))
    fail("reconstruction schedules exist for noise_fraction 0.05 and 0.10 only");
  if (dip_eval_every < 1) fail("dip_eval_every_iterations must be positive");
  if (!(data_range > 0.0)) fail("psnr_data_range must be positive");
  if (workers < 1) fail("workers must be positive");
}

std::vector<int> ExperimentConfig::evaluation_points() const {
  std::vector<int> out;
  for (int s = 0; s <= steps; s += eval_every) out.push_back(pilot_size + s);
  return out;
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream o;
  o << std::setprecision(15);
  auto join = [](const auto& items, auto fmt) {
    std::string s;
    for (const auto& it : items) s += (s.empty() ? "" : ", ") + fmt(it);
    return s;
  };
  o << "# geometry\n";
  o << "image_height_px = " << height << "\n";
  o << "image_width_px = " << width << "\n";
  o << "candidate_angles = " << n_candidates << "  # equispaced over [0, 180) deg\n";
  o << "detector_pixels = " << detector_count << "\n";
  o << "\n# data\n";
  o << "phantom_rectangles = " << phantom.n_rects << "\n";
  o << "phantom_orientation_std_deg = " << phantom.orientation_std_deg << "\n";
  o << "phantom_min_side_frac = " << phantom.min_side_frac << "  # of the image side\n";
  o << "phantom_max_side_frac = " << phantom.max_side_frac << "\n";
  o << "phantom_centre_spread_frac = " << phantom.centre_spread_frac << "\n";
  o << "phantom_min_intensity = " << phantom.min_intensity << "\n";
  o << "phantom_max_intensity = " << phantom.max_intensity << "\n";
  o << "noise_fraction = " << noise_pct << "  # noise std / mean |A x|\n";
  o << "images = " << n_images << "\n";
  o << "validation_images = " << validation_images << "\n";
  o << "seed = " << seed << "\n";
  o << "\n# protocol\n";
  o << "pilot_angles = " << pilot_size << "\n";
  o << "design_steps = " << steps << "\n";
  o << "eval_every_angles = " << eval_every << "\n";
  o << "methods = " << join(methods, [](const std::string& m) { return m; }) << "\n";
  o << "objectives = " << join(objectives, [](Objective ob) { return to_string(ob); }) << "\n";
  o << "samples = " << samples << "\n";
  o << "jitter_start_frac = " << jitter.start << "  # of mean diag Sigma_yy\n";
  o << "jitter_max_frac = " << jitter.max << "\n";
  o << "\n# network\n";
  o << "network_scales = " << network.scales << "\n";
  o << "network_channels = " << network.channels << "\n";
  o << "network_skip_channels = " << network.skip_channels << "\n";
  o << "network_input_scale = " << network.input_scale << "\n";
  o << "dip_fit_iterations = " << dip_fit_iterations << "\n";
  o << "dip_fit_learning_rate = " << dip_fit_learning_rate << "\n";
  o << "dip_fit_tv_strength = " << dip_fit_tv_strength << "\n";
  o << "retrain_every_angles = " << retrain_every << "\n";
  o << "retrain_iterations = " << retrain_iterations << "\n";
  o << "retrain_warm_start = " << (retrain_warm_start ? "true" : "false") << "\n";
  o << "\n# reconstruction\n";
  o << "recon_schedule = " << schedule << "\n";
  o << "evaluate_tv = " << (evaluate_tv ? "true" : "false") << "\n";
  o << "evaluate_dip = " << (evaluate_dip ? "true" : "false") << "\n";
  o << "tv_learning_rate = " << tv_learning_rate << "\n";
  o << "dip_learning_rate = " << dip_learning_rate << "\n";
  o << "dip_eval_every_iterations = " << dip_eval_every << "\n";
  o << "psnr_data_range = " << data_range << "\n";
  o << "\n# execution\n";
  o << "workers = " << workers << "\n";
  o << "write_svg = " << (write_svg ? "true" : "false") << "\n";
  o << "output_dir = " << output_dir.string() << "\n";
  return o.str();
}

ExperimentConfig load_experiment_config(ConfigFile& f) {
  ExperimentConfig c;
  c.height = f.get_int("image_height_px", c.height);
  c.width = f.get_int("image_width_px", c.width);
  c.n_candidates = f.get_int("candidate_angles", c.n_candidates);
  c.detector_count = f.get_int("detector_pixels", c.detector_count);
  c.phantom.height = c.height;
  c.phantom.width = c.width;
  c.phantom.n_rects = f.get_int("phantom_rectangles", c.phantom.n_rects);
  c.phantom.orientation_std_deg = f.get_double("phantom_orientation_std_deg", c.phantom.orientation_std_deg);
  c.phantom.min_side_frac = f.get_double("phantom_min_side_frac", c.phantom.min_side_frac);
  c.phantom.max_side_frac = f.get_double("phantom_max_side_frac", c.phantom.max_side_frac);
  c.phantom.centre_spread_frac = f.get_double("phantom_centre_spread_frac", c.phantom.centre_spread_frac);
  c.phantom.min_intensity = f.get_double("phantom_min_intensity", c.phantom.min_intensity);
  c.phantom.max_intensity = f.get_double("phantom_max_intensity", c.phantom.max_intensity);
  c.noise_pct = f.get_double("noise_fraction", c.noise_pct);
  c.n_images = f.get_int("images", c.n_images);
  c.validation_images = f.get_int("validation_images", c.validation_images);
  c.seed = f.get_u64("seed", c.seed);
  c.pilot_size = f.get_int("pilot_angles", c.pilot_size);
  c.steps = f.get_int("design_steps", c.steps);
  c.eval_every = f.get_int("eval_every_angles", c.eval_every);
  c.methods = f.get_list("methods", c.methods);
  std::vector<std::string> obj_names;
  for (Objective o : c.objectives) obj_names.push_back(to_string(o));
  obj_names = f.get_list("objectives", obj_names);
  c.objectives.clear();
  for (const std::string& n : obj_names) {
    try {
      c.objectives.push_back(parse_objective(n));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  c.samples = f.get_int("samples", c.samples);
  c.jitter.start = f.get_double("jitter_start_frac", c.jitter.start);
  c.jitter.max = f.get_double("jitter_max_frac", c.jitter.max);
  c.network.height = c.height;
  c.network.width = c.width;
  c.network.scales = f.get_int("network_scales", c.network.scales);
  c.network.channels = f.get_int("network_channels", c.network.channels);
  c.network.skip_channels = f.get_int("network_skip_channels", c.network.skip_channels);
  c.network.input_scale = f.get_double("network_input_scale", c.network.input_scale);
  c.dip_fit_iterations = f.get_int("dip_fit_iterations", c.dip_fit_iterations);
  c.dip_fit_learning_rate = f.get_double("dip_fit_learning_rate", c.dip_fit_learning_rate);
  c.dip_fit_tv_strength = f.get_double("dip_fit_tv_strength", c.dip_fit_tv_strength);
  c.retrain_every = f.get_int("retrain_every_angles", c.retrain_every);
  c.retrain_iterations = f.get_int("retrain_iterations", c.retrain_iterations);
  c.retrain_warm_start = f.get_bool("retrain_warm_start", c.retrain_warm_start);
  c.schedule = f.get_string("recon_schedule", c.schedule);
  c.evaluate_tv = f.get_bool("evaluate_tv", c.evaluate_tv);
  c.evaluate_dip = f.get_bool("evaluate_dip", c.evaluate_dip);
  c.tv_learning_rate = f.get_double("tv_learning_rate", c.tv_learning_rate);
  c.dip_learning_rate = f.get_double("dip_learning_rate", c.dip_learning_rate);
  c.dip_eval_every = f.get_int("dip_eval_every_iterations", c.dip_eval_every);
  c.data_range = f.get_double("psnr_data_range", c.data_range);
  c.workers = f.get_int("workers", c.workers);
  c.write_svg = f.get_bool("write_svg", c.write_svg);
  c.output_dir = f.get_string("output_dir", c.output_dir.string());
  const std::vector<std::string> unknown = f.unused_keys();
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const std::string& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  ConfigFile f = ConfigFile::load(path);
  return load_experiment_config(f);
}

}  // namespace ctdesign
