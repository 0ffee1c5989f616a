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

// ctdesign: command-line front end of the experiment harness.
//
//   ctdesign gen-data CONFIG      phantoms and full candidate sinograms
//   ctdesign fit CONFIG           pilot-scan hyperparameters (and pilot networks)
//   ctdesign design CONFIG        greedy designs for every method x objective cell
//   ctdesign evaluate CONFIG      designs plus reconstructions, psnr.csv and summary.csv
//   ctdesign reconstruct CONFIG   one reconstruction of one image from a given angle list
//   ctdesign report PSNR_CSV      summary table from a psnr.csv
//
// Exit codes: 0 success, 1 configuration error, 2 run finished with recorded failures.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ctdesign/errors.hpp"
#include "ctdesign/experiment.hpp"
#include "ctdesign/raw_io.hpp"
#include "ctdesign/recon.hpp"

using namespace ctdesign;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> method;
  std::optional<std::string> objective;
  std::optional<double> noise;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("config", o.config, "Configuration file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Experiment seed");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--method", o.method, "Comma-separated method list");
  cmd->add_option("--objective", o.objective, "Comma-separated objective list (eig, ese)");
  cmd->add_option("--noise", o.noise, "Relative noise level, e.g. 0.05");
}

ExperimentConfig resolve(const Overrides& o) {
  ConfigFile file = ConfigFile::load(o.config);
  if (o.seed) file.set("seed", std::to_string(*o.seed));
  if (o.out) file.set("output_dir", *o.out);
  if (o.method) file.set("methods", *o.method);
  if (o.objective) file.set("objectives", *o.objective);
  if (o.noise) {
    std::ostringstream s;
    s << std::setprecision(17) << *o.noise;
    file.set("noise_fraction", s.str());
  }
  return load_experiment_config(file);
}

void print_summary(const std::vector<SummaryRow>& rows) {
  std::cout << std::left << std::setw(24) << "method" << std::setw(6) << "obj" << std::setw(5) << "rec" << std::right
            << std::setw(7) << "angles" << std::setw(11) << "mean_dB" << std::setw(9) << "stderr" << std::setw(5)
            << "ok" << std::setw(7) << "failed" << "\n";
  for (const SummaryRow& r : rows)
    std::cout << std::left << std::setw(24) << r.method << std::setw(6) << r.objective << std::setw(5) << r.recon
              << std::right << std::setw(7) << r.n_angles << std::fixed << std::setprecision(3) << std::setw(11)
              << r.mean_psnr << std::setw(9) << r.stderr_psnr << std::setw(5) << r.n_ok << std::setw(7) << r.n_failed
              << "\n";
  std::cout.unsetf(std::ios::fixed);
}

std::vector<int> parse_angles(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

// Angle indices from a selected/*.csv file (second column).
std::vector<int> read_selected(const std::string& path, int limit) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<int> out;
  while (std::getline(in, line) && (limit <= 0 || static_cast<int>(out.size()) < limit)) {
    std::stringstream ss(line);
    std::string step, angle;
    std::getline(ss, step, ',');
    std::getline(ss, angle, ',');
    if (!angle.empty()) out.push_back(std::stoi(angle));
  }
  return out;
}

int run_stage(const Overrides& o, Stage stage) {
  const ExperimentConfig config = resolve(o);
  const ExperimentResult r = run_experiment(config, stage, &std::cerr);
  if (stage == Stage::Evaluate) print_summary(r.summary);
  if (r.failures > 0) {
    std::cerr << r.failures << " failure(s) recorded in " << (config.output_dir / "failures.csv").string() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian angle selection for sparse-angle CT"};
  app.require_subcommand(1);

  Overrides o;
  CLI::App* gen = app.add_subcommand("gen-data", "Write phantoms and candidate sinograms");
  CLI::App* fit = app.add_subcommand("fit", "Fit prior hyperparameters on the pilot scan");
  CLI::App* design = app.add_subcommand("design", "Run greedy designs");
  CLI::App* evaluate = app.add_subcommand("evaluate", "Run designs and reconstructions, write PSNR tables");
  CLI::App* recon = app.add_subcommand("reconstruct", "Reconstruct one image from an angle list");
  for (CLI::App* c : {gen, fit, design, evaluate, recon}) add_common(c, o);

  int image_id = 0;
  std::string angles, selected, recon_kind = "tv", recon_out;
  int n_angles = 0;
  recon->add_option("--image", image_id, "Image index");
  auto* angles_opt = recon->add_option("--angles", angles, "Comma-separated candidate indices");
  recon->add_option("--selected", selected, "selected/*.csv file to read the angles from")->excludes(angles_opt);
  recon->add_option("--n-angles", n_angles, "Use only the first n angles of --selected");
  recon->add_option("--recon", recon_kind, "tv or dip")->check(CLI::IsMember({"tv", "dip"}));
  recon->add_option("--image-out", recon_out, "Write the reconstruction as a raw image");

  std::string psnr_csv, summary_out;
  double report_range = 1.0;
  CLI::App* report = app.add_subcommand("report", "Summarise a psnr.csv");
  report->add_option("psnr_csv", psnr_csv, "psnr.csv written by evaluate")->required()->check(CLI::ExistingFile);
  report->add_option("--summary-out", summary_out, "Write the summary CSV here");
  report->add_option("--data-range", report_range, "PSNR data range recorded in the summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return run_stage(o, Stage::Data);
    if (*fit) return run_stage(o, Stage::Fit);
    if (*design) return run_stage(o, Stage::Design);
    if (*evaluate) return run_stage(o, Stage::Evaluate);
    if (*report) {
      const auto rows = summarise_psnr_csv(psnr_csv);
      print_summary(rows);
      if (!summary_out.empty()) write_summary_csv(summary_out, rows, report_range);
      return 0;
    }
    // reconstruct
    const ExperimentConfig config = resolve(o);
    const RayTransform op(experiment_geometry(config));
    std::vector<int> idx = selected.empty() ? parse_angles(angles) : read_selected(selected, n_angles);
    if (idx.empty()) throw ConfigError("reconstruct: no angles given (use --angles or --selected)");
    for (int a : idx)
      if (a < 0 || a >= config.n_candidates) throw ConfigError("reconstruct: angle index out of range");
    const AngleSubset subset(idx, config.n_candidates);
    const ImageData image = make_image(config, op, image_id);
    const Eigen::VectorXd y = slice_measurements(image.sinogram, subset, config.detector_count);
    const bool full = config.schedule == "full";
    ReconConfig rc;
    rc.data_range = config.data_range;
    ReconReport rep;
    if (recon_kind == "tv") {
      rc.learning_rate = config.tv_learning_rate;
      rc = rc.with(schedule_lookup(full ? full_scale_tv_schedule(config.noise_pct) : desk_tv_schedule(config.noise_pct),
                                   subset.size()));
      rep = tv_reconstruct(op, subset, y, rc, &image.phantom.image);
    } else {
      rc.learning_rate = config.dip_learning_rate;
      rc.eval_every = config.dip_eval_every;
      rc.seed = network_init_seed(config, image_id);
      rc = rc.with(schedule_lookup(full ? full_scale_dip_schedule(config.noise_pct) : desk_dip_schedule(config.noise_pct),
                                   subset.size()));
      NetworkSpec spec = config.network;
      spec.input_seed = network_input_seed(config);
      rep = dip_reconstruct(UNet(spec), op, subset, y, rc, &image.phantom.image);
    }
    std::cout << "image " << image_id << ", " << subset.size() << " angles, " << recon_kind << ": PSNR "
              << std::setprecision(6) << *rep.psnr << " dB\n";
    if (!recon_out.empty()) {
      KeyValues h;
      h["psnr_db"] = std::to_string(*rep.psnr);
      h["recon"] = recon_kind;
      write_image(recon_out, rep.reconstruction, h);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
