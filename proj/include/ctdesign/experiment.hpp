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

#ifndef CTDESIGN_EXPERIMENT_HPP_
#define CTDESIGN_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ctdesign/config.hpp"
#include "ctdesign/design.hpp"
#include "ctdesign/evidence.hpp"
#include "ctdesign/linearised_prior.hpp"
#include "ctdesign/network.hpp"
#include "ctdesign/phantom.hpp"
#include "ctdesign/priors.hpp"
#include "ctdesign/tomo_operator.hpp"

namespace ctdesign {

/// One dataset image with its full candidate sinogram (noise is drawn once for
/// all candidate angles; subsets are slices of it).
struct ImageData {
  int id = 0;
  PhantomSample phantom;
  Eigen::VectorXd sinogram;
  double noise_std = 0.0;
  std::uint64_t noise_seed = 0;
};

/// Seeds derived from the experiment seed.
std::uint64_t phantom_seed(const ExperimentConfig& config, int image_id);
std::uint64_t noise_seed(const ExperimentConfig& config, int image_id);
std::uint64_t design_seed(const ExperimentConfig& config, int image_id);
std::uint64_t baseline_seed(const ExperimentConfig& config, int image_id);
std::uint64_t network_input_seed(const ExperimentConfig& config);
std::uint64_t network_init_seed(const ExperimentConfig& config, int image_id);

ScanGeometry experiment_geometry(const ExperimentConfig& config);
ImageData make_image(const ExperimentConfig& config, const RayTransform& op, int image_id);
/// Measurements of a subset, in subset order, sliced from the full sinogram.
Eigen::VectorXd slice_measurements(const Eigen::VectorXd& sinogram, const AngleSubset& subset, int detector_count);

/// Prior fitted on the pilot scan for one design method.
struct FittedModel {
  std::string method;
  std::shared_ptr<const PriorCovariance> prior;
  NoiseModel noise;
  EvidenceReport report;
  // linearised priors only
  std::shared_ptr<const UNet> network;
  Eigen::VectorXd theta;
  ThetaPrior theta_prior;
  double seconds = 0.0;
};

FittedModel fit_model(const ExperimentConfig& config, const RayTransform& op, const ImageData& image,
                      const std::string& method, std::ostream* log = nullptr);

struct EvaluationRecord {
  int n_angles = 0;
  std::string recon;   // tv | dip
  std::string status;  // ok | skipped | failed
  double psnr = 0.0;   // valid when status == ok
  std::string message;
};

struct RunRecord {
  int image_id = 0;
  std::string method;
  std::string objective;  // eig | ese | none (baselines)
  bool failed = false;
  std::string stage;  // where a failure happened
  std::string error;
  AngleSubset selected;
  std::vector<StepRecord> steps;
  std::vector<double> jitter_trace;
  std::vector<EvaluationRecord> evaluations;
  std::vector<Hyperparameter> hyperparameters;
  std::string prior_family;
  std::uint64_t seed = 0;
  double fit_seconds = 0.0;
};

struct SummaryRow {
  std::string method, objective, recon;
  int n_angles = 0;
  double mean_psnr = 0.0;
  double stderr_psnr = 0.0;
  int n_ok = 0;
  int n_failed = 0;
};

enum class Stage { Data, Fit, Design, Evaluate };

struct ExperimentResult {
  std::vector<RunRecord> runs;
  std::vector<SummaryRow> summary;
  int failures = 0;
};

/// Runs the protocol up to `stage` and writes that stage's artifacts under
/// config.output_dir. Failures of single cells are recorded, never thrown.
ExperimentResult run_experiment(const ExperimentConfig& config, Stage stage = Stage::Evaluate,
                                std::ostream* log = nullptr);

/// Mean and standard error of PSNR over images per (method, objective, recon, n_angles).
std::vector<SummaryRow> summarise(const std::vector<RunRecord>& runs);

void write_psnr_csv(const std::filesystem::path& path, const std::vector<RunRecord>& runs);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows,
                       double data_range = 1.0);
/// Rebuilds summary rows from a psnr CSV written by write_psnr_csv.
std::vector<SummaryRow> summarise_psnr_csv(const std::filesystem::path& path);

/// Per-step per-candidate scores: CSV "step,angle_index,angle_deg,score" with
/// one row per remaining candidate per step, plus an SVG of the first steps
/// when `svg` is given.
void emit_diagnostics(const RunRecord& run, const ScanGeometry& geometry, const std::filesystem::path& csv,
                      const std::optional<std::filesystem::path>& svg = std::nullopt);

}  // namespace ctdesign

#endif  // CTDESIGN_EXPERIMENT_HPP_
