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

#ifndef CTDESIGN_RECON_HPP_
#define CTDESIGN_RECON_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ctdesign/network.hpp"
#include "ctdesign/phantom.hpp"
#include "ctdesign/tomo_operator.hpp"

namespace ctdesign {

/// (lambda, iterations) for every angle count up to `max_angles`.
struct ScheduleEntry {
  int max_angles = 0;
  double tv_strength = 0.0;
  int iterations = 0;
};

using Schedule = std::vector<ScheduleEntry>;

/// First entry whose max_angles covers n; the last entry beyond that.
ScheduleEntry schedule_lookup(const Schedule& schedule, int n_angles);

/// 128 x 128 settings for 5% and 10% noise (TV and DIP reconstruction).
Schedule full_scale_tv_schedule(double noise_pct);
Schedule full_scale_dip_schedule(double noise_pct);
/// 64 x 64 settings tuned on validation phantoms.
Schedule desk_tv_schedule(double noise_pct);
Schedule desk_dip_schedule(double noise_pct);

struct ReconConfig {
  double tv_strength = 1e-2;
  int iterations = 2000;
  double learning_rate = 1e-2;  // Adam step; adapted by the safeguard for TV
  double tv_smoothing = 1e-6;
  std::uint64_t seed = 0;
  int eval_every = 100;  // PSNR tracking cadence for DIP
  double data_range = 1.0;

  void validate() const;  // throws std::invalid_argument
  /// Copy with lambda and iterations taken from a schedule.
  ReconConfig with(const ScheduleEntry& entry) const;
};

struct ReconReport {
  Image reconstruction;            // final iterate (TV) or max-PSNR iterate (DIP with ground truth)
  std::vector<double> objective_trace;
  std::optional<double> psnr;      // of `reconstruction`
  std::vector<int> psnr_iterations;
  std::vector<double> psnr_trace;  // DIP only
  std::optional<double> final_psnr;
  double data_range = 1.0;
};

/// 10 log10(data_range^2 / MSE); +infinity when the images are equal.
double psnr(const Image& x, const Image& truth, double data_range = 1.0);
double psnr(const Eigen::VectorXd& x, const Eigen::VectorXd& truth, double data_range = 1.0);

/// Minimises ||A x - y||^2 + lambda TV_delta(x) from the least-squares scaled
/// adjoint. Adam directions with a monotone safeguard: a step that raises the
/// objective is rejected and halves the step size, an accepted one grows it by 5%.
ReconReport tv_reconstruct(const SparseRows& A, const Eigen::VectorXd& y, int height, int width,
                           const ReconConfig& config, const Image* truth = nullptr);
ReconReport tv_reconstruct(const RayTransform& op, const AngleSubset& subset, const Eigen::VectorXd& y,
                           const ReconConfig& config, const Image* truth = nullptr);

/// Trains a freshly initialised network on the data. With ground truth, PSNR is
/// tracked every eval_every iterations and the maximum-PSNR iterate is reported.
ReconReport dip_reconstruct(const UNet& net, const SparseRows& A, const Eigen::VectorXd& y,
                            const ReconConfig& config, const Image* truth = nullptr);
ReconReport dip_reconstruct(const UNet& net, const RayTransform& op, const AngleSubset& subset,
                            const Eigen::VectorXd& y, const ReconConfig& config, const Image* truth = nullptr);

}  // namespace ctdesign

#endif  // CTDESIGN_RECON_HPP_
