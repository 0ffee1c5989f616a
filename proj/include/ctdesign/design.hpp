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

#ifndef CTDESIGN_DESIGN_HPP_
#define CTDESIGN_DESIGN_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ctdesign/evidence.hpp"
#include "ctdesign/priors.hpp"
#include "ctdesign/tomo_operator.hpp"

namespace ctdesign {

enum class Objective { EIG, ESE };
std::string to_string(Objective objective);
Objective parse_objective(const std::string& name);  // "eig" / "ese", case-insensitive

/// Diagonal jitter policy for the measurement covariance factor. The factor is
/// first attempted without jitter; on failure eps starts at `start` times the
/// mean diagonal and doubles up to `max` times the mean diagonal.
struct JitterOptions {
  bool try_unjittered = true;
  double start = 0.01;
  double max = 0.10;
};

/// Posterior bookkeeping for greedy design. `cross` holds A_all Sigma_xx A_B^T
/// for every candidate angle (rows, candidate order) against the chosen angles
/// (columns, chosen order); Sigma_yy is read off its chosen rows. The jitter is
/// treated as extra measurement noise, so every downstream quantity uses
/// noise.variance + jitter.
struct DesignState {
  std::shared_ptr<const PriorCovariance> prior;
  const RayTransform* op = nullptr;  // not owned
  std::shared_ptr<const SparseRows> all_rows;  // all_candidate_rows(*op)
  NoiseModel noise;
  JitterOptions jitter_options;
  AngleSubset chosen;
  Eigen::VectorXd measurements;  // stacked in chosen order
  Eigen::MatrixXd cross;
  Eigen::MatrixXd factor;  // lower triangular, factor factor^T = Sigma_yy + jitter I
  double jitter = 0.0;
  std::vector<double> jitter_trace;  // jitter after init and after every update
  int step = 0;

  int detector_count() const { return op->detector_count(); }
  double effective_noise_variance() const { return noise.variance + jitter; }
  /// Sigma_yy = A_B Sigma_xx A_B^T + sigma_y^2 I (no jitter), chosen order.
  Eigen::MatrixXd measurement_covariance() const;
  /// Rows of `cross` for one candidate angle.
  Eigen::MatrixXd cross_rows(int angle_index) const;
};

/// All candidate angles stacked in index order.
SparseRows all_candidate_rows(const RayTransform& op);

DesignState init_state(std::shared_ptr<const PriorCovariance> prior, NoiseModel noise, const RayTransform& op,
                       const AngleSubset& pilot, const Eigen::VectorXd& pilot_measurements = {},
                       JitterOptions jitter = {});

/// Extends the factor by the new angle's d_p rows and columns (block Cholesky).
/// Falls back to a full refactorisation with larger jitter only if the
/// extension is indefinite.
void update_state(DesignState& state, int angle_index, const Eigen::VectorXd& angle_measurements = {});

/// K posterior pseudo-measurement samples over the unused angles, one per
/// column, laid out as consecutive d_p chunks in ascending angle order.
struct PseudoSampleBatch {
  std::vector<int> angles;
  int detector_count = 0;
  Eigen::MatrixXd samples;
  std::uint64_t seed = 0;

  int sample_count() const { return static_cast<int>(samples.cols()); }
  /// Position of an angle in `angles`; throws if the angle is not in the batch.
  int chunk_of(int angle_index) const;
};

/// Matheron's rule: y_bar = A_bar (x - Sigma_xx A^T Sigma_yy^-1 (eta + A x)),
/// with x from the prior and eta ~ N(0, (sigma_y^2 + jitter) I).
PseudoSampleBatch matheron_samples(const DesignState& state, int count, std::uint64_t seed);

/// K^-1 sum_k y_k y_k^T over one angle's chunk, symmetrised.
Eigen::MatrixXd estimate_block(const PseudoSampleBatch& batch, int angle_index);

/// Exact A_beta Sigma_{x|y} A_beta^T for a candidate angle, from the state.
Eigen::MatrixXd posterior_block(const DesignState& state, int angle_index);

/// logdet(sigma^2 I + block), constant dropped.
double eig_score(const Eigen::MatrixXd& block, double noise_variance);
/// trace(block).
double ese_score(const Eigen::MatrixXd& block);

struct AcquisitionScores {
  Objective objective = Objective::ESE;
  int sample_count = 0;  // 0 for exact blocks
  std::vector<int> angles;
  std::vector<double> values;
};

AcquisitionScores score_batch(const PseudoSampleBatch& batch, Objective objective, double noise_variance);
AcquisitionScores score_exact(const DesignState& state, Objective objective);

/// Argmax; ties go to the lowest angle index.
int select_next(const AcquisitionScores& scores);

// --- design loop -------------------------------------------------------------------

struct DesignRunOptions {
  Objective objective = Objective::ESE;
  int steps = 15;
  int samples = 1000;
  std::uint64_t seed = 0;
  int retrain_every = 0;  // 0 disables prior refreshes
  JitterOptions jitter{};
};

struct StepRecord {
  int step = 0;
  int angle_index = 0;
  double angle_deg = 0.0;
  double score = 0.0;
  AcquisitionScores scores;
  double jitter = 0.0;
  double seconds = 0.0;
  bool refreshed_prior = false;
};

struct DesignResult {
  AngleSubset selected;  // pilot first, then the design in selection order
  std::vector<StepRecord> steps;
  std::vector<double> jitter_trace;
};

/// Returns the measurements of one newly chosen angle.
using MeasurementSource = std::function<Eigen::VectorXd(int angle_index)>;
/// Called after every `retrain_every` steps with the chosen set and its
/// measurements; returns the prior to continue with.
using PriorRefresher = std::function<std::shared_ptr<const PriorCovariance>(const AngleSubset&, const Eigen::VectorXd&)>;

DesignResult run_design(std::shared_ptr<const PriorCovariance> prior, NoiseModel noise, const RayTransform& op,
                        const AngleSubset& pilot, const Eigen::VectorXd& pilot_measurements,
                        const MeasurementSource& source, const DesignRunOptions& options,
                        const PriorRefresher& refresh = {});

/// floor(k n_candidates / n) for k = 0..n-1.
AngleSubset equidistant_design(int n, int n_candidates);
/// First n entries of a seeded uniform permutation.
AngleSubset random_design(int n, int n_candidates, std::uint64_t seed);

}  // namespace ctdesign

#endif  // CTDESIGN_DESIGN_HPP_
