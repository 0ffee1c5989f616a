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

#ifndef CTDESIGN_EVIDENCE_HPP_
#define CTDESIGN_EVIDENCE_HPP_

#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "ctdesign/priors.hpp"
#include "ctdesign/tomo_operator.hpp"

namespace ctdesign {

struct NoiseModel {
  double variance = 1.0;
};

struct SearchTraceEntry {
  std::vector<double> point;  // log-hyperparameters
  double value = 0.0;
};

/// Closed-form log marginal likelihood of y under y = A x + eps, with the
/// hyperparameters it was evaluated at and, for fits, the optimiser trace.
struct EvidenceReport {
  double log_evidence = 0.0;
  double initial_log_evidence = 0.0;
  std::vector<Hyperparameter> hyperparameters;
  std::vector<SearchTraceEntry> trace;
  int evaluations = 0;

  double value(const std::string& name) const;  // throws if absent
};

/// A Sigma_xx A^T (no noise term), assembled column by column through prior
/// matvecs and symmetrised.
Eigen::MatrixXd measurement_covariance(const PriorCovariance& prior, const SparseRows& A);

/// log N(y; 0, covariance), including -d/2 log(2 pi). Throws NumericalError if
/// the covariance is not positive definite.
double gaussian_log_density(const Eigen::MatrixXd& covariance, const Eigen::VectorXd& y);

EvidenceReport log_evidence(const PriorCovariance& prior, NoiseModel noise, const SparseRows& A,
                            const Eigen::VectorXd& y);
EvidenceReport log_evidence(const PriorCovariance& prior, NoiseModel noise, const RayTransform& op,
                            const AngleSubset& subset, const Eigen::VectorXd& y);

// --- optimiser -----------------------------------------------------------------

struct CoordinateSearchOptions {
  double initial_step = 1.0;
  double min_step = 1e-3;
  int max_evaluations = 4000;
  double lower_bound = -40.0;  // box on every coordinate
  double upper_bound = 40.0;
};

struct CoordinateSearchResult {
  Eigen::VectorXd point;
  double value = 0.0;
  double initial_value = 0.0;  // objective at the first start
  std::vector<SearchTraceEntry> trace;  // accepted points, in order
  int evaluations = 0;
};

/// Multi-start compass search maximising `objective`. From each start, tries
/// +/- step along every coordinate, accepts any improvement, halves the step
/// when a sweep fails, and stops below min_step. Non-finite values count as
/// -infinity. Throws OptimisationError if no start has a finite value.
CoordinateSearchResult coordinate_search(const std::function<double(const Eigen::VectorXd&)>& objective,
                                         const std::vector<Eigen::VectorXd>& starts,
                                         const CoordinateSearchOptions& options = {});

// --- hyperparameter fitting ------------------------------------------------------

enum class PriorFamily { Isotropic, Matern12 };

struct EvidenceFitOptions {
  bool fit_noise = true;
  double noise_variance = 0.0;  // start value, or the pinned value if !fit_noise; <= 0 picks a default
  double prior_variance = 0.0;  // start value; <= 0 picks a default
  std::vector<double> lengthscale_starts = {2.0, 8.0, 32.0};
  CirculantEmbedding::Options embedding{};
  CoordinateSearchOptions search{};
};

struct FittedPrior {
  std::shared_ptr<const PriorCovariance> prior;
  NoiseModel noise;
  EvidenceReport report;
};

/// Maximises the evidence over log(sigma_x^2), log(l) (Matern only) and
/// log(sigma_y^2) (unless pinned). For each lengthscale the unit-variance
/// measurement covariance is eigendecomposed once, so variance moves are cheap.
FittedPrior fit_hyperparameters(PriorFamily family, int height, int width, const SparseRows& A,
                                const Eigen::VectorXd& y, const EvidenceFitOptions& options = {});

}  // namespace ctdesign

#endif  // CTDESIGN_EVIDENCE_HPP_
