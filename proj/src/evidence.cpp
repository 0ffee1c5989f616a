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

#include "ctdesign/evidence.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "ctdesign/errors.hpp"

namespace ctdesign {

double EvidenceReport::value(const std::string& name) const {
  for (const auto& h : hyperparameters)
    if (h.name == name) return h.value;
  throw std::out_of_range("EvidenceReport: no hyperparameter named " + name);
}

Eigen::MatrixXd measurement_covariance(const PriorCovariance& prior, const SparseRows& A) {
  if (A.cols() != prior.dimension())
    throw std::invalid_argument("measurement_covariance: operator/prior dimension mismatch");
  const Eigen::Index dy = A.rows();
  Eigen::MatrixXd cov(dy, dy);
  // Batches of rows keep memory bounded for large d_x.
  constexpr Eigen::Index kBatch = 64;
  for (Eigen::Index r0 = 0; r0 < dy; r0 += kBatch) {
    const Eigen::Index nb = std::min(kBatch, dy - r0);
    Eigen::MatrixXd rows = Eigen::MatrixXd(A.middleRows(r0, nb)).transpose();  // d_x x nb
    cov.middleCols(r0, nb) = A * prior.apply(rows);
  }
  return 0.5 * (cov + cov.transpose());
}

double gaussian_log_density(const Eigen::MatrixXd& covariance, const Eigen::VectorXd& y) {
  if (covariance.rows() != y.size() || covariance.cols() != y.size())
    throw std::invalid_argument("gaussian_log_density: shape mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success)
    throw NumericalError("gaussian_log_density: covariance of size " + std::to_string(y.size()) +
                         " is not positive definite");
  const Eigen::VectorXd alpha = llt.matrixL().solve(y);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (alpha.squaredNorm() + logdet) -
         0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

EvidenceReport log_evidence(const PriorCovariance& prior, NoiseModel noise, const SparseRows& A,
                            const Eigen::VectorXd& y) {
  if (A.rows() != y.size()) throw std::invalid_argument("log_evidence: measurement length mismatch");
  if (!(noise.variance > 0.0)) throw std::invalid_argument("log_evidence: noise variance must be positive");
  Eigen::MatrixXd cov = measurement_covariance(prior, A);
  cov.diagonal().array() += noise.variance;
  EvidenceReport report;
  report.log_evidence = gaussian_log_density(cov, y);
  report.initial_log_evidence = report.log_evidence;
  report.hyperparameters = prior.hyperparameters();
  report.hyperparameters.push_back({"noise_variance", noise.variance});
  report.evaluations = 1;
  if (!std::isfinite(report.log_evidence)) throw NumericalError("log_evidence: non-finite value");
  return report;
}

EvidenceReport log_evidence(const PriorCovariance& prior, NoiseModel noise, const RayTransform& op,
                            const AngleSubset& subset, const Eigen::VectorXd& y) {
  return log_evidence(prior, noise, op.stacked(subset), y);
}

// --- compass search -------------------------------------------------------------

CoordinateSearchResult coordinate_search(const std::function<double(const Eigen::VectorXd&)>& objective,
                                         const std::vector<Eigen::VectorXd>& starts,
                                         const CoordinateSearchOptions& options) {
  if (starts.empty()) throw std::invalid_argument("coordinate_search: no starting points");
  CoordinateSearchResult best;
  best.value = -std::numeric_limits<double>::infinity();
  std::vector<double> values_seen;
  int evaluations = 0;
  auto eval = [&](const Eigen::VectorXd& p) {
    ++evaluations;
    const double v = objective(p);
    values_seen.push_back(v);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  };
  auto record = [&](std::vector<SearchTraceEntry>& trace, const Eigen::VectorXd& p, double v) {
    trace.push_back({std::vector<double>(p.data(), p.data() + p.size()), v});
  };

  bool first = true;
  for (const Eigen::VectorXd& start : starts) {
    Eigen::VectorXd x = start.cwiseMax(options.lower_bound).cwiseMin(options.upper_bound);
    double fx = eval(x);
    if (first) {
      best.initial_value = fx;
      first = false;
    }
    std::vector<SearchTraceEntry> trace;
    record(trace, x, fx);
    double step = options.initial_step;
    while (step >= options.min_step && evaluations < options.max_evaluations) {
      bool improved = false;
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        for (double sign : {+1.0, -1.0}) {
          Eigen::VectorXd trial = x;
          trial[k] = std::clamp(trial[k] + sign * step, options.lower_bound, options.upper_bound);
          if (trial[k] == x[k]) continue;
          const double ft = eval(trial);
          if (ft > fx) {
            x = trial;
            fx = ft;
            improved = true;
            record(trace, x, fx);
            break;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    if (fx > best.value) {
      best.value = fx;
      best.point = x;
    }
    best.trace.insert(best.trace.end(), trace.begin(), trace.end());
  }
  best.evaluations = evaluations;
  if (!std::isfinite(best.value))
    throw OptimisationError("coordinate_search: objective never finite", values_seen);
  return best;
}

// --- hyperparameter fitting ------------------------------------------------------

namespace {

struct Spectrum {
  double lengthscale = 0.0;
  Eigen::VectorXd eigenvalues;  // of A K A^T with unit variance
  Eigen::VectorXd projected_sq;  // (Q^T y)^2
};

Spectrum spectrum_of(const Eigen::MatrixXd& G, const Eigen::VectorXd& y, double lengthscale) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
  if (eig.info() != Eigen::Success) throw NumericalError("fit_hyperparameters: eigendecomposition failed");
  Spectrum s;
  s.lengthscale = lengthscale;
  s.eigenvalues = eig.eigenvalues().cwiseMax(0.0);
  s.projected_sq = (eig.eigenvectors().transpose() * y).array().square();
  return s;
}

double spectral_log_evidence(const Spectrum& s, double prior_var, double noise_var) {
  const Eigen::ArrayXd d = prior_var * s.eigenvalues.array() + noise_var;
  if ((d <= 0.0).any()) return -std::numeric_limits<double>::infinity();
  return -0.5 * ((s.projected_sq.array() / d).sum() + d.log().sum()) -
         0.5 * static_cast<double>(d.size()) * std::log(2.0 * std::numbers::pi);
}

}  // namespace

FittedPrior fit_hyperparameters(PriorFamily family, int height, int width, const SparseRows& A,
                                const Eigen::VectorXd& y, const EvidenceFitOptions& options) {
  if (A.rows() != y.size() || y.size() == 0)
    throw std::invalid_argument("fit_hyperparameters: pilot data length mismatch");
  if (A.cols() != static_cast<Eigen::Index>(height) * width)
    throw std::invalid_argument("fit_hyperparameters: operator does not match image size");
  if (!options.fit_noise && !(options.noise_variance > 0.0))
    throw std::invalid_argument("fit_hyperparameters: pinned noise variance must be positive");

  const bool matern = family == PriorFamily::Matern12;
  const double second_moment = y.squaredNorm() / static_cast<double>(y.size());
  const double row_energy = A.squaredNorm() / static_cast<double>(A.rows());

  // Unit-variance measurement covariances; a small cache since the search
  // mostly moves the variance coordinates.
  std::deque<Spectrum> cache;
  CirculantEmbedding::Options matvec_only = options.embedding;
  matvec_only.max_clipped_fraction = std::numeric_limits<double>::infinity();
  auto spectrum_for = [&](double lengthscale) -> const Spectrum& {
    for (const Spectrum& s : cache)
      if (s.lengthscale == lengthscale) return s;
    Eigen::MatrixXd G;
    if (matern)
      G = measurement_covariance(Matern12Prior(height, width, 1.0, lengthscale, matvec_only), A);
    else
      G = measurement_covariance(IsotropicPrior(height * width, 1.0), A);
    cache.push_front(spectrum_of(G, y, lengthscale));
    if (cache.size() > 6) cache.pop_back();
    return cache.front();
  };

  // Coordinates: [log prior_var, (log lengthscale), (log noise_var)].
  const int n_params = 1 + (matern ? 1 : 0) + (options.fit_noise ? 1 : 0);
  auto unpack = [&](const Eigen::VectorXd& p, double& prior_var, double& ell, double& noise_var) {
    int k = 0;
    prior_var = std::exp(p[k++]);
    ell = matern ? std::exp(p[k++]) : 0.0;
    noise_var = options.fit_noise ? std::exp(p[k++]) : options.noise_variance;
  };
  auto objective = [&](const Eigen::VectorXd& p) {
    double prior_var, ell, noise_var;
    unpack(p, prior_var, ell, noise_var);
    return spectral_log_evidence(spectrum_for(ell), prior_var, noise_var);
  };

  const double noise0 = options.noise_variance > 0.0 ? options.noise_variance : 0.1 * second_moment;
  const double prior0 = options.prior_variance > 0.0
                            ? options.prior_variance
                            : std::max(second_moment - noise0, 0.1 * second_moment) / std::max(row_energy, 1e-300);
  std::vector<Eigen::VectorXd> starts;
  const std::vector<double> ells = matern ? options.lengthscale_starts : std::vector<double>{1.0};
  for (double ell : ells) {
    Eigen::VectorXd p(n_params);
    int k = 0;
    // For correlated priors the per-pixel variance that explains the data is
    // smaller, roughly by the number of correlated pixels a ray crosses.
    p[k++] = std::log(matern ? prior0 / std::max(1.0, ell) : prior0);
    if (matern) p[k++] = std::log(ell);
    if (options.fit_noise) p[k++] = std::log(noise0);
    starts.push_back(p);
  }

  CoordinateSearchResult result = coordinate_search(objective, starts, options.search);

  double prior_var, ell, noise_var;
  unpack(result.point, prior_var, ell, noise_var);
  FittedPrior fitted;
  if (matern)
    fitted.prior = std::make_shared<Matern12Prior>(height, width, prior_var, ell, options.embedding);
  else
    fitted.prior = std::make_shared<IsotropicPrior>(height * width, prior_var);
  fitted.noise.variance = noise_var;
  fitted.report.log_evidence = result.value;
  fitted.report.initial_log_evidence = result.initial_value;
  fitted.report.hyperparameters = fitted.prior->hyperparameters();
  fitted.report.hyperparameters.push_back({"noise_variance", noise_var});
  fitted.report.trace = std::move(result.trace);
  fitted.report.evaluations = result.evaluations;
  return fitted;
}

}  // namespace ctdesign
