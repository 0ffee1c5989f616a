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

#include "ctdesign/priors.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace ctdesign {

Eigen::MatrixXd PriorCovariance::apply(const Eigen::MatrixXd& V) const {
  Eigen::MatrixXd out(V.rows(), V.cols());
  for (Eigen::Index k = 0; k < V.cols(); ++k) out.col(k) = apply(Eigen::VectorXd(V.col(k)));
  return out;
}

// --- isotropic ---------------------------------------------------------------

IsotropicPrior::IsotropicPrior(int dimension, double variance)
    : dimension_(dimension), variance_(variance) {
  if (dimension < 1) throw std::invalid_argument("IsotropicPrior: dimension must be positive");
  if (!(variance > 0.0)) throw std::invalid_argument("IsotropicPrior: variance must be positive");
}

std::vector<Hyperparameter> IsotropicPrior::hyperparameters() const {
  return {{"prior_variance", variance_}};
}

Eigen::VectorXd IsotropicPrior::apply(const Eigen::VectorXd& v) const {
  if (v.size() != dimension_) throw std::invalid_argument("IsotropicPrior: length mismatch");
  return variance_ * v;
}

Eigen::MatrixXd IsotropicPrior::apply(const Eigen::MatrixXd& V) const {
  if (V.rows() != dimension_) throw std::invalid_argument("IsotropicPrior: length mismatch");
  return variance_ * V;
}

Eigen::MatrixXd IsotropicPrior::sample(int count, Rng& rng) const {
  return std::sqrt(variance_) * standard_normal(dimension_, count, rng);
}

// --- Matern-1/2 ---------------------------------------------------------------

Matern12Prior::Matern12Prior(int height, int width, double variance, double lengthscale,
                             CirculantEmbedding::Options embedding)
    : height_(height), width_(width), variance_(variance), lengthscale_(lengthscale) {
  if (height < 1 || width < 1) throw std::invalid_argument("Matern12Prior: grid must be non-empty");
  if (!(variance > 0.0)) throw std::invalid_argument("Matern12Prior: variance must be positive");
  if (!(lengthscale > 0.0)) throw std::invalid_argument("Matern12Prior: lengthscale must be positive");
  const double var = variance, ell = lengthscale;
  embedding_ = std::make_unique<CirculantEmbedding>(
      height, width,
      [var, ell](int di, int dj) { return var * std::exp(-std::hypot(di, dj) / ell); },
      embedding);
}

std::vector<Hyperparameter> Matern12Prior::hyperparameters() const {
  return {{"prior_variance", variance_}, {"lengthscale", lengthscale_}};
}

double Matern12Prior::entry(int i, int j, int i2, int j2) const {
  return variance_ * std::exp(-std::hypot(i - i2, j - j2) / lengthscale_);
}

Eigen::VectorXd Matern12Prior::apply(const Eigen::VectorXd& v) const {
  return embedding_->multiply(v);
}

Eigen::MatrixXd Matern12Prior::sample(int count, Rng& rng) const {
  return embedding_->sample(count, rng);
}

// --- dense ----------------------------------------------------------------------

DensePrior::DensePrior(Eigen::MatrixXd covariance) : covariance_(std::move(covariance)) {
  if (covariance_.rows() != covariance_.cols() || covariance_.rows() == 0)
    throw std::invalid_argument("DensePrior: covariance must be square and non-empty");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (covariance_ + covariance_.transpose()));
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  factor_ = eig.eigenvectors() * root.asDiagonal();
}

DensePrior::DensePrior(Eigen::MatrixXd covariance, Eigen::MatrixXd factor, std::string family,
                       std::vector<Hyperparameter> hyperparameters)
    : covariance_(std::move(covariance)),
      factor_(std::move(factor)),
      family_(std::move(family)),
      hyperparameters_(std::move(hyperparameters)) {
  if (covariance_.rows() != covariance_.cols() || covariance_.rows() == 0)
    throw std::invalid_argument("DensePrior: covariance must be square and non-empty");
  if (factor_.rows() != covariance_.rows())
    throw std::invalid_argument("DensePrior: factor has the wrong number of rows");
}

Eigen::VectorXd DensePrior::apply(const Eigen::VectorXd& v) const {
  if (v.size() != covariance_.cols()) throw std::invalid_argument("DensePrior: length mismatch");
  return covariance_ * v;
}

Eigen::MatrixXd DensePrior::apply(const Eigen::MatrixXd& V) const {
  if (V.rows() != covariance_.cols()) throw std::invalid_argument("DensePrior: length mismatch");
  return covariance_ * V;
}

Eigen::MatrixXd DensePrior::sample(int count, Rng& rng) const {
  return factor_ * standard_normal(factor_.cols(), count, rng);
}

// --- free functions -------------------------------------------------------------

Eigen::MatrixXd dense_covariance(const PriorCovariance& prior) {
  const int d = prior.dimension();
  return prior.apply(Eigen::MatrixXd(Eigen::MatrixXd::Identity(d, d)));
}

Eigen::VectorXd isotropic_matvec(const IsotropicPrior& prior, const Eigen::VectorXd& v) {
  return prior.apply(v);
}

double matern_cov_entry(const Matern12Prior& prior, int i, int j, int i2, int j2) {
  return prior.entry(i, j, i2, j2);
}

Eigen::VectorXd matern_matvec(const Matern12Prior& prior, const Eigen::VectorXd& v) {
  return prior.apply(v);
}

Eigen::MatrixXd sample_prior(const PriorCovariance& prior, std::uint64_t seed, int count) {
  if (count < 1) throw std::invalid_argument("sample_prior: count must be >= 1");
  Rng rng(derive_seed(seed, {0x7072696f72ULL}));
  return prior.sample(count, rng);
}

}  // namespace ctdesign
