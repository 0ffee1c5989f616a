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

#ifndef CTDESIGN_PRIORS_HPP_
#define CTDESIGN_PRIORS_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ctdesign/circulant_embedding.hpp"
#include "ctdesign/rng.hpp"

namespace ctdesign {

struct Hyperparameter {
  std::string name;
  double value = 0.0;
};

/// Zero-mean Gaussian prior over images, accessed only through matrix-vector
/// products and sampling.
class PriorCovariance {
 public:
  virtual ~PriorCovariance() = default;

  virtual int dimension() const = 0;
  virtual std::string family() const = 0;
  virtual std::vector<Hyperparameter> hyperparameters() const = 0;

  /// Sigma_xx v.
  virtual Eigen::VectorXd apply(const Eigen::VectorXd& v) const = 0;
  /// Column-wise Sigma_xx V.
  virtual Eigen::MatrixXd apply(const Eigen::MatrixXd& V) const;

  /// count draws from N(0, Sigma_xx), one per column.
  virtual Eigen::MatrixXd sample(int count, Rng& rng) const = 0;
};

/// Sigma_xx = variance * I.
class IsotropicPrior final : public PriorCovariance {
 public:
  IsotropicPrior(int dimension, double variance);

  int dimension() const override { return dimension_; }
  std::string family() const override { return "isotropic"; }
  std::vector<Hyperparameter> hyperparameters() const override;
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const override;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& V) const override;
  Eigen::MatrixXd sample(int count, Rng& rng) const override;

  double variance() const { return variance_; }

 private:
  int dimension_;
  double variance_;
};

/// Exponential (Matern-1/2) kernel on pixel indices:
/// k((i,j),(i',j')) = variance * exp(-hypot(i - i', j - j') / lengthscale).
class Matern12Prior final : public PriorCovariance {
 public:
  Matern12Prior(int height, int width, double variance, double lengthscale,
                CirculantEmbedding::Options embedding = {});

  int dimension() const override { return height_ * width_; }
  std::string family() const override { return "matern12"; }
  std::vector<Hyperparameter> hyperparameters() const override;
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const override;
  Eigen::MatrixXd sample(int count, Rng& rng) const override;

  double entry(int i, int j, int i2, int j2) const;
  double variance() const { return variance_; }
  double lengthscale() const { return lengthscale_; }
  int height() const { return height_; }
  int width() const { return width_; }
  const CirculantEmbedding& embedding() const { return *embedding_; }

 private:
  int height_, width_;
  double variance_, lengthscale_;
  std::unique_ptr<CirculantEmbedding> embedding_;
};

/// Explicit covariance matrix. Used for small toy problems and test harnesses
/// (including the all-zero prior).
class DensePrior final : public PriorCovariance {
 public:
  explicit DensePrior(Eigen::MatrixXd covariance);
  /// Takes a precomputed square-root factor (factor * factor^T = covariance)
  /// and labels the prior, e.g. when a matrix-free prior is materialised.
  DensePrior(Eigen::MatrixXd covariance, Eigen::MatrixXd factor, std::string family,
             std::vector<Hyperparameter> hyperparameters = {});

  int dimension() const override { return static_cast<int>(covariance_.rows()); }
  std::string family() const override { return family_; }
  std::vector<Hyperparameter> hyperparameters() const override { return hyperparameters_; }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const override;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& V) const override;
  Eigen::MatrixXd sample(int count, Rng& rng) const override;

  const Eigen::MatrixXd& matrix() const { return covariance_; }
  const Eigen::MatrixXd& factor() const { return factor_; }

 private:
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd factor_;  // factor * factor^T = covariance
  std::string family_ = "dense";
  std::vector<Hyperparameter> hyperparameters_;
};

/// Builds the dense d_x x d_x matrix from basis-vector products.
Eigen::MatrixXd dense_covariance(const PriorCovariance& prior);

Eigen::VectorXd isotropic_matvec(const IsotropicPrior& prior, const Eigen::VectorXd& v);
double matern_cov_entry(const Matern12Prior& prior, int i, int j, int i2, int j2);
Eigen::VectorXd matern_matvec(const Matern12Prior& prior, const Eigen::VectorXd& v);
Eigen::MatrixXd sample_prior(const PriorCovariance& prior, std::uint64_t seed, int count);

}  // namespace ctdesign

#endif  // CTDESIGN_PRIORS_HPP_
