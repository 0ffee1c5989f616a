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

#ifndef CTDESIGN_LINEARISED_PRIOR_HPP_
#define CTDESIGN_LINEARISED_PRIOR_HPP_

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ctdesign/evidence.hpp"
#include "ctdesign/network.hpp"
#include "ctdesign/priors.hpp"
#include "ctdesign/tomo_operator.hpp"

namespace ctdesign {

/// Linear map J = d x / d theta at a fixed parameter vector, exposed through
/// Jacobian-vector and vector-Jacobian products. Implementations are immutable
/// after construction and safe for concurrent use.
class JacobianOperator {
 public:
  virtual ~JacobianOperator() = default;
  virtual Eigen::Index parameter_count() const = 0;
  virtual int image_size() const = 0;
  virtual Eigen::VectorXd jvp(const Eigen::VectorXd& dtheta) const = 0;
  virtual Eigen::VectorXd vjp(const Eigen::VectorXd& cotangent) const = 0;
  /// Parameter partition used by the block-diagonal prior; one block by default.
  virtual std::vector<ParameterBlock> blocks() const;
};

/// Explicit Jacobian matrix (d_x x d_theta); toy problems and oracles.
class MatrixJacobian final : public JacobianOperator {
 public:
  explicit MatrixJacobian(Eigen::MatrixXd J, std::vector<ParameterBlock> blocks = {});

  Eigen::Index parameter_count() const override { return J_.cols(); }
  int image_size() const override { return static_cast<int>(J_.rows()); }
  Eigen::VectorXd jvp(const Eigen::VectorXd& dtheta) const override;
  Eigen::VectorXd vjp(const Eigen::VectorXd& cotangent) const override;
  std::vector<ParameterBlock> blocks() const override;

  const Eigen::MatrixXd& matrix() const { return J_; }

 private:
  Eigen::MatrixXd J_;
  std::vector<ParameterBlock> blocks_;
};

/// Jacobian of a U-net at theta*.
class NetworkJacobian final : public JacobianOperator {
 public:
  NetworkJacobian(std::shared_ptr<const UNet> net, Eigen::VectorXd theta);

  Eigen::Index parameter_count() const override { return net_->parameter_count(); }
  int image_size() const override { return net_->image_size(); }
  Eigen::VectorXd jvp(const Eigen::VectorXd& dtheta) const override;
  Eigen::VectorXd vjp(const Eigen::VectorXd& cotangent) const override;
  std::vector<ParameterBlock> blocks() const override { return net_->blocks(); }

  const UNet& network() const { return *net_; }
  const Eigen::VectorXd& theta() const { return theta_; }
  /// x(theta*).
  Eigen::VectorXd image() const { return net_->output(*trace_); }

 private:
  std::shared_ptr<const UNet> net_;
  Eigen::VectorXd theta_;
  std::shared_ptr<const UNet::Trace> trace_;
};

/// Diagonal weight-space prior Sigma_theta.
struct ThetaPrior {
  enum class Kind { BlockDiagonal, GPrior };
  Kind kind = Kind::GPrior;
  std::vector<ParameterBlock> blocks;  // BlockDiagonal
  std::vector<double> block_variances;
  double g = 0.0;                      // GPrior: Sigma_theta = g * diag(1 / s)
  Eigen::VectorXd s;

  static ThetaPrior block_diagonal(std::vector<ParameterBlock> blocks, std::vector<double> variances);
  static ThetaPrior gprior(double g, Eigen::VectorXd s);

  /// Throws std::invalid_argument unless every variance is positive and finite.
  void validate(Eigen::Index parameter_count) const;
  /// diag(Sigma_theta).
  Eigen::VectorXd variances(Eigen::Index parameter_count) const;
  std::vector<Hyperparameter> hyperparameters() const;
};

/// x ~ N(0, J Sigma_theta J^T).
class LinearisedPrior final : public PriorCovariance {
 public:
  LinearisedPrior(std::shared_ptr<const JacobianOperator> jacobian, ThetaPrior theta_prior);

  int dimension() const override { return jacobian_->image_size(); }
  std::string family() const override;
  std::vector<Hyperparameter> hyperparameters() const override { return theta_prior_.hyperparameters(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const override;
  Eigen::MatrixXd sample(int count, Rng& rng) const override;

  const JacobianOperator& jacobian() const { return *jacobian_; }
  const ThetaPrior& theta_prior() const { return theta_prior_; }

 private:
  std::shared_ptr<const JacobianOperator> jacobian_;
  ThetaPrior theta_prior_;
  Eigen::VectorXd variances_;
};

Eigen::VectorXd lin_dip_matvec(const JacobianOperator& jacobian, const ThetaPrior& theta_prior,
                               const Eigen::VectorXd& v);

/// Rows of A J (d_y x d_theta), one vector-Jacobian product per row of A.
Eigen::MatrixXd measurement_jacobian(const JacobianOperator& jacobian, const SparseRows& A);

/// s_j = d_y^-1 sum_i [A J]_ij^2. Entries below 1e-12 * mean(s) are raised to
/// that floor; the number of floored entries is written to `floored` if given.
Eigen::VectorXd compute_gprior_scale(const JacobianOperator& jacobian, const SparseRows& A,
                                     int* floored = nullptr);
Eigen::VectorXd compute_gprior_scale(const JacobianOperator& jacobian, const RayTransform& op,
                                     const AngleSubset& subset, int* floored = nullptr);
/// Same, from precomputed rows of A J.
Eigen::VectorXd gprior_scale_from_rows(const Eigen::MatrixXd& AJ, int* floored = nullptr);

/// g = (d_y d_theta)^-1 sum_i (y_i^2 - sigma_y^2). May be <= 0; ThetaPrior::gprior rejects that.
double compute_g(const Eigen::VectorXd& y, double noise_variance, Eigen::Index parameter_count);

struct LinearisedFitOptions {
  bool fit_noise = true;
  double noise_variance = 0.0;  // start value, or the pinned value if !fit_noise; <= 0 picks a default
  CoordinateSearchOptions search{};
};

struct LinearisedFit {
  ThetaPrior theta_prior;
  NoiseModel noise;
  EvidenceReport report;
};

/// Per-block variances (and sigma_y^2 unless pinned) maximising the evidence
/// with Sigma_xx = J Sigma_theta J^T. Starts from all-equal block variances.
LinearisedFit fit_block_prior(const JacobianOperator& jacobian, const SparseRows& A,
                              const Eigen::VectorXd& y, const LinearisedFitOptions& options = {});

/// g-prior from the pilot scan: s from A, g from the second moment of y. When
/// sigma_y^2 is fitted it is chosen by evidence, with g following it through
/// compute_g. Throws NumericalError if g <= 0 at the chosen sigma_y^2.
LinearisedFit fit_gprior(const JacobianOperator& jacobian, const SparseRows& A, const Eigen::VectorXd& y,
                         const LinearisedFitOptions& options = {});

/// Dense copy of a matrix-free prior with a Cholesky sampling factor. The
/// factor takes the smallest relative diagonal jitter (0, then 1e-12 up to
/// 1e-6 of the mean diagonal) that makes it succeed.
std::shared_ptr<const DensePrior> materialise_prior(const PriorCovariance& prior);

}  // namespace ctdesign

#endif  // CTDESIGN_LINEARISED_PRIOR_HPP_
