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

#include "ctdesign/linearised_prior.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "ctdesign/errors.hpp"

namespace ctdesign {

std::vector<ParameterBlock> JacobianOperator::blocks() const {
  return {ParameterBlock{"all", 0, parameter_count()}};
}

MatrixJacobian::MatrixJacobian(Eigen::MatrixXd J, std::vector<ParameterBlock> blocks)
    : J_(std::move(J)), blocks_(std::move(blocks)) {
  if (J_.size() == 0) throw std::invalid_argument("MatrixJacobian: empty matrix");
}

Eigen::VectorXd MatrixJacobian::jvp(const Eigen::VectorXd& dtheta) const {
  if (dtheta.size() != J_.cols()) throw std::invalid_argument("MatrixJacobian::jvp: length mismatch");
  return J_ * dtheta;
}

Eigen::VectorXd MatrixJacobian::vjp(const Eigen::VectorXd& cotangent) const {
  if (cotangent.size() != J_.rows()) throw std::invalid_argument("MatrixJacobian::vjp: length mismatch");
  return J_.transpose() * cotangent;
}

std::vector<ParameterBlock> MatrixJacobian::blocks() const {
  return blocks_.empty() ? JacobianOperator::blocks() : blocks_;
}

NetworkJacobian::NetworkJacobian(std::shared_ptr<const UNet> net, Eigen::VectorXd theta)
    : net_(std::move(net)), theta_(std::move(theta)) {
  if (!net_) throw std::invalid_argument("NetworkJacobian: null network");
  if (!theta_.allFinite()) throw std::invalid_argument("NetworkJacobian: non-finite parameters");
  trace_ = net_->trace(theta_);
}

Eigen::VectorXd NetworkJacobian::jvp(const Eigen::VectorXd& dtheta) const { return net_->jvp(*trace_, dtheta); }

Eigen::VectorXd NetworkJacobian::vjp(const Eigen::VectorXd& cotangent) const {
  return net_->vjp(*trace_, cotangent);
}

// --- weight-space prior ------------------------------------------------------------

ThetaPrior ThetaPrior::block_diagonal(std::vector<ParameterBlock> blocks, std::vector<double> variances) {
  if (blocks.size() != variances.size())
    throw std::invalid_argument("ThetaPrior: one variance per block required");
  ThetaPrior p;
  p.kind = Kind::BlockDiagonal;
  p.blocks = std::move(blocks);
  p.block_variances = std::move(variances);
  return p;
}

ThetaPrior ThetaPrior::gprior(double g, Eigen::VectorXd s) {
  if (!(g > 0.0) || !std::isfinite(g))
    throw NumericalError("g-prior scale g = " + std::to_string(g) +
                         " is not positive: the noise variance exceeds the second moment of the "
                         "pilot measurements; review sigma_y^2");
  ThetaPrior p;
  p.kind = Kind::GPrior;
  p.g = g;
  p.s = std::move(s);
  return p;
}

void ThetaPrior::validate(Eigen::Index parameter_count) const {
  if (kind == Kind::GPrior) {
    if (s.size() != parameter_count) throw std::invalid_argument("ThetaPrior: s has the wrong length");
    if (!(g > 0.0) || !std::isfinite(g)) throw std::invalid_argument("ThetaPrior: g must be positive");
    if (!s.allFinite() || (s.array() <= 0.0).any())
      throw std::invalid_argument("ThetaPrior: s must be positive");
    return;
  }
  Eigen::Index covered = 0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b].offset != covered) throw std::invalid_argument("ThetaPrior: blocks must tile the parameters");
    covered += blocks[b].size;
    if (!(block_variances[b] > 0.0) || !std::isfinite(block_variances[b]))
      throw std::invalid_argument("ThetaPrior: block variance of " + blocks[b].name + " must be positive");
  }
  if (covered != parameter_count) throw std::invalid_argument("ThetaPrior: blocks must tile the parameters");
}

Eigen::VectorXd ThetaPrior::variances(Eigen::Index parameter_count) const {
  validate(parameter_count);
  if (kind == Kind::GPrior) return g * s.cwiseInverse();
  Eigen::VectorXd v(parameter_count);
  for (std::size_t b = 0; b < blocks.size(); ++b)
    v.segment(blocks[b].offset, blocks[b].size).setConstant(block_variances[b]);
  return v;
}

std::vector<Hyperparameter> ThetaPrior::hyperparameters() const {
  if (kind == Kind::GPrior) return {{"g", g}};
  std::vector<Hyperparameter> out;
  for (std::size_t b = 0; b < blocks.size(); ++b) out.push_back({"variance_" + blocks[b].name, block_variances[b]});
  return out;
}

LinearisedPrior::LinearisedPrior(std::shared_ptr<const JacobianOperator> jacobian, ThetaPrior theta_prior)
    : jacobian_(std::move(jacobian)), theta_prior_(std::move(theta_prior)) {
  if (!jacobian_) throw std::invalid_argument("LinearisedPrior: null Jacobian");
  variances_ = theta_prior_.variances(jacobian_->parameter_count());
}

std::string LinearisedPrior::family() const {
  return theta_prior_.kind == ThetaPrior::Kind::GPrior ? "lindip-gprior" : "lindip-block";
}

Eigen::VectorXd LinearisedPrior::apply(const Eigen::VectorXd& v) const {
  if (v.size() != dimension()) throw std::invalid_argument("LinearisedPrior: length mismatch");
  return jacobian_->jvp(variances_.cwiseProduct(jacobian_->vjp(v)));
}

Eigen::MatrixXd LinearisedPrior::sample(int count, Rng& rng) const {
  const Eigen::MatrixXd eps = standard_normal(jacobian_->parameter_count(), count, rng);
  const Eigen::VectorXd root = variances_.cwiseSqrt();
  Eigen::MatrixXd out(dimension(), count);
  for (int k = 0; k < count; ++k) out.col(k) = jacobian_->jvp(root.cwiseProduct(eps.col(k)));
  return out;
}

Eigen::VectorXd lin_dip_matvec(const JacobianOperator& jacobian, const ThetaPrior& theta_prior,
                               const Eigen::VectorXd& v) {
  if (v.size() != jacobian.image_size()) throw std::invalid_argument("lin_dip_matvec: length mismatch");
  return jacobian.jvp(theta_prior.variances(jacobian.parameter_count()).cwiseProduct(jacobian.vjp(v)));
}

// --- g-prior ----------------------------------------------------------------------

Eigen::MatrixXd measurement_jacobian(const JacobianOperator& jacobian, const SparseRows& A) {
  if (A.cols() != jacobian.image_size()) throw std::invalid_argument("measurement_jacobian: size mismatch");
  Eigen::MatrixXd AJ(A.rows(), jacobian.parameter_count());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const Eigen::VectorXd row = Eigen::VectorXd(A.row(i).transpose());
    AJ.row(i) = jacobian.vjp(row).transpose();
  }
  return AJ;
}

Eigen::VectorXd gprior_scale_from_rows(const Eigen::MatrixXd& AJ, int* floored) {
  if (AJ.rows() == 0) throw std::invalid_argument("compute_gprior_scale: empty subset");
  Eigen::VectorXd s = AJ.colwise().squaredNorm().transpose() / static_cast<double>(AJ.rows());
  const double floor = 1e-12 * s.mean();
  int count = 0;
  for (Eigen::Index j = 0; j < s.size(); ++j) {
    if (s[j] < floor) {
      s[j] = floor;
      ++count;
    }
  }
  if (!(floor > 0.0)) throw NumericalError("compute_gprior_scale: A J is identically zero");
  if (floored) *floored = count;
  return s;
}

Eigen::VectorXd compute_gprior_scale(const JacobianOperator& jacobian, const SparseRows& A, int* floored) {
  return gprior_scale_from_rows(measurement_jacobian(jacobian, A), floored);
}

Eigen::VectorXd compute_gprior_scale(const JacobianOperator& jacobian, const RayTransform& op,
                                     const AngleSubset& subset, int* floored) {
  if (subset.empty()) throw std::invalid_argument("compute_gprior_scale: empty subset");
  return compute_gprior_scale(jacobian, op.stacked(subset), floored);
}

double compute_g(const Eigen::VectorXd& y, double noise_variance, Eigen::Index parameter_count) {
  if (y.size() == 0 || parameter_count <= 0) throw std::invalid_argument("compute_g: empty input");
  return (y.squaredNorm() - static_cast<double>(y.size()) * noise_variance) /
         (static_cast<double>(y.size()) * static_cast<double>(parameter_count));
}

// --- evidence fits ------------------------------------------------------------------

namespace {

double log_density_or_minus_inf(const Eigen::MatrixXd& cov, const Eigen::VectorXd& y) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd alpha = llt.matrixL().solve(y);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (alpha.squaredNorm() + logdet) -
         0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

void check_fit_inputs(const JacobianOperator& jacobian, const SparseRows& A, const Eigen::VectorXd& y,
                      const LinearisedFitOptions& options) {
  if (A.rows() != y.size() || y.size() == 0) throw std::invalid_argument("linearised fit: pilot data length mismatch");
  if (A.cols() != jacobian.image_size()) throw std::invalid_argument("linearised fit: operator/image size mismatch");
  if (!options.fit_noise && !(options.noise_variance > 0.0))
    throw std::invalid_argument("linearised fit: pinned noise variance must be positive");
}

}  // namespace

LinearisedFit fit_block_prior(const JacobianOperator& jacobian, const SparseRows& A, const Eigen::VectorXd& y,
                              const LinearisedFitOptions& options) {
  check_fit_inputs(jacobian, A, y, options);
  const std::vector<ParameterBlock> blocks = jacobian.blocks();
  const Eigen::MatrixXd AJ = measurement_jacobian(jacobian, A);
  std::vector<Eigen::MatrixXd> grams;
  double total_trace = 0.0;
  for (const ParameterBlock& b : blocks) {
    const auto Ub = AJ.middleCols(b.offset, b.size);
    grams.push_back(Ub * Ub.transpose());
    total_trace += grams.back().trace();
  }
  if (!(total_trace > 0.0)) throw NumericalError("fit_block_prior: A J is identically zero");

  const auto nb = static_cast<Eigen::Index>(blocks.size());
  const double dy = static_cast<double>(y.size());
  const double second_moment = y.squaredNorm() / dy;
  auto objective = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(y.size(), y.size());
    for (Eigen::Index b = 0; b < nb; ++b) cov += std::exp(p[b]) * grams[static_cast<std::size_t>(b)];
    cov.diagonal().array() += options.fit_noise ? std::exp(p[nb]) : options.noise_variance;
    return log_density_or_minus_inf(cov, y);
  };

  const double noise0 = options.noise_variance > 0.0 ? options.noise_variance : 0.1 * second_moment;
  const double var0 = std::max(second_moment - noise0, 0.1 * second_moment) * dy / total_trace;
  Eigen::VectorXd start(nb + (options.fit_noise ? 1 : 0));
  start.head(nb).setConstant(std::log(var0));
  if (options.fit_noise) start[nb] = std::log(noise0);
  CoordinateSearchResult result = coordinate_search(objective, {start}, options.search);

  LinearisedFit fit;
  std::vector<double> variances(blocks.size());
  for (Eigen::Index b = 0; b < nb; ++b) variances[static_cast<std::size_t>(b)] = std::exp(result.point[b]);
  fit.theta_prior = ThetaPrior::block_diagonal(blocks, variances);
  fit.noise.variance = options.fit_noise ? std::exp(result.point[nb]) : options.noise_variance;
  fit.report.log_evidence = result.value;
  fit.report.initial_log_evidence = result.initial_value;
  fit.report.hyperparameters = fit.theta_prior.hyperparameters();
  fit.report.hyperparameters.push_back({"noise_variance", fit.noise.variance});
  fit.report.trace = std::move(result.trace);
  fit.report.evaluations = result.evaluations;
  return fit;
}

LinearisedFit fit_gprior(const JacobianOperator& jacobian, const SparseRows& A, const Eigen::VectorXd& y,
                         const LinearisedFitOptions& options) {
  check_fit_inputs(jacobian, A, y, options);
  const Eigen::MatrixXd AJ = measurement_jacobian(jacobian, A);
  const Eigen::VectorXd s = gprior_scale_from_rows(AJ);
  const Eigen::Index d_theta = jacobian.parameter_count();
  const double second_moment = y.squaredNorm() / static_cast<double>(y.size());

  LinearisedFit fit;
  double noise_var = options.noise_variance;
  if (options.fit_noise) {
    // Sigma_yy = g(sigma^2) M + sigma^2 I with M = (A J) diag(1/s) (A J)^T.
    const Eigen::MatrixXd scaled = AJ * s.cwiseInverse().cwiseSqrt().asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled * scaled.transpose());
    if (eig.info() != Eigen::Success) throw NumericalError("fit_gprior: eigendecomposition failed");
    const Eigen::ArrayXd lambda = eig.eigenvalues().cwiseMax(0.0).array();
    const Eigen::ArrayXd proj = (eig.eigenvectors().transpose() * y).array().square();
    auto objective = [&](const Eigen::VectorXd& p) {
      const double nv = std::exp(p[0]);
      const double g = compute_g(y, nv, d_theta);
      if (!(g > 0.0)) return -std::numeric_limits<double>::infinity();
      const Eigen::ArrayXd d = g * lambda + nv;
      return -0.5 * ((proj / d).sum() + d.log().sum()) -
             0.5 * static_cast<double>(d.size()) * std::log(2.0 * std::numbers::pi);
    };
    std::vector<Eigen::VectorXd> starts;
    const double first = options.noise_variance > 0.0 ? options.noise_variance : 0.1 * second_moment;
    for (double v : {first, 0.01 * second_moment, 0.5 * second_moment})
      starts.push_back(Eigen::VectorXd::Constant(1, std::log(v)));
    CoordinateSearchResult result = coordinate_search(objective, starts, options.search);
    noise_var = std::exp(result.point[0]);
    fit.report.log_evidence = result.value;
    fit.report.initial_log_evidence = result.initial_value;
    fit.report.trace = std::move(result.trace);
    fit.report.evaluations = result.evaluations;
  }
  fit.theta_prior = ThetaPrior::gprior(compute_g(y, noise_var, d_theta), s);
  fit.noise.variance = noise_var;
  if (!options.fit_noise) {
    const Eigen::MatrixXd scaled = AJ * fit.theta_prior.variances(d_theta).cwiseSqrt().asDiagonal();
    Eigen::MatrixXd cov = scaled * scaled.transpose();
    cov.diagonal().array() += noise_var;
    fit.report.log_evidence = log_density_or_minus_inf(cov, y);
    fit.report.initial_log_evidence = fit.report.log_evidence;
    fit.report.evaluations = 1;
  }
  fit.report.hyperparameters = fit.theta_prior.hyperparameters();
  fit.report.hyperparameters.push_back({"noise_variance", noise_var});
  return fit;
}

std::shared_ptr<const DensePrior> materialise_prior(const PriorCovariance& prior) {
  const int d = prior.dimension();
  Eigen::MatrixXd cov(d, d);
  constexpr int kBatch = 256;
  for (int c0 = 0; c0 < d; c0 += kBatch) {
    const int nb = std::min(kBatch, d - c0);
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(d, nb);
    for (int k = 0; k < nb; ++k) basis(c0 + k, k) = 1.0;
    cov.middleCols(c0, nb) = prior.apply(basis);
  }
  cov = 0.5 * (cov + cov.transpose()).eval();
  const double mean_diag = cov.diagonal().mean();
  std::vector<Hyperparameter> hp = prior.hyperparameters();
  for (double rel : {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6}) {
    Eigen::MatrixXd jittered = cov;
    jittered.diagonal().array() += rel * mean_diag;
    Eigen::LLT<Eigen::MatrixXd> llt(jittered);
    if (llt.info() == Eigen::Success) {
      hp.push_back({"factor_jitter", rel * mean_diag});
      Eigen::MatrixXd L = llt.matrixL();
      return std::make_shared<DensePrior>(std::move(cov), std::move(L), prior.family(), std::move(hp));
    }
  }
  throw NumericalError("materialise_prior: covariance not positive definite even with 1e-6 relative jitter");
}

}  // namespace ctdesign
