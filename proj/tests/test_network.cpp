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

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ctdesign/evidence.hpp"
#include "ctdesign/linearised_prior.hpp"
#include "ctdesign/errors.hpp"
#include "ctdesign/network.hpp"
#include "ctdesign/tomo_operator.hpp"
#include "test_support.hpp"

using namespace ctdesign;

namespace {

NetworkSpec toy_spec() {
  NetworkSpec s;
  s.height = s.width = 8;
  s.scales = 2;
  s.channels = 4;
  s.skip_channels = 2;
  s.input_seed = 3;
  return s;
}

std::shared_ptr<const UNet> toy_net() { return std::make_shared<const UNet>(toy_spec()); }

Eigen::MatrixXd dense_jacobian(const JacobianOperator& J) {
  Eigen::MatrixXd out(J.image_size(), J.parameter_count());
  for (Eigen::Index j = 0; j < J.parameter_count(); ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(J.parameter_count());
    e[j] = 1.0;
    out.col(j) = J.jvp(e);
  }
  return out;
}

}  // namespace

TEST_CASE("network: forward is deterministic") {
  const auto net = toy_net();
  const Eigen::VectorXd theta = net->initial_parameters(5);
  CHECK(net->forward(theta) == net->forward(theta));
  const UNet twin(toy_spec());
  CHECK(twin.forward(theta) == net->forward(theta));
  CHECK(net->initial_parameters(5) == theta);
  Eigen::Index total = 0;
  for (const ParameterBlock& b : net->blocks()) total += b.size;
  CHECK(total == net->parameter_count());
}

TEST_CASE("network: zero output layer gives a zero image") {
  const auto net = toy_net();
  Eigen::VectorXd theta = net->initial_parameters(1);
  const ConvLayer& out = net->layers().back();
  REQUIRE(out.activation == Activation::Identity);
  const Eigen::Index nw = static_cast<Eigen::Index>(out.in_channels) * out.kernel * out.kernel * out.out_channels;
  theta.segment(out.weight_offset, nw).setZero();
  theta.segment(out.bias_offset, out.out_channels).setZero();
  CHECK(net->forward(theta).isZero(0));
}

TEST_CASE("network: desk-scale parameter count") {
  NetworkSpec s;
  const UNet net(s);
  CHECK(net.parameter_count() == 39913);
  CHECK(net.image_size() == 4096);
}

TEST_CASE("jacobian: adjointness and finite differences") {
  const auto net = toy_net();
  const Eigen::VectorXd theta = net->initial_parameters(2);
  const NetworkJacobian J(net, theta);
  Rng rng(8);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd v = standard_normal(net->parameter_count(), rng);
    const Eigen::VectorXd u = standard_normal(net->image_size(), rng);
    const double a = J.jvp(v).dot(u), b = v.dot(J.vjp(u));
    CHECK(std::abs(a - b) <= 1e-10 * std::abs(a));
  }
  const double h = 1e-5;
  for (int k = 0; k < 5; ++k) {
    const Eigen::VectorXd v = standard_normal(net->parameter_count(), rng).normalized();
    const Eigen::VectorXd fd = (net->forward(theta + h * v) - net->forward(theta - h * v)) / (2 * h);
    const Eigen::VectorXd jv = J.jvp(v);
    CHECK((fd - jv).norm() / jv.norm() < 1e-4);
  }
  CHECK(J.jvp(Eigen::VectorXd::Zero(net->parameter_count())).isZero(0));
}

TEST_CASE("jacobian: vjp through the ray transform matches a scalar derivative") {
  const auto net = toy_net();
  const Eigen::VectorXd theta = net->initial_parameters(4);
  const NetworkJacobian J(net, theta);
  const RayTransform op(build_geometry(8, 8, 6, 13));
  const AngleSubset sub({0, 2, 5}, 6);
  Rng rng(9);
  const Eigen::VectorXd u = standard_normal(39, rng);
  const Eigen::VectorXd grad = J.vjp(op.adjoint(sub, u));
  auto f = [&](const Eigen::VectorXd& t) { return op.forward(sub, net->forward(t)).dot(u); };
  const double h = 1e-5;
  for (int k = 0; k < 5; ++k) {
    const Eigen::VectorXd d = standard_normal(net->parameter_count(), rng).normalized();
    const double fd = (f(theta + h * d) - f(theta - h * d)) / (2 * h);
    CHECK(std::abs(fd - grad.dot(d)) <= 1e-4 * std::abs(grad.dot(d)));
  }
}

TEST_CASE("training: stationary point under the identity harness") {
  const auto net = toy_net();
  TrainOptions o;
  o.tv_strength = 0.0;
  o.iterations = 5;
  o.seed = 12;
  const Eigen::VectorXd theta0 = net->initial_parameters(12);
  const Eigen::VectorXd target = net->forward(theta0);
  const TrainedNetwork t = train_dip(*net, testing::identity_rows(64), target, o);
  CHECK(t.loss_trace.front() == 0.0);
  CHECK(t.theta == theta0);
}

TEST_CASE("training: loss decreases and checkpoints round-trip") {
  const auto net = toy_net();
  const RayTransform op(build_geometry(8, 8, 6, 13));
  const AngleSubset sub({0, 2, 4}, 6);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(64);
  x.segment(20, 12).setConstant(0.5);
  const Eigen::VectorXd y = op.forward(sub, x);
  TrainOptions o;
  o.iterations = 200;
  o.learning_rate = 1e-2;
  o.seed = 1;
  int calls = 0;
  o.callback = [&calls](int, const Eigen::VectorXd&) { ++calls; };
  o.callback_every = 50;
  const TrainedNetwork t = train_dip(*net, op, sub, y, o);
  CHECK(t.loss_trace.size() == 201);
  CHECK(t.final_loss < t.loss_trace.front());
  CHECK(calls >= 4);

  const auto dir = std::filesystem::temp_directory_path() / "ctdesign_test_ckpt";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "theta.raw", *net, t);
  CHECK(load_checkpoint(dir / "theta.raw", *net) == t.theta);
  NetworkSpec other = toy_spec();
  other.channels = 5;
  CHECK_THROWS(load_checkpoint(dir / "theta.raw", UNet(other)));
  std::filesystem::remove_all(dir);
}

TEST_CASE("g-prior scale: identity jacobian and dense oracle") {
  const MatrixJacobian I(Eigen::MatrixXd::Identity(6, 6));
  const Eigen::VectorXd s = compute_gprior_scale(I, testing::identity_rows(6));
  CHECK((s.array() - 1.0 / 6.0).abs().maxCoeff() < 1e-15);

  const auto net = toy_net();
  const NetworkJacobian J(net, net->initial_parameters(6));
  const RayTransform op(build_geometry(8, 8, 6, 13));
  const SparseRows A = op.stacked(AngleSubset({1, 3}, 6));
  const Eigen::MatrixXd AJ = testing::dense(A) * dense_jacobian(J);
  const Eigen::VectorXd ref = AJ.colwise().squaredNorm().transpose() / AJ.rows();
  const Eigen::VectorXd got = compute_gprior_scale(J, A);
  CHECK((got - ref).norm() / ref.norm() < 1e-10);
}

TEST_CASE("g: closed form") {
  CHECK(compute_g(Eigen::VectorXd::Zero(3), 0.0, 4) == 0.0);
  CHECK(compute_g(Eigen::Vector2d(2.0, 2.0), 1.0, 1) == doctest::Approx(3.0));
  CHECK_THROWS_AS(ThetaPrior::gprior(0.0, Eigen::VectorXd::Ones(3)), NumericalError);
  CHECK_THROWS_AS(ThetaPrior::gprior(-1.0, Eigen::VectorXd::Ones(3)), NumericalError);
}

TEST_CASE("g-prior: average marginal variance equals the data power") {
  const auto net = toy_net();
  const NetworkJacobian J(net, net->initial_parameters(7));
  const RayTransform op(build_geometry(8, 8, 6, 13));
  const SparseRows A = op.stacked(AngleSubset({0, 3}, 6));
  Rng rng(3);
  const Eigen::VectorXd y = 2.0 * standard_normal(A.rows(), rng);
  const double noise = 0.1;
  const double g = compute_g(y, noise, net->parameter_count());
  const Eigen::VectorXd s = compute_gprior_scale(J, A);
  const LinearisedPrior prior(std::make_shared<NetworkJacobian>(net, J.theta()), ThetaPrior::gprior(g, s));
  const Eigen::MatrixXd Syy = measurement_covariance(prior, A) + noise * Eigen::MatrixXd::Identity(A.rows(), A.rows());
  CHECK(std::abs(Syy.trace() / A.rows() - y.squaredNorm() / A.rows()) < 1e-8);
}

TEST_CASE("linearised covariance: zero, dense oracle and symmetry") {
  const auto net = toy_net();
  const auto J = std::make_shared<const NetworkJacobian>(net, net->initial_parameters(8));
  Rng rng(4);
  const Eigen::VectorXd var = standard_normal(net->parameter_count(), rng).array().abs() + 0.1;
  const ThetaPrior tp = ThetaPrior::gprior(1.0, var.cwiseInverse());
  CHECK(lin_dip_matvec(*J, tp, Eigen::VectorXd::Zero(64)).isZero(0));
  const Eigen::MatrixXd Jd = dense_jacobian(*J);
  const Eigen::MatrixXd ref = Jd * var.asDiagonal() * Jd.transpose();
  for (int k = 0; k < 5; ++k) {
    const Eigen::VectorXd v = standard_normal(64, rng), u = standard_normal(64, rng);
    const Eigen::VectorXd got = lin_dip_matvec(*J, tp, v);
    CHECK((got - ref * v).norm() / (ref * v).norm() < 1e-10);
    const double a = u.dot(lin_dip_matvec(*J, tp, v)), b = v.dot(lin_dip_matvec(*J, tp, u));
    CHECK(std::abs(a - b) <= 1e-10 * std::abs(a));
  }
  const LinearisedPrior prior(J, tp);
  const auto dense = materialise_prior(prior);
  CHECK(testing::rel_fro(dense->matrix(), ref) < 1e-10);
  CHECK(testing::rel_fro(dense->factor() * dense->factor().transpose(), dense->matrix()) < 1e-6);
  CHECK(dense->family() == "lindip-gprior");
}

TEST_CASE("block prior fit: ascent, positivity and a one-dimensional oracle") {
  const auto net = toy_net();
  const auto J = std::make_shared<const NetworkJacobian>(net, net->initial_parameters(9));
  const RayTransform op(build_geometry(8, 8, 6, 13));
  const SparseRows A = op.stacked(AngleSubset({0, 2, 4}, 6));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(64);
  x.segment(24, 10).setConstant(0.4);
  Rng rng(5);
  const Eigen::VectorXd y = A * x + 0.05 * standard_normal(A.rows(), rng);
  const LinearisedFit fit = fit_block_prior(*J, A, y);
  CHECK(fit.report.log_evidence >= fit.report.initial_log_evidence);
  for (double v : fit.theta_prior.block_variances) CHECK(v > 0.0);
  CHECK(fit.theta_prior.block_variances.size() == net->blocks().size());

  // Single block: compare the fitted variance with a grid search at a pinned noise level.
  const Eigen::MatrixXd AJ = testing::dense(A) * dense_jacobian(*J);
  const MatrixJacobian single(dense_jacobian(*J));
  LinearisedFitOptions opt;
  opt.fit_noise = false;
  opt.noise_variance = 0.0025;
  opt.search.min_step = 1e-4;
  const LinearisedFit one = fit_block_prior(single, A, y, opt);
  double best = -INFINITY, best_log_v = 0.0;
  const double step = 0.01;
  for (double lv = -20.0; lv <= 10.0; lv += step) {
    const Eigen::MatrixXd C = std::exp(lv) * AJ * AJ.transpose() + 0.0025 * Eigen::MatrixXd::Identity(A.rows(), A.rows());
    const double e = gaussian_log_density(C, y);
    if (e > best) {
      best = e;
      best_log_v = lv;
    }
  }
  CHECK(std::abs(std::log(one.theta_prior.block_variances.at(0)) - best_log_v) <= step);
}
