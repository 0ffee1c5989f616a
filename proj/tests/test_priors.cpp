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
#include <numbers>
#include <random>

#include "ctdesign/circulant_embedding.hpp"
#include "ctdesign/design.hpp"
#include "ctdesign/evidence.hpp"
#include "ctdesign/phantom.hpp"
#include "ctdesign/priors.hpp"
#include "test_support.hpp"

using namespace ctdesign;

namespace {

Eigen::MatrixXd dense_matern(int h, int w, double var, double ell) {
  Eigen::MatrixXd K(h * w, h * w);
  for (int a = 0; a < h * w; ++a)
    for (int b = 0; b < h * w; ++b)
      K(a, b) = var * std::exp(-std::hypot(a / w - b / w, a % w - b % w) / ell);
  return K;
}

Eigen::MatrixXd empirical_covariance(const Eigen::MatrixXd& samples) {
  return samples * samples.transpose() / static_cast<double>(samples.cols());
}

}  // namespace

TEST_CASE("isotropic prior") {
  const IsotropicPrior unit(16, 1.0);
  Rng rng(1);
  const Eigen::VectorXd v = standard_normal(16, rng);
  CHECK(isotropic_matvec(unit, v) == v);
  const IsotropicPrior p(16, 2.5);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(16);
  e[3] = 1.0;
  const Eigen::VectorXd out = isotropic_matvec(p, e);
  CHECK(out[3] == 2.5);
  CHECK(out.sum() == 2.5);
  CHECK(dense_covariance(p) == 2.5 * Eigen::MatrixXd::Identity(16, 16));
  CHECK_THROWS(IsotropicPrior(16, -1.0));
}

TEST_CASE("matern-1/2 covariance entries") {
  const Matern12Prior p(8, 8, 1.7, 3.0);
  CHECK(matern_cov_entry(p, 2, 3, 2, 3) == doctest::Approx(1.7));
  CHECK(matern_cov_entry(p, 0, 0, 0, 3) == doctest::Approx(1.7 * std::exp(-1.0)));
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> u(0, 7);
  for (int k = 0; k < 20; ++k) {
    const int a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    CHECK(matern_cov_entry(p, a, b, c, d) == matern_cov_entry(p, c, d, a, b));
  }
}

TEST_CASE("matern-1/2 matvec against the dense kernel") {
  const Matern12Prior p(16, 16, 1.3, 3.0);
  CHECK(matern_matvec(p, Eigen::VectorXd::Zero(256)).isZero(0));
  Rng rng(4);
  const Eigen::VectorXd v = standard_normal(256, rng);
  const Eigen::VectorXd ref = dense_matern(16, 16, 1.3, 3.0) * v;
  CHECK((matern_matvec(p, v) - ref).norm() / ref.norm() < 1e-8);

  const Matern12Prior tiny(16, 16, 1.3, 1e-6);
  CHECK((matern_matvec(tiny, v) - 1.3 * v).norm() / (1.3 * v.norm()) < 1e-6);
}

TEST_CASE("circulant embedding records clipping for long lengthscales") {
  const Matern12Prior p(16, 16, 1.0, 500.0);
  CHECK(p.embedding().clipped_fraction() >= 0.0);
  CHECK(p.embedding().clipped_fraction() <= 0.05);
  CHECK(p.embedding().embed_height() >= 2 * 16 - 1);
}

TEST_CASE("prior samples match the covariance") {
  const IsotropicPrior iso(4, 1.5);
  const Eigen::MatrixXd s = sample_prior(iso, 7, 100000);
  CHECK((empirical_covariance(s) - 1.5 * Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 0.03 * 1.5);

  const Matern12Prior mat(8, 8, 0.8, 2.5);
  const Eigen::MatrixXd m = sample_prior(mat, 8, 100000);
  CHECK(testing::rel_fro(empirical_covariance(m), dense_matern(8, 8, 0.8, 2.5)) < 0.05);

  CHECK(sample_prior(mat, 9, 10) == sample_prior(mat, 9, 10));
  CHECK(sample_prior(mat, 9, 10) != sample_prior(mat, 10, 10));
}

TEST_CASE("evidence: analytic two-dimensional case") {
  const IsotropicPrior p(2, 0.5);
  const EvidenceReport r = log_evidence(p, NoiseModel{0.5}, testing::identity_rows(2), Eigen::VectorXd::Zero(2));
  CHECK(r.log_evidence == doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
}

TEST_CASE("evidence: dense oracle on random small cases") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 4 + trial % 3;
    const RayTransform op(build_geometry(h, h, 6, default_detector_count(h, h)));
    const AngleSubset subset({trial % 6, (trial + 2) % 6}, 6);
    const SparseRows A = op.stacked(subset);
    const Matern12Prior prior(h, h, 0.3 + 0.1 * trial, 1.0 + 0.5 * trial);
    const double noise = 0.05 * (trial + 1);
    Rng r(trial);
    const Eigen::VectorXd y = standard_normal(A.rows(), r);
    const Eigen::MatrixXd Ad = testing::dense(A);
    const Eigen::MatrixXd C = Ad * dense_matern(h, h, prior.variance(), prior.lengthscale()) * Ad.transpose() +
                              noise * Eigen::MatrixXd::Identity(A.rows(), A.rows());
    const double ref = -0.5 * y.dot(C.llt().solve(y)) - 0.5 * std::log(C.determinant()) -
                       0.5 * y.size() * std::log(2.0 * std::numbers::pi);
    CHECK(std::abs(log_evidence(prior, NoiseModel{noise}, A, y).log_evidence - ref) < 1e-8);
  }
}

TEST_CASE("evidence: invariant to the order of angles") {
  const RayTransform op(build_geometry(8, 8, 10, 13));
  const Matern12Prior prior(8, 8, 1.0, 3.0);
  Rng rng(2);
  const Eigen::VectorXd x = standard_normal(64, rng);
  const AngleSubset ab({2, 7, 4}, 10), ba({4, 2, 7}, 10);
  const Eigen::VectorXd y1 = op.forward(ab, x), y2 = op.forward(ba, x);
  const double e1 = log_evidence(prior, NoiseModel{0.1}, op, ab, y1).log_evidence;
  const double e2 = log_evidence(prior, NoiseModel{0.1}, op, ba, y2).log_evidence;
  CHECK(e1 == doctest::Approx(e2).epsilon(1e-12));
}

TEST_CASE("evidence fit recovers synthetic isotropic hyperparameters") {
  const int h = 12;
  const RayTransform op(build_geometry(h, h, 40, 19));
  std::vector<int> idx(40);
  for (int k = 0; k < 40; ++k) idx[k] = k;
  const SparseRows A = op.stacked(AngleSubset(idx, 40));
  const double var = 0.7, noise = 0.4;
  Rng rng(31);
  const Eigen::VectorXd x = std::sqrt(var) * standard_normal(h * h, rng);
  const Eigen::VectorXd y = A * x + std::sqrt(noise) * standard_normal(A.rows(), rng);
  const FittedPrior f = fit_hyperparameters(PriorFamily::Isotropic, h, h, A, y);
  CHECK(std::abs(f.report.value("prior_variance") / var - 1.0) < 0.2);
  CHECK(std::abs(f.noise.variance / noise - 1.0) < 0.2);
  CHECK(f.report.log_evidence >= f.report.initial_log_evidence);
}

TEST_CASE("evidence fit of the matern prior on a rectangles pilot") {
  // Lengthscales are long compared with the pixel size: at 64 x 64 the fitted
  // value sits at roughly a third of the image side.
  const RayTransform op(build_geometry(64, 64, 100, 93));
  const AngleSubset pilot = equidistant_design(5, 100);
  const SparseRows A = op.stacked(pilot);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const PhantomSample p = sample_phantom(PhantomSpec{}, seed);
    const NoisySinogram y = simulate_measurements(p.image.values, op, pilot, 0.05, seed);
    const FittedPrior f = fit_hyperparameters(PriorFamily::Matern12, 64, 64, A, y.y);
    const double ell = f.report.value("lengthscale");
    MESSAGE("seed " << seed << ": lengthscale " << ell << " px");
    CHECK(ell >= 16.0);
    CHECK(ell <= 40.0);
    CHECK(f.report.log_evidence >= f.report.initial_log_evidence);
  }
}
