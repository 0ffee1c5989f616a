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

#include <algorithm>
#include <cmath>

#include "ctdesign/design.hpp"
#include "ctdesign/priors.hpp"
#include "test_support.hpp"

using namespace ctdesign;

namespace {

// Dense posterior covariance of x given the rows of `subset` and noise variance.
Eigen::MatrixXd dense_posterior(const Eigen::MatrixXd& S, const RayTransform& op, const AngleSubset& subset,
                                double noise) {
  if (subset.empty()) return S;
  const Eigen::MatrixXd A = testing::dense(op.stacked(subset));
  const Eigen::MatrixXd Syy = A * S * A.transpose() + noise * Eigen::MatrixXd::Identity(A.rows(), A.rows());
  return S - S * A.transpose() * Syy.llt().solve(A * S);
}

double logdet(const Eigen::MatrixXd& M) {
  const Eigen::LLT<Eigen::MatrixXd> llt(M);
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// Ā Σ_{x|y} Āᵀ over the unused angles, in the batch's chunk order.
Eigen::MatrixXd dense_predictive(const Eigen::MatrixXd& S, const RayTransform& op, const AngleSubset& chosen,
                                 double noise, const std::vector<int>& angles) {
  const Eigen::MatrixXd post = dense_posterior(S, op, chosen, noise);
  const Eigen::MatrixXd Abar = testing::dense(op.stacked(AngleSubset(angles, chosen.n_candidates())));
  return Abar * post * Abar.transpose();
}

}  // namespace

TEST_CASE("init_state: scalar case and factor reproduction") {
  const RayTransform op1(build_geometry(4, 4, 3, 1));
  const auto iso = std::make_shared<IsotropicPrior>(16, 1.7);
  const DesignState s1 = init_state(iso, NoiseModel{0.3}, op1, AngleSubset({1}, 3));
  const Eigen::VectorXd a = Eigen::VectorXd(op1.block(1).rows.row(0).transpose());
  CHECK(s1.factor(0, 0) * s1.factor(0, 0) == doctest::Approx(1.7 * a.squaredNorm() + 0.3));

  const RayTransform op(build_geometry(12, 12, 10, 17));
  const auto mat = std::make_shared<Matern12Prior>(12, 12, 0.9, 4.0);
  const DesignState s = init_state(mat, NoiseModel{0.05}, op, AngleSubset({0, 3, 6}, 10));
  const Eigen::MatrixXd Syy = s.measurement_covariance() + s.jitter * Eigen::MatrixXd::Identity(51, 51);
  const Eigen::MatrixXd L = s.factor.triangularView<Eigen::Lower>();
  CHECK(testing::rel_fro(L * L.transpose(), Syy) < 1e-10);
  CHECK(s.jitter == 0.0);

  const DesignState p = init_state(mat, NoiseModel{0.05}, op, AngleSubset({6, 0, 3}, 10));
  const Eigen::VectorXd e1 = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s.measurement_covariance()).eigenvalues();
  const Eigen::VectorXd e2 = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(p.measurement_covariance()).eigenvalues();
  CHECK((e1 - e2).norm() <= 1e-10 * e1.norm());
}

TEST_CASE("matheron samples: degenerate prior and dense posterior oracle") {
  const RayTransform op(build_geometry(16, 16, 10, 23));
  const AngleSubset pilot({0, 2, 4, 6, 8}, 10);
  const auto zero = std::make_shared<DensePrior>(Eigen::MatrixXd::Zero(256, 256));
  const DesignState z = init_state(zero, NoiseModel{0.1}, op, pilot);
  const PseudoSampleBatch zb = matheron_samples(z, 20, 1);
  CHECK(zb.samples.isZero(0));
  CHECK(estimate_block(zb, 1).isZero(0));
  CHECK(ese_score(estimate_block(zb, 1)) == 0.0);

  const auto iso = std::make_shared<IsotropicPrior>(256, 0.5);
  const DesignState s = init_state(iso, NoiseModel{0.1}, op, pilot);
  const PseudoSampleBatch b = matheron_samples(s, 50000, 7);
  CHECK(b.angles == std::vector<int>{1, 3, 5, 7, 9});
  const Eigen::MatrixXd ref = dense_predictive(0.5 * Eigen::MatrixXd::Identity(256, 256), op, pilot, 0.1, b.angles);
  const Eigen::MatrixXd emp = b.samples * b.samples.transpose() / 50000.0;
  CHECK(testing::rel_fro(emp, ref) < 0.05);
  // per-angle blocks converge as well, and agree with the exact posterior block
  for (int a : b.angles) {
    CHECK(testing::rel_fro(estimate_block(b, a), posterior_block(s, a)) < 0.05);
    const Eigen::MatrixXd e = estimate_block(b, a);
    CHECK(e == e.transpose());
    const auto chunk = b.samples.middleRows(b.chunk_of(a) * 23, 23);
    CHECK(ese_score(e) == doctest::Approx(chunk.squaredNorm() / 50000.0).epsilon(1e-12));
  }
  // zero mean: the sample mean is within a few standard errors of zero
  const PseudoSampleBatch m = matheron_samples(s, 40000, 8);
  const double se = std::sqrt(ref.trace() / 40000.0);
  CHECK(m.samples.rowwise().mean().norm() < 4.0 * se);
  CHECK(matheron_samples(s, 10, 3).samples == matheron_samples(s, 10, 3).samples);
}

TEST_CASE("eig and ese scores: closed forms") {
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(5, 5);
  CHECK(eig_score(zero, 0.3) == doctest::Approx(5 * std::log(0.3)));
  CHECK(ese_score(zero) == 0.0);
  Eigen::MatrixXd b(1, 1);
  b << 2.0;
  CHECK(eig_score(b, 0.5) == doctest::Approx(std::log(2.5)));
  CHECK(ese_score(b) == 2.0);
}

TEST_CASE("eig equals the entropy reduction over sequential steps") {
  const RayTransform op(build_geometry(12, 12, 12, 17));
  const auto prior = std::make_shared<Matern12Prior>(12, 12, 1.0, 3.0);
  const Eigen::MatrixXd S = dense_covariance(*prior);
  const double noise = 0.2;
  DesignState st = init_state(prior, NoiseModel{noise}, op, AngleSubset({0}, 12));
  for (int step = 0; step < 5; ++step) {
    const Eigen::MatrixXd post = dense_posterior(S, op, st.chosen, noise);
    const double ld = logdet(post);
    const AcquisitionScores sc = score_exact(st, Objective::EIG);
    for (std::size_t k = 0; k < sc.angles.size(); ++k) {
      AngleSubset next = st.chosen;
      next.push_back(sc.angles[k]);
      const double reduction = ld - logdet(dense_posterior(S, op, next, noise));
      CHECK(std::abs(sc.values[k] - 17 * std::log(noise) - reduction) < 1e-6);
    }
    update_state(st, select_next(sc));
  }
}

TEST_CASE("eig and ese agree for a single detector pixel") {
  const RayTransform op(build_geometry(8, 8, 24, 1));
  const auto prior = std::make_shared<Matern12Prior>(8, 8, 1.0, 2.0);
  DesignState st = init_state(prior, NoiseModel{0.1}, op, AngleSubset({0}, 24));
  for (int step = 0; step < 10; ++step) {
    const int a = select_next(score_exact(st, Objective::EIG));
    const int b = select_next(score_exact(st, Objective::ESE));
    CHECK(a == b);
    update_state(st, a);
  }
}

TEST_CASE("select_next: tie break and ordering") {
  AcquisitionScores s;
  s.angles = {7};
  s.values = {1.0};
  CHECK(select_next(s) == 7);
  s.angles = {4, 2, 9};
  s.values = {1.0, 1.0, 1.0};
  CHECK(select_next(s) == 2);
  s.angles = {1, 2, 3, 4};
  s.values = {0.1, 0.2, 0.3, 0.4};
  CHECK(select_next(s) == 4);
}

TEST_CASE("update_state: extended factor and monotone entropy") {
  const RayTransform op(build_geometry(10, 10, 20, 15));
  const auto prior = std::make_shared<Matern12Prior>(10, 10, 0.7, 3.0);
  const Eigen::MatrixXd S = dense_covariance(*prior);
  DesignState st = init_state(prior, NoiseModel{0.05}, op, AngleSubset({0, 10}, 20));
  double previous = logdet(dense_posterior(S, op, st.chosen, 0.05));
  for (int a : {5, 15, 2, 7}) {
    update_state(st, a);
    CHECK(st.chosen[st.chosen.size() - 1] == a);
    const Eigen::MatrixXd L = st.factor.triangularView<Eigen::Lower>();
    const Eigen::MatrixXd ref =
        st.measurement_covariance() + st.jitter * Eigen::MatrixXd::Identity(L.rows(), L.rows());
    CHECK(testing::rel_fro(L * L.transpose(), ref) < 1e-8);
    const double now = logdet(dense_posterior(S, op, st.chosen, 0.05));
    CHECK(now <= previous + 1e-8);
    previous = now;
  }
  CHECK_THROWS_AS(update_state(st, 5), std::invalid_argument);
}

TEST_CASE("run_design: no steps keeps the pilot; baselines") {
  const RayTransform op(build_geometry(8, 8, 10, 13));
  const auto prior = std::make_shared<IsotropicPrior>(64, 1.0);
  DesignRunOptions o;
  o.steps = 0;
  const AngleSubset pilot({0, 5}, 10);
  const DesignResult r = run_design(prior, NoiseModel{0.1}, op, pilot, {}, {}, o);
  CHECK(r.selected.indices() == pilot.indices());
  CHECK(r.steps.empty());

  CHECK(equidistant_design(10, 10).indices() == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(equidistant_design(5, 200).indices() == std::vector<int>{0, 40, 80, 120, 160});
  CHECK(random_design(6, 50, 3).indices() == random_design(6, 50, 3).indices());
  CHECK(random_design(6, 50, 3).indices() != random_design(6, 50, 4).indices());
  CHECK_THROWS(equidistant_design(11, 10));
}

TEST_CASE("run_design: stochastic scores are reproducible per seed") {
  const RayTransform op(build_geometry(8, 8, 16, 13));
  const auto prior = std::make_shared<Matern12Prior>(8, 8, 1.0, 2.0);
  DesignRunOptions o;
  o.steps = 4;
  o.samples = 200;
  o.seed = 11;
  const AngleSubset pilot({0, 8}, 16);
  const DesignResult a = run_design(prior, NoiseModel{0.1}, op, pilot, {}, {}, o);
  const DesignResult b = run_design(prior, NoiseModel{0.1}, op, pilot, {}, {}, o);
  CHECK(a.selected.indices() == b.selected.indices());
  CHECK(a.steps.size() == 4);
  CHECK(a.steps[0].scores.angles.size() == 14);
  CHECK(a.steps[3].scores.angles.size() == 11);
}
