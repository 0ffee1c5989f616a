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

#include "ctdesign/design.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "ctdesign/errors.hpp"

namespace ctdesign {

std::string to_string(Objective objective) { return objective == Objective::EIG ? "eig" : "ese"; }

Objective parse_objective(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "eig") return Objective::EIG;
  if (lower == "ese") return Objective::ESE;
  throw std::invalid_argument("unknown objective '" + name + "' (expected eig or ese)");
}

SparseRows all_candidate_rows(const RayTransform& op) {
  std::vector<int> all(static_cast<std::size_t>(op.geometry().n_candidates));
  std::iota(all.begin(), all.end(), 0);
  return op.stacked(AngleSubset(all, op.geometry().n_candidates));
}

namespace {

// A_all Sigma_xx A_beta^T.
Eigen::MatrixXd cross_columns(const DesignState& state, const SparseRows& all_rows, int angle_index) {
  const SparseRows& block = state.op->block(angle_index).rows;
  const Eigen::MatrixXd Bt = Eigen::MatrixXd(block).transpose();
  return all_rows * state.prior->apply(Bt);
}

Eigen::MatrixXd chosen_rows(const DesignState& state, const Eigen::MatrixXd& m) {
  const int dp = state.detector_count();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(dp) * state.chosen.size(), m.cols());
  for (int k = 0; k < state.chosen.size(); ++k)
    out.middleRows(static_cast<Eigen::Index>(k) * dp, dp) =
        m.middleRows(static_cast<Eigen::Index>(state.chosen[k]) * dp, dp);
  return out;
}

// Factorises Sigma_yy, escalating the jitter as needed. Updates state.factor/jitter.
void refactorise(DesignState& state, double minimum_jitter) {
  Eigen::MatrixXd cov = state.measurement_covariance();
  const double mean_diag = cov.diagonal().mean();
  std::vector<double> schedule;
  const JitterOptions& opt = state.jitter_options;
  if (opt.try_unjittered && minimum_jitter <= 0.0) schedule.push_back(0.0);
  for (double f = opt.start;; f *= 2.0) {
    const double eps = std::min(f, opt.max) * mean_diag;
    if (eps >= minimum_jitter) schedule.push_back(eps);
    if (f >= opt.max) break;
  }
  for (double eps : schedule) {
    Eigen::MatrixXd m = cov;
    m.diagonal().array() += eps;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) {
      state.factor = llt.matrixL();
      state.jitter = eps;
      return;
    }
  }
  throw NumericalError("measurement covariance of size " + std::to_string(cov.rows()) +
                       " is indefinite even with the maximum jitter; increase the jitter bound");
}

}  // namespace

Eigen::MatrixXd DesignState::measurement_covariance() const {
  Eigen::MatrixXd cov = chosen_rows(*this, cross);
  cov = 0.5 * (cov + cov.transpose()).eval();
  cov.diagonal().array() += noise.variance;
  return cov;
}

Eigen::MatrixXd DesignState::cross_rows(int angle_index) const {
  const int dp = detector_count();
  return cross.middleRows(static_cast<Eigen::Index>(angle_index) * dp, dp);
}

DesignState init_state(std::shared_ptr<const PriorCovariance> prior, NoiseModel noise, const RayTransform& op,
                       const AngleSubset& pilot, const Eigen::VectorXd& pilot_measurements, JitterOptions jitter) {
  if (!prior) throw std::invalid_argument("init_state: null prior");
  if (pilot.empty()) throw std::invalid_argument("init_state: pilot subset is empty");
  if (prior->dimension() != op.pixel_count()) throw std::invalid_argument("init_state: prior/operator size mismatch");
  if (!(noise.variance >= 0.0)) throw std::invalid_argument("init_state: negative noise variance");
  const int dp = op.detector_count();
  if (pilot_measurements.size() != 0 && pilot_measurements.size() != static_cast<Eigen::Index>(dp) * pilot.size())
    throw std::invalid_argument("init_state: pilot measurement length mismatch");

  DesignState state;
  state.prior = std::move(prior);
  state.op = &op;
  state.noise = noise;
  state.jitter_options = jitter;
  state.chosen = pilot;
  state.measurements = pilot_measurements;
  state.all_rows = std::make_shared<const SparseRows>(all_candidate_rows(op));
  state.cross.resize(state.all_rows->rows(), static_cast<Eigen::Index>(dp) * pilot.size());
  for (int k = 0; k < pilot.size(); ++k)
    state.cross.middleCols(static_cast<Eigen::Index>(k) * dp, dp) = cross_columns(state, *state.all_rows, pilot[k]);
  refactorise(state, 0.0);
  state.jitter_trace.push_back(state.jitter);
  return state;
}

void update_state(DesignState& state, int angle_index, const Eigen::VectorXd& angle_measurements) {
  if (state.chosen.contains(angle_index)) throw std::invalid_argument("update_state: angle already chosen");
  const int dp = state.detector_count();
  if (angle_measurements.size() != 0 && angle_measurements.size() != dp)
    throw std::invalid_argument("update_state: measurement length mismatch");
  if ((state.measurements.size() == 0) != (angle_measurements.size() == 0))
    throw std::invalid_argument("update_state: measurements must be given for every angle or for none");

  const Eigen::MatrixXd C = cross_columns(state, *state.all_rows, angle_index);
  const Eigen::Index n_old = state.cross.cols();
  Eigen::MatrixXd B = chosen_rows(state, C);                                         // n_old x dp
  Eigen::MatrixXd D = C.middleRows(static_cast<Eigen::Index>(angle_index) * dp, dp);  // dp x dp
  D = 0.5 * (D + D.transpose()).eval();
  D.diagonal().array() += state.noise.variance + state.jitter;

  state.chosen.push_back(angle_index);
  state.cross.conservativeResize(Eigen::NoChange, n_old + dp);
  state.cross.rightCols(dp) = C;
  if (angle_measurements.size() != 0) {
    state.measurements.conservativeResize(state.measurements.size() + dp);
    state.measurements.tail(dp) = angle_measurements;
  }
  ++state.step;

  const Eigen::MatrixXd L21 = state.factor.triangularView<Eigen::Lower>().solve(B).transpose();  // dp x n_old
  Eigen::MatrixXd S = D - L21 * L21.transpose();
  S = 0.5 * (S + S.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n_old + dp, n_old + dp);
    L.topLeftCorner(n_old, n_old) = state.factor;
    L.bottomLeftCorner(dp, n_old) = L21;
    L.bottomRightCorner(dp, dp) = llt.matrixL();
    state.factor = std::move(L);
  } else {
    const double mean_diag = state.measurement_covariance().diagonal().mean();
    refactorise(state, std::max(state.jitter * 2.0, state.jitter_options.start * mean_diag));
  }
  state.jitter_trace.push_back(state.jitter);
}

int PseudoSampleBatch::chunk_of(int angle_index) const {
  auto it = std::lower_bound(angles.begin(), angles.end(), angle_index);
  if (it == angles.end() || *it != angle_index)
    throw std::invalid_argument("angle " + std::to_string(angle_index) + " is not in the sample batch");
  return static_cast<int>(it - angles.begin());
}

PseudoSampleBatch matheron_samples(const DesignState& state, int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("matheron_samples: need at least one sample");
  const std::vector<int> unused = state.chosen.complement();
  if (unused.empty()) throw std::invalid_argument("matheron_samples: no unused angles");
  const int dp = state.detector_count();

  Rng rng(seed);
  const Eigen::MatrixXd X = state.prior->sample(count, rng);
  const Eigen::MatrixXd Y_all = *state.all_rows * X;
  Eigen::MatrixXd R = standard_normal(state.cross.cols(), count, rng) * std::sqrt(state.effective_noise_variance());
  R += chosen_rows(state, Y_all);
  // W = Sigma_yy^-1 (eta + A x)
  state.factor.triangularView<Eigen::Lower>().solveInPlace(R);
  state.factor.transpose().triangularView<Eigen::Upper>().solveInPlace(R);
  if (!R.allFinite()) throw NumericalError("matheron_samples: triangular solve failed; try a larger jitter");

  PseudoSampleBatch batch;
  batch.angles = unused;
  batch.detector_count = dp;
  batch.seed = seed;
  batch.samples.resize(static_cast<Eigen::Index>(dp) * unused.size(), count);
  for (std::size_t k = 0; k < unused.size(); ++k) {
    const Eigen::Index src = static_cast<Eigen::Index>(unused[k]) * dp;
    const Eigen::Index dst = static_cast<Eigen::Index>(k) * dp;
    batch.samples.middleRows(dst, dp) = Y_all.middleRows(src, dp);
    batch.samples.middleRows(dst, dp).noalias() -= state.cross.middleRows(src, dp) * R;
  }
  return batch;
}

Eigen::MatrixXd estimate_block(const PseudoSampleBatch& batch, int angle_index) {
  const int dp = batch.detector_count;
  const auto Y = batch.samples.middleRows(static_cast<Eigen::Index>(batch.chunk_of(angle_index)) * dp, dp);
  Eigen::MatrixXd M = Y * Y.transpose() / static_cast<double>(batch.sample_count());
  return 0.5 * (M + M.transpose());
}

Eigen::MatrixXd posterior_block(const DesignState& state, int angle_index) {
  const SparseRows& A = state.op->block(angle_index).rows;
  const Eigen::MatrixXd At = Eigen::MatrixXd(A).transpose();
  Eigen::MatrixXd prior_block = A * state.prior->apply(At);
  Eigen::MatrixXd C = state.cross_rows(angle_index).transpose();  // n_chosen x dp
  state.factor.triangularView<Eigen::Lower>().solveInPlace(C);
  Eigen::MatrixXd M = prior_block - C.transpose() * C;
  return 0.5 * (M + M.transpose());
}

double eig_score(const Eigen::MatrixXd& block, double noise_variance) {
  if (block.rows() != block.cols()) throw std::invalid_argument("eig_score: block must be square");
  Eigen::MatrixXd m = 0.5 * (block + block.transpose());
  m.diagonal().array() += noise_variance;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError("eig_score: sigma^2 I + block is not positive definite");
  const double v = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  if (!std::isfinite(v)) throw NumericalError("eig_score: non-finite log-determinant");
  return v;
}

double ese_score(const Eigen::MatrixXd& block) {
  if (block.rows() != block.cols()) throw std::invalid_argument("ese_score: block must be square");
  return block.trace();
}

AcquisitionScores score_batch(const PseudoSampleBatch& batch, Objective objective, double noise_variance) {
  AcquisitionScores s;
  s.objective = objective;
  s.sample_count = batch.sample_count();
  s.angles = batch.angles;
  for (int a : batch.angles) {
    const Eigen::MatrixXd block = estimate_block(batch, a);
    s.values.push_back(objective == Objective::EIG ? eig_score(block, noise_variance) : ese_score(block));
  }
  return s;
}

AcquisitionScores score_exact(const DesignState& state, Objective objective) {
  AcquisitionScores s;
  s.objective = objective;
  s.angles = state.chosen.complement();
  for (int a : s.angles) {
    const Eigen::MatrixXd block = posterior_block(state, a);
    s.values.push_back(objective == Objective::EIG ? eig_score(block, state.effective_noise_variance())
                                                   : ese_score(block));
  }
  return s;
}

int select_next(const AcquisitionScores& scores) {
  if (scores.angles.empty() || scores.angles.size() != scores.values.size())
    throw std::invalid_argument("select_next: empty or inconsistent scores");
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.values.size(); ++k) {
    const bool better = scores.values[k] > scores.values[best] ||
                        (scores.values[k] == scores.values[best] && scores.angles[k] < scores.angles[best]);
    if (better) best = k;
  }
  return scores.angles[best];
}

DesignResult run_design(std::shared_ptr<const PriorCovariance> prior, NoiseModel noise, const RayTransform& op,
                        const AngleSubset& pilot, const Eigen::VectorXd& pilot_measurements,
                        const MeasurementSource& source, const DesignRunOptions& options,
                        const PriorRefresher& refresh) {
  if (options.steps < 0 || options.samples < 1) throw std::invalid_argument("run_design: invalid options");
  if (options.steps > op.geometry().n_candidates - pilot.size())
    throw std::invalid_argument("run_design: more steps than unused angles");
  DesignState state = init_state(std::move(prior), noise, op, pilot, pilot_measurements, options.jitter);
  DesignResult result;
  for (int t = 0; t < options.steps; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const PseudoSampleBatch batch =
        matheron_samples(state, options.samples, derive_seed(options.seed, {static_cast<std::uint64_t>(t)}));
    StepRecord rec;
    rec.step = t;
    rec.scores = score_batch(batch, options.objective, state.effective_noise_variance());
    rec.angle_index = select_next(rec.scores);
    rec.angle_deg = op.geometry().angles_deg[static_cast<std::size_t>(rec.angle_index)];
    for (std::size_t k = 0; k < rec.scores.angles.size(); ++k)
      if (rec.scores.angles[k] == rec.angle_index) rec.score = rec.scores.values[k];
    Eigen::VectorXd y_new;
    if (source) y_new = source(rec.angle_index);
    update_state(state, rec.angle_index, y_new);
    if (refresh && options.retrain_every > 0 && (t + 1) % options.retrain_every == 0 && t + 1 < options.steps) {
      std::shared_ptr<const PriorCovariance> next = refresh(state.chosen, state.measurements);
      state = init_state(std::move(next), state.noise, op, state.chosen, state.measurements, options.jitter);
      rec.refreshed_prior = true;
    }
    rec.jitter = state.jitter;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.steps.push_back(std::move(rec));
  }
  result.selected = state.chosen;
  result.jitter_trace = state.jitter_trace;
  return result;
}

AngleSubset equidistant_design(int n, int n_candidates) {
  if (n < 0 || n > n_candidates) throw std::invalid_argument("equidistant_design: n out of range");
  std::vector<int> idx;
  for (int k = 0; k < n; ++k)
    idx.push_back(static_cast<int>((static_cast<long long>(k) * n_candidates) / n));
  return AngleSubset(idx, n_candidates);
}

AngleSubset random_design(int n, int n_candidates, std::uint64_t seed) {
  if (n < 0 || n > n_candidates) throw std::invalid_argument("random_design: n out of range");
  std::vector<int> idx(static_cast<std::size_t>(n_candidates));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle.
  for (int i = n_candidates - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(n));
  return AngleSubset(idx, n_candidates);
}

}  // namespace ctdesign
