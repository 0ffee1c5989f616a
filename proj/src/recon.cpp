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

#include "ctdesign/recon.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ctdesign/errors.hpp"
#include "ctdesign/tv.hpp"

namespace ctdesign {

ScheduleEntry schedule_lookup(const Schedule& schedule, int n_angles) {
  if (schedule.empty()) throw std::invalid_argument("schedule_lookup: empty schedule");
  for (const ScheduleEntry& e : schedule)
    if (n_angles <= e.max_angles) return e;
  return schedule.back();
}

namespace {

bool is_ten_percent(double noise_pct) {
  if (std::abs(noise_pct - 0.05) < 1e-9) return false;
  if (std::abs(noise_pct - 0.10) < 1e-9) return true;
  throw std::invalid_argument("reconstruction schedules exist for 5% and 10% noise only");
}

}  // namespace

Schedule full_scale_tv_schedule(double noise_pct) {
  if (is_ten_percent(noise_pct)) return {{5, 1e-2, 60000}, {15, 1e-2, 30000}, {30, 1e-2, 10000}, {40, 3e-3, 10000}};
  return {{5, 1e-2, 60000}, {15, 3e-3, 30000}, {30, 3e-3, 10000}, {40, 3e-3, 10000}};
}

Schedule full_scale_dip_schedule(double noise_pct) {
  if (is_ten_percent(noise_pct)) return {{5, 1e-2, 11000}, {15, 1e-2, 7500}, {30, 3e-3, 12000}, {40, 3e-3, 7100}};
  return {{5, 3e-3, 19000}, {15, 3e-3, 9400}, {30, 3e-3, 12000}, {40, 1e-3, 13000}};
}

Schedule desk_tv_schedule(double noise_pct) {
  if (is_ten_percent(noise_pct)) return {{5, 6.0, 2000}, {15, 6.0, 2000}, {30, 10.0, 2000}, {40, 10.0, 2000}};
  return {{5, 3.0, 2000}, {15, 3.0, 2000}, {30, 3.0, 2000}, {40, 3.0, 2000}};
}

Schedule desk_dip_schedule(double noise_pct) {
  if (is_ten_percent(noise_pct)) return {{5, 6.0, 3000}, {15, 6.0, 3000}, {30, 6.0, 3000}, {40, 6.0, 3000}};
  return {{5, 3.0, 3000}, {15, 3.0, 3000}, {30, 3.0, 3000}, {40, 3.0, 3000}};
}

void ReconConfig::validate() const {
  if (!(tv_strength >= 0.0)) throw std::invalid_argument("ReconConfig: lambda must be >= 0");
  if (iterations < 0) throw std::invalid_argument("ReconConfig: iterations must be >= 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("ReconConfig: learning rate must be positive");
  if (!(tv_smoothing > 0.0)) throw std::invalid_argument("ReconConfig: TV smoothing must be positive");
  if (eval_every < 1) throw std::invalid_argument("ReconConfig: eval_every must be >= 1");
  if (!(data_range > 0.0)) throw std::invalid_argument("ReconConfig: data_range must be positive");
}

ReconConfig ReconConfig::with(const ScheduleEntry& entry) const {
  ReconConfig c = *this;
  c.tv_strength = entry.tv_strength;
  c.iterations = entry.iterations;
  return c;
}

double psnr(const Eigen::VectorXd& x, const Eigen::VectorXd& truth, double data_range) {
  if (x.size() != truth.size() || x.size() == 0) throw std::invalid_argument("psnr: shape mismatch");
  if (!(data_range > 0.0)) throw std::invalid_argument("psnr: data_range must be positive");
  const double mse = (x - truth).squaredNorm() / static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

double psnr(const Image& x, const Image& truth, double data_range) {
  if (x.height != truth.height || x.width != truth.width) throw std::invalid_argument("psnr: shape mismatch");
  return psnr(x.values, truth.values, data_range);
}

ReconReport tv_reconstruct(const SparseRows& A, const Eigen::VectorXd& y, int height, int width,
                           const ReconConfig& config, const Image* truth) {
  config.validate();
  if (A.rows() != y.size()) throw std::invalid_argument("tv_reconstruct: measurement length mismatch");
  if (A.cols() != static_cast<Eigen::Index>(height) * width)
    throw std::invalid_argument("tv_reconstruct: operator/image size mismatch");
  const double lambda = config.tv_strength;

  Eigen::VectorXd grad_tv;
  auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    const Eigen::VectorXd r = A * x - y;
    grad = 2.0 * (A.transpose() * r);
    double f = r.squaredNorm();
    if (lambda > 0.0) {
      f += lambda * smoothed_tv(x, height, width, config.tv_smoothing, &grad_tv);
      grad += lambda * grad_tv;
    }
    return f;
  };

  // Scaled adjoint start.
  const Eigen::VectorXd b = A.transpose() * y;
  const Eigen::VectorXd Ab = A * b;
  const double denom = Ab.squaredNorm();
  Eigen::VectorXd x = denom > 0.0 ? Eigen::VectorXd((y.dot(Ab) / denom) * b) : Eigen::VectorXd::Zero(A.cols());

  ReconReport report;
  report.data_range = config.data_range;
  Eigen::VectorXd g, g_trial, m = Eigen::VectorXd::Zero(x.size()), v = Eigen::VectorXd::Zero(x.size());
  double f = objective(x, g);
  report.objective_trace.push_back(f);
  if (!std::isfinite(f)) throw OptimisationError("tv_reconstruct: non-finite initial objective", report.objective_trace);
  double lr = config.learning_rate;
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;
  for (int it = 0; it < config.iterations; ++it) {
    b1t *= beta1;
    b2t *= beta2;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseAbs2();
    const Eigen::VectorXd step =
        (m.array() / (1.0 - b1t)) / ((v.array() / (1.0 - b2t)).sqrt() + eps);
    const Eigen::VectorXd trial = x - lr * step;
    const double f_trial = objective(trial, g_trial);
    if (!std::isfinite(f_trial) && lr < 1e-300)
      throw OptimisationError("tv_reconstruct: objective diverged", report.objective_trace);
    if (f_trial <= f) {
      x = trial;
      f = f_trial;
      g.swap(g_trial);
      lr *= 1.05;
    } else {
      lr *= 0.5;
    }
    report.objective_trace.push_back(f);
  }
  report.reconstruction = Image{height, width, x};
  if (truth) report.psnr = psnr(report.reconstruction, *truth, config.data_range);
  report.final_psnr = report.psnr;
  return report;
}

ReconReport tv_reconstruct(const RayTransform& op, const AngleSubset& subset, const Eigen::VectorXd& y,
                           const ReconConfig& config, const Image* truth) {
  return tv_reconstruct(op.stacked(subset), y, op.geometry().height, op.geometry().width, config, truth);
}

ReconReport dip_reconstruct(const UNet& net, const SparseRows& A, const Eigen::VectorXd& y,
                            const ReconConfig& config, const Image* truth) {
  config.validate();
  const int h = net.spec().height, w = net.spec().width;
  ReconReport report;
  report.data_range = config.data_range;
  Eigen::VectorXd best;
  double best_psnr = -std::numeric_limits<double>::infinity();

  TrainOptions opt;
  opt.tv_strength = config.tv_strength;
  opt.iterations = config.iterations;
  opt.learning_rate = config.learning_rate;
  opt.tv_smoothing = config.tv_smoothing;
  opt.seed = config.seed;
  opt.callback_every = config.eval_every;
  if (truth) {
    if (truth->height != h || truth->width != w) throw std::invalid_argument("dip_reconstruct: truth shape mismatch");
    opt.callback = [&](int it, const Eigen::VectorXd& x) {
      if (!report.psnr_iterations.empty() && report.psnr_iterations.back() == it) return;
      const double p = psnr(x, truth->values, config.data_range);
      report.psnr_iterations.push_back(it);
      report.psnr_trace.push_back(p);
      if (p > best_psnr) {
        best_psnr = p;
        best = x;
      }
    };
  }
  TrainedNetwork trained = train_dip(net, A, y, opt);
  report.objective_trace = trained.loss_trace;
  if (truth) {
    report.reconstruction = Image{h, w, best};
    report.psnr = best_psnr;
    report.final_psnr = report.psnr_trace.back();
  } else {
    report.reconstruction = Image{h, w, net.forward(trained.theta)};
  }
  return report;
}

ReconReport dip_reconstruct(const UNet& net, const RayTransform& op, const AngleSubset& subset,
                            const Eigen::VectorXd& y, const ReconConfig& config, const Image* truth) {
  return dip_reconstruct(net, op.stacked(subset), y, config, truth);
}

}  // namespace ctdesign
