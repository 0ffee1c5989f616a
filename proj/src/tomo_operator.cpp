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

#include "ctdesign/tomo_operator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>

namespace ctdesign {

int default_detector_count(int height, int width) {
  int d = static_cast<int>(std::ceil(std::numbers::sqrt2 * std::max(height, width) - 1e-9));
  if (d % 2 == 0) ++d;
  return d;
}

ScanGeometry build_geometry(int height, int width, int n_candidates, int detector_count) {
  if (height < 1 || width < 1 || n_candidates < 1 || detector_count < 1)
    throw std::invalid_argument("build_geometry: dimensions must be positive");
  ScanGeometry g;
  g.height = height;
  g.width = width;
  g.n_candidates = n_candidates;
  g.detector_count = detector_count;
  g.angles_deg.resize(static_cast<std::size_t>(n_candidates));
  for (int k = 0; k < n_candidates; ++k) g.angles_deg[k] = 180.0 * k / n_candidates;
  const double diagonal = std::hypot(static_cast<double>(height), static_cast<double>(width));
  g.detector_span = std::max(std::ceil(diagonal), static_cast<double>(detector_count));
  return g;
}

// --- AngleSubset ------------------------------------------------------------

AngleSubset::AngleSubset(std::vector<int> indices, int n_candidates)
    : mask_(static_cast<std::size_t>(n_candidates), 0), n_candidates_(n_candidates) {
  if (n_candidates < 1) throw std::invalid_argument("AngleSubset: n_candidates must be positive");
  indices_.reserve(indices.size());
  for (int a : indices) push_back(a);
}

void AngleSubset::push_back(int angle_index) {
  if (angle_index < 0 || angle_index >= n_candidates_)
    throw std::invalid_argument("AngleSubset: angle index " + std::to_string(angle_index) +
                                " out of range");
  if (mask_[angle_index])
    throw std::invalid_argument("AngleSubset: duplicate angle index " + std::to_string(angle_index));
  mask_[angle_index] = 1;
  indices_.push_back(angle_index);
}

bool AngleSubset::contains(int angle_index) const {
  return angle_index >= 0 && angle_index < n_candidates_ && mask_[angle_index];
}

std::vector<int> AngleSubset::complement() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n_candidates_) - indices_.size());
  for (int a = 0; a < n_candidates_; ++a)
    if (!mask_[a]) out.push_back(a);
  return out;
}

AngleSubset AngleSubset::prefix(int n) const {
  if (n < 0 || n > size()) throw std::invalid_argument("AngleSubset::prefix: bad length");
  return AngleSubset(std::vector<int>(indices_.begin(), indices_.begin() + n), n_candidates_);
}

// --- Siddon traversal -------------------------------------------------------

namespace {

void snap(double& v) {
  if (std::abs(v) < 1e-12) v = 0.0;
}

// Appends (pixel, length) pairs for one ray; merges repeated pixels.
void trace_ray(const ScanGeometry& g, double c, double s, double offset,
               std::vector<std::pair<int, double>>& out) {
  out.clear();
  const double half_w = 0.5 * g.width;
  const double half_h = 0.5 * g.height;
  const double ox = offset * c, oy = offset * s;
  const double dx = -s, dy = c;

  double t_lo = -INFINITY, t_hi = INFINITY;
  if (dx != 0.0) {
    const double t1 = (-half_w - ox) / dx, t2 = (half_w - ox) / dx;
    t_lo = std::max(t_lo, std::min(t1, t2));
    t_hi = std::min(t_hi, std::max(t1, t2));
  } else if (ox < -half_w || ox >= half_w) {
    return;
  }
  if (dy != 0.0) {
    const double t1 = (-half_h - oy) / dy, t2 = (half_h - oy) / dy;
    t_lo = std::max(t_lo, std::min(t1, t2));
    t_hi = std::min(t_hi, std::max(t1, t2));
  } else if (oy < -half_h || oy >= half_h) {
    return;
  }
  if (!(t_hi > t_lo)) return;

  std::vector<double> ts;
  ts.reserve(static_cast<std::size_t>(g.width + g.height + 2));
  ts.push_back(t_lo);
  ts.push_back(t_hi);
  if (dx != 0.0) {
    for (int k = 0; k <= g.width; ++k) {
      const double t = (-half_w + k - ox) / dx;
      if (t > t_lo && t < t_hi) ts.push_back(t);
    }
  }
  if (dy != 0.0) {
    for (int k = 0; k <= g.height; ++k) {
      const double t = (-half_h + k - oy) / dy;
      if (t > t_lo && t < t_hi) ts.push_back(t);
    }
  }
  std::sort(ts.begin(), ts.end());

  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const double len = ts[k + 1] - ts[k];
    if (len <= 1e-12) continue;
    const double tm = 0.5 * (ts[k] + ts[k + 1]);
    const int col = static_cast<int>(std::floor(ox + tm * dx + half_w));
    const int row_up = static_cast<int>(std::floor(oy + tm * dy + half_h));
    if (col < 0 || col >= g.width || row_up < 0 || row_up >= g.height) continue;
    const int pixel = (g.height - 1 - row_up) * g.width + col;
    if (!out.empty() && out.back().first == pixel)
      out.back().second += len;
    else
      out.emplace_back(pixel, len);
  }
}

}  // namespace

AngleBlock angle_block(const ScanGeometry& geometry, int angle_index) {
  if (angle_index < 0 || angle_index >= geometry.n_candidates)
    throw std::invalid_argument("angle_block: angle index " + std::to_string(angle_index) +
                                " out of range");
  const double beta = geometry.angles_deg[angle_index] * std::numbers::pi / 180.0;
  double c = std::cos(beta), s = std::sin(beta);
  snap(c);
  snap(s);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(geometry.detector_count) *
                   (geometry.width + geometry.height));
  std::vector<std::pair<int, double>> hits;
  for (int p = 0; p < geometry.detector_count; ++p) {
    trace_ray(geometry, c, s, geometry.detector_offset(p), hits);
    for (const auto& [pixel, len] : hits) triplets.emplace_back(p, pixel, len);
  }
  AngleBlock block;
  block.angle_index = angle_index;
  block.rows.resize(geometry.detector_count, geometry.pixel_count());
  block.rows.setFromTriplets(triplets.begin(), triplets.end());
  block.rows.makeCompressed();
  return block;
}

// --- RayTransform -------------------------------------------------------------

RayTransform::RayTransform(ScanGeometry geometry)
    : geometry_(std::move(geometry)),
      cache_(static_cast<std::size_t>(geometry_.n_candidates)) {}

const AngleBlock& RayTransform::block(int angle_index) const {
  if (angle_index < 0 || angle_index >= geometry_.n_candidates)
    throw std::invalid_argument("RayTransform::block: angle index out of range");
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (cache_[angle_index]) return *cache_[angle_index];
  }
  auto built = std::make_unique<const AngleBlock>(angle_block(geometry_, angle_index));
  std::lock_guard<std::mutex> lock(mutex_);
  if (!cache_[angle_index]) cache_[angle_index] = std::move(built);
  return *cache_[angle_index];
}

Eigen::VectorXd RayTransform::forward(const AngleSubset& subset, const Eigen::VectorXd& x) const {
  if (x.size() != pixel_count())
    throw std::invalid_argument("forward: image length " + std::to_string(x.size()) +
                                " does not match d_x = " + std::to_string(pixel_count()));
  const int dp = detector_count();
  Eigen::VectorXd y(static_cast<Eigen::Index>(dp) * subset.size());
  for (int k = 0; k < subset.size(); ++k) y.segment(k * dp, dp) = block(subset[k]).rows * x;
  return y;
}

Eigen::MatrixXd RayTransform::forward(const AngleSubset& subset, const Eigen::MatrixXd& X) const {
  if (X.rows() != pixel_count()) throw std::invalid_argument("forward: image length mismatch");
  const int dp = detector_count();
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(dp) * subset.size(), X.cols());
  for (int k = 0; k < subset.size(); ++k) Y.middleRows(k * dp, dp) = block(subset[k]).rows * X;
  return Y;
}

Eigen::VectorXd RayTransform::adjoint(const AngleSubset& subset, const Eigen::VectorXd& y) const {
  const int dp = detector_count();
  if (y.size() != static_cast<Eigen::Index>(dp) * subset.size())
    throw std::invalid_argument("adjoint: measurement length " + std::to_string(y.size()) +
                                " does not match d_p * |subset| = " +
                                std::to_string(dp * subset.size()));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(pixel_count());
  for (int k = 0; k < subset.size(); ++k)
    x.noalias() += block(subset[k]).rows.transpose() * y.segment(k * dp, dp);
  return x;
}

SparseRows RayTransform::stacked(const AngleSubset& subset) const {
  const int dp = detector_count();
  std::vector<Eigen::Triplet<double>> triplets;
  for (int k = 0; k < subset.size(); ++k) {
    const SparseRows& rows = block(subset[k]).rows;
    for (int r = 0; r < rows.outerSize(); ++r)
      for (SparseRows::InnerIterator it(rows, r); it; ++it)
        triplets.emplace_back(k * dp + r, static_cast<int>(it.col()), it.value());
  }
  SparseRows out(static_cast<Eigen::Index>(dp) * subset.size(), pixel_count());
  out.setFromTriplets(triplets.begin(), triplets.end());
  out.makeCompressed();
  return out;
}

void RayTransform::export_triplets(const AngleSubset& subset, std::ostream& out) const {
  const SparseRows a = stacked(subset);
  out.precision(17);
  for (int r = 0; r < a.outerSize(); ++r)
    for (SparseRows::InnerIterator it(a, r); it; ++it)
      out << r << ' ' << it.col() << ' ' << it.value() << '\n';
}

Eigen::VectorXd forward(const RayTransform& op, const AngleSubset& subset, const Eigen::VectorXd& x) {
  return op.forward(subset, x);
}

Eigen::VectorXd adjoint(const RayTransform& op, const AngleSubset& subset, const Eigen::VectorXd& y) {
  return op.adjoint(subset, y);
}

}  // namespace ctdesign
