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

#ifndef CTDESIGN_TOMO_OPERATOR_HPP_
#define CTDESIGN_TOMO_OPERATOR_HPP_

#include <iosfwd>
#include <memory>
#include <mutex>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace ctdesign {

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Parallel-beam scan geometry on a square-pixel grid of unit side length.
///
/// The image occupies [-w/2, w/2) x [-h/2, h/2) with row 0 at the top. Ray p
/// at angle beta runs along (-sin beta, cos beta) at signed detector offset
/// s_p = (p - (d_p - 1) / 2) * detector_span / d_p, so that at 0 degrees rays
/// are vertical and the centre ray passes through the image centre.
struct ScanGeometry {
  int height = 0;
  int width = 0;
  int detector_count = 0;
  int n_candidates = 0;
  std::vector<double> angles_deg;
  double detector_span = 0.0;

  int pixel_count() const { return height * width; }
  double detector_spacing() const { return detector_span / detector_count; }
  double detector_offset(int p) const {
    return (p - 0.5 * (detector_count - 1)) * detector_spacing();
  }
};

/// Detector count used when none is given: ceil(sqrt(2) * max(h, w)) rounded
/// up to the next odd integer.
int default_detector_count(int height, int width);

/// Equispaced candidate angles k * 180 / n_candidates. The detector span is
/// max(ceil(hypot(h, w)), d_p), so every ray family covers the whole image and
/// the ray spacing is one pixel whenever d_p reaches the image diagonal.
ScanGeometry build_geometry(int height, int width, int n_candidates, int detector_count);

/// Ordered, duplicate-free list of chosen angle indices.
class AngleSubset {
 public:
  AngleSubset() = default;
  AngleSubset(std::vector<int> indices, int n_candidates);

  void push_back(int angle_index);
  bool contains(int angle_index) const;
  std::vector<int> complement() const;

  const std::vector<int>& indices() const { return indices_; }
  int size() const { return static_cast<int>(indices_.size()); }
  bool empty() const { return indices_.empty(); }
  int n_candidates() const { return n_candidates_; }
  int operator[](int k) const { return indices_[static_cast<std::size_t>(k)]; }

  /// First n entries, preserving order.
  AngleSubset prefix(int n) const;

 private:
  std::vector<int> indices_;
  std::vector<char> mask_;
  int n_candidates_ = 0;
};

struct AngleBlock {
  int angle_index = 0;
  SparseRows rows;  // d_p x d_x, entry (p, q) = chord length of ray p in pixel q
};

/// Exact ray/pixel intersection lengths (Siddon traversal) for one angle.
AngleBlock angle_block(const ScanGeometry& geometry, int angle_index);

/// Per-angle ray transform with a lazily built, thread-safe block cache.
class RayTransform {
 public:
  explicit RayTransform(ScanGeometry geometry);

  const ScanGeometry& geometry() const { return geometry_; }
  int detector_count() const { return geometry_.detector_count; }
  int pixel_count() const { return geometry_.pixel_count(); }

  const AngleBlock& block(int angle_index) const;

  Eigen::VectorXd forward(const AngleSubset& subset, const Eigen::VectorXd& x) const;
  Eigen::VectorXd adjoint(const AngleSubset& subset, const Eigen::VectorXd& y) const;

  /// Applies all angles of the subset to every column of X.
  Eigen::MatrixXd forward(const AngleSubset& subset, const Eigen::MatrixXd& X) const;

  /// Stacked (d_p |subset|) x d_x operator in subset order.
  SparseRows stacked(const AngleSubset& subset) const;

  /// Stacked operator as (row, col, value) lines, zero-based indices.
  void export_triplets(const AngleSubset& subset, std::ostream& out) const;

 private:
  ScanGeometry geometry_;
  mutable std::mutex mutex_;
  mutable std::vector<std::unique_ptr<const AngleBlock>> cache_;
};

/// Convenience wrappers matching the free-function interface.
Eigen::VectorXd forward(const RayTransform& op, const AngleSubset& subset, const Eigen::VectorXd& x);
Eigen::VectorXd adjoint(const RayTransform& op, const AngleSubset& subset, const Eigen::VectorXd& y);

}  // namespace ctdesign

#endif  // CTDESIGN_TOMO_OPERATOR_HPP_
