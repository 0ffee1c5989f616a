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

#ifndef CTDESIGN_CIRCULANT_EMBEDDING_HPP_
#define CTDESIGN_CIRCULANT_EMBEDDING_HPP_

#include <functional>
#include <memory>

#include <Eigen/Core>

#include "ctdesign/rng.hpp"

namespace ctdesign {

/// Block-circulant embedding of a stationary, reflection-symmetric covariance
/// on an h x w pixel grid.
///
/// multiply() is exact for any embedding size: it is a zero-padded circular
/// convolution. Sampling needs a non-negative embedding spectrum; the
/// embedding is doubled (up to max_enlargements times) until the most negative
/// eigenvalue is within negative_tolerance * max eigenvalue, after which the
/// remaining negative part is clipped to zero and its relative mass recorded.
class CirculantEmbedding {
 public:
  using Kernel = std::function<double(int di, int dj)>;

  struct Options {
    int max_enlargements = 2;
    double negative_tolerance = 1e-10;
    double max_clipped_fraction = 0.05;  // NumericalError beyond this
  };

  CirculantEmbedding(int height, int width, const Kernel& kernel, Options options);
  CirculantEmbedding(int height, int width, const Kernel& kernel)
      : CirculantEmbedding(height, width, kernel, Options{}) {}
  ~CirculantEmbedding();
  CirculantEmbedding(const CirculantEmbedding&) = delete;
  CirculantEmbedding& operator=(const CirculantEmbedding&) = delete;

  Eigen::VectorXd multiply(const Eigen::VectorXd& v) const;

  /// count samples of N(0, K), one per column.
  Eigen::MatrixXd sample(int count, Rng& rng) const;

  int embed_height() const;
  int embed_width() const;
  int enlargements() const;
  double clipped_fraction() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ctdesign

#endif  // CTDESIGN_CIRCULANT_EMBEDDING_HPP_
