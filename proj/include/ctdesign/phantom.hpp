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

#ifndef CTDESIGN_PHANTOM_HPP_
#define CTDESIGN_PHANTOM_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "ctdesign/tomo_operator.hpp"

namespace ctdesign {

/// Row-major image; pixel (i, j) is values[i * width + j], row 0 at the top.
struct Image {
  int height = 0;
  int width = 0;
  Eigen::VectorXd values;
};

/// Distribution of rectangle phantoms sharing a per-image preferential
/// direction. Side lengths and centre offsets are fractions of the image size.
struct PhantomSpec {
  int height = 64;
  int width = 64;
  int n_rects = 3;
  double orientation_std_deg = 2.86;
  double min_side_frac = 0.15;
  double max_side_frac = 0.75;
  double centre_spread_frac = 0.25;  // centres uniform within +/- this fraction around the middle
  double min_intensity = 0.2;
  double max_intensity = 0.6;
  double clip_min = 0.0;
  double clip_max = 1.0;

  void validate() const;  // throws std::invalid_argument
};

struct Rectangle {
  double centre_x = 0.0;  // pixel units, origin at the image centre, y pointing up
  double centre_y = 0.0;
  double half_length = 0.0;
  double half_width = 0.0;
  double orientation_deg = 0.0;  // direction of the long axis
  double intensity = 0.0;
};

struct PhantomSample {
  Image image;
  double preferential_deg = 0.0;
  std::vector<Rectangle> rectangles;
  std::uint64_t seed = 0;
};

/// Draws one image. n_rects == 0 is accepted and yields an all-zero image.
PhantomSample sample_phantom(const PhantomSpec& spec, std::uint64_t seed);

/// Rasterises rectangles by pixel-centre membership, sums intensities and clips.
Image rasterise(const PhantomSpec& spec, const std::vector<Rectangle>& rectangles);

struct NoisySinogram {
  Eigen::VectorXd y;
  std::optional<Eigen::VectorXd> clean;
  double noise_std = 0.0;
  double noise_pct = 0.0;
  std::uint64_t seed = 0;
};

/// y = A x + eps with eps ~ N(0, noise_std^2 I), noise_std = noise_pct * mean|A x|.
NoisySinogram simulate_measurements(const Eigen::VectorXd& x, const RayTransform& op,
                                    const AngleSubset& subset, double noise_pct,
                                    std::uint64_t seed, bool keep_clean = true);

}  // namespace ctdesign

#endif  // CTDESIGN_PHANTOM_HPP_
