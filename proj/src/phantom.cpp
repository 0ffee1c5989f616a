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

#include "ctdesign/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "ctdesign/rng.hpp"

namespace ctdesign {

void PhantomSpec::validate() const {
  if (height < 1 || width < 1) throw std::invalid_argument("PhantomSpec: image size must be positive");
  if (n_rects < 0) throw std::invalid_argument("PhantomSpec: n_rects must be non-negative");
  if (!(orientation_std_deg >= 0.0))
    throw std::invalid_argument("PhantomSpec: orientation_std_deg must be non-negative");
  if (!(min_side_frac > 0.0 && max_side_frac >= min_side_frac))
    throw std::invalid_argument("PhantomSpec: invalid side-length range");
  if (!(centre_spread_frac >= 0.0)) throw std::invalid_argument("PhantomSpec: invalid centre spread");
  if (!std::isfinite(min_intensity) || !std::isfinite(max_intensity) || max_intensity < min_intensity)
    throw std::invalid_argument("PhantomSpec: invalid intensity range");
  if (!(clip_max > clip_min) || clip_min < 0.0)
    throw std::invalid_argument("PhantomSpec: invalid clip range");
}

Image rasterise(const PhantomSpec& spec, const std::vector<Rectangle>& rectangles) {
  Image img;
  img.height = spec.height;
  img.width = spec.width;
  img.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.height) * spec.width);
  for (const Rectangle& r : rectangles) {
    const double phi = r.orientation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(phi), s = std::sin(phi);
    for (int i = 0; i < spec.height; ++i) {
      const double y = 0.5 * (spec.height - 1) - i - r.centre_y;
      for (int j = 0; j < spec.width; ++j) {
        const double x = j - 0.5 * (spec.width - 1) - r.centre_x;
        const double u = x * c + y * s;
        const double v = -x * s + y * c;
        if (std::abs(u) <= r.half_length && std::abs(v) <= r.half_width)
          img.values[i * spec.width + j] += r.intensity;
      }
    }
  }
  img.values = img.values.cwiseMax(spec.clip_min).cwiseMin(spec.clip_max);
  return img;
}

PhantomSample sample_phantom(const PhantomSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, {0x70686eULL}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, spec.orientation_std_deg);

  PhantomSample out;
  out.seed = seed;
  out.preferential_deg = 180.0 * unit(rng);
  const double size = std::min(spec.height, spec.width);
  for (int k = 0; k < spec.n_rects; ++k) {
    Rectangle r;
    r.orientation_deg = out.preferential_deg + jitter(rng);
    const double a = spec.min_side_frac + (spec.max_side_frac - spec.min_side_frac) * unit(rng);
    const double b = spec.min_side_frac + (spec.max_side_frac - spec.min_side_frac) * unit(rng);
    r.half_length = 0.5 * size * a;
    r.half_width = 0.5 * size * b;
    r.centre_x = spec.width * spec.centre_spread_frac * (2.0 * unit(rng) - 1.0);
    r.centre_y = spec.height * spec.centre_spread_frac * (2.0 * unit(rng) - 1.0);
    r.intensity = spec.min_intensity + (spec.max_intensity - spec.min_intensity) * unit(rng);
    out.rectangles.push_back(r);
  }
  out.image = rasterise(spec, out.rectangles);
  return out;
}

NoisySinogram simulate_measurements(const Eigen::VectorXd& x, const RayTransform& op,
                                    const AngleSubset& subset, double noise_pct,
                                    std::uint64_t seed, bool keep_clean) {
  if (subset.empty()) throw std::invalid_argument("simulate_measurements: empty angle subset");
  if (!(noise_pct >= 0.0)) throw std::invalid_argument("simulate_measurements: noise_pct must be >= 0");
  Eigen::VectorXd clean = op.forward(subset, x);
  NoisySinogram out;
  out.noise_pct = noise_pct;
  out.seed = seed;
  out.noise_std = noise_pct * clean.cwiseAbs().mean();
  out.y = clean;
  if (out.noise_std > 0.0) {
    Rng rng(derive_seed(seed, {0x6e6f697365ULL}));
    out.y += out.noise_std * standard_normal(clean.size(), rng);
  }
  if (keep_clean) out.clean = std::move(clean);
  return out;
}

}  // namespace ctdesign
