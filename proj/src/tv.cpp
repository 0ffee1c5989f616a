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

#include "ctdesign/tv.hpp"

#include <cmath>
#include <stdexcept>

namespace ctdesign {

double tv_value(const Eigen::VectorXd& x, int height, int width) {
  if (height < 1 || width < 1 || x.size() != static_cast<Eigen::Index>(height) * width)
    throw std::invalid_argument("tv_value: image is not height x width");
  double tv = 0.0;
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      const double v = x[i * width + j];
      if (i + 1 < height) tv += std::abs(v - x[(i + 1) * width + j]);
      if (j + 1 < width) tv += std::abs(v - x[i * width + j + 1]);
    }
  }
  return tv;
}

double smoothed_tv(const Eigen::VectorXd& x, int height, int width, double delta,
                   Eigen::VectorXd* gradient) {
  if (height < 1 || width < 1 || x.size() != static_cast<Eigen::Index>(height) * width)
    throw std::invalid_argument("smoothed_tv: image is not height x width");
  const double d2 = delta * delta;
  if (gradient) gradient->setZero(x.size());
  double tv = 0.0;
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      const int p = i * width + j;
      if (i + 1 < height) {
        const int q = p + width;
        const double t = x[p] - x[q];
        const double r = std::sqrt(t * t + d2);
        tv += r;
        if (gradient) {
          (*gradient)[p] += t / r;
          (*gradient)[q] -= t / r;
        }
      }
      if (j + 1 < width) {
        const int q = p + 1;
        const double t = x[p] - x[q];
        const double r = std::sqrt(t * t + d2);
        tv += r;
        if (gradient) {
          (*gradient)[p] += t / r;
          (*gradient)[q] -= t / r;
        }
      }
    }
  }
  return tv;
}

}  // namespace ctdesign
