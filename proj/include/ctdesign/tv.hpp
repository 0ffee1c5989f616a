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

#ifndef CTDESIGN_TV_HPP_
#define CTDESIGN_TV_HPP_

#include <Eigen/Core>

namespace ctdesign {

/// Anisotropic total variation of x reshaped row-major to height x width:
/// sum of absolute vertical and horizontal forward differences, no wraparound.
double tv_value(const Eigen::VectorXd& x, int height, int width);

/// Smoothed TV with |t| replaced by sqrt(t^2 + delta^2). Writes the gradient
/// into `gradient` when non-null.
double smoothed_tv(const Eigen::VectorXd& x, int height, int width, double delta,
                   Eigen::VectorXd* gradient = nullptr);

}  // namespace ctdesign

#endif  // CTDESIGN_TV_HPP_
