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

#ifndef CTDESIGN_NETWORK_HPP_
#define CTDESIGN_NETWORK_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ctdesign/tomo_operator.hpp"

namespace ctdesign {

/// Encoder-decoder ("U-net") architecture. Scale 0 works at full resolution;
/// each further scale halves the resolution with a stride-2 convolution. The
/// decoder upsamples bilinearly and concatenates a 1x1-projected skip branch.
/// Hidden layers use the SiLU activation so the network is smooth in its
/// parameters; the output layer is a linear 1x1 convolution.
struct NetworkSpec {
  int height = 64;
  int width = 64;
  int scales = 3;
  int channels = 32;
  int skip_channels = 4;
  int input_channels = 1;
  int kernel = 3;
  std::uint64_t input_seed = 0;
  double input_scale = 0.1;  // fixed input ~ U[0, input_scale]

  void validate() const;
  std::uint64_t hash() const;
};

struct ParameterBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

enum class Activation { Identity, SiLU };

struct ConvLayer {
  std::string name;
  int in_channels = 0, out_channels = 0, kernel = 1, stride = 1;
  int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  Activation activation = Activation::SiLU;
  Eigen::Index weight_offset = 0;  // (in_channels * kernel^2) x out_channels, column-major
  Eigen::Index bias_offset = 0;
};

class UNet {
 public:
  /// Activations recorded at one parameter vector; everything jvp/vjp need.
  struct Trace;

  explicit UNet(NetworkSpec spec);
  UNet(NetworkSpec spec, Eigen::MatrixXd fixed_input);
  ~UNet();
  UNet(const UNet&) = delete;
  UNet& operator=(const UNet&) = delete;

  const NetworkSpec& spec() const { return spec_; }
  Eigen::Index parameter_count() const { return parameter_count_; }
  int image_size() const { return spec_.height * spec_.width; }
  const std::vector<ConvLayer>& layers() const { return layers_; }
  /// One block per convolution (weights and bias together).
  std::vector<ParameterBlock> blocks() const;
  const Eigen::MatrixXd& input() const { return input_; }  // (h*w) x input_channels

  /// Default initialisation: weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Eigen::VectorXd initial_parameters(std::uint64_t seed) const;

  Eigen::VectorXd forward(const Eigen::VectorXd& theta) const;
  std::shared_ptr<const Trace> trace(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd output(const Trace& trace) const;

  /// J v with J = d x / d theta at the traced point.
  Eigen::VectorXd jvp(const Trace& trace, const Eigen::VectorXd& dtheta) const;
  /// J^T u.
  Eigen::VectorXd vjp(const Trace& trace, const Eigen::VectorXd& cotangent) const;

 private:
  struct Node;
  void build();

  NetworkSpec spec_;
  Eigen::MatrixXd input_;
  std::vector<ConvLayer> layers_;
  std::vector<Node> nodes_;
  Eigen::Index parameter_count_ = 0;
};

// --- training ----------------------------------------------------------------------

struct TrainOptions {
  double tv_strength = 1e-3;  // lambda
  int iterations = 1000;
  double learning_rate = 1e-3;  // Adam, peak value
  int warmup = 0;               // linear ramp over the first iterations
  double final_lr_fraction = 1.0;  // cosine decay to learning_rate * fraction at the last iteration
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double tv_smoothing = 1e-6;
  std::uint64_t seed = 0;  // parameter initialisation when no warm start is given
  /// Called as (iteration, image) every `callback_every` iterations and after
  /// the last one; used for PSNR tracking.
  std::function<void(int, const Eigen::VectorXd&)> callback;
  int callback_every = 100;
};

struct TrainedNetwork {
  Eigen::VectorXd theta;
  std::vector<double> loss_trace;  // loss at the parameters before each update, then the final loss
  double final_loss = 0.0;
  TrainOptions options;
};

/// Minimises ||A x(theta) - y||^2 + lambda TV_delta(x(theta)) with Adam.
/// Throws OptimisationError (carrying the loss trace) on a non-finite loss.
TrainedNetwork train_dip(const UNet& net, const SparseRows& A, const Eigen::VectorXd& y,
                         const TrainOptions& options, const Eigen::VectorXd* warm_start = nullptr);

TrainedNetwork train_dip(const UNet& net, const RayTransform& op, const AngleSubset& subset,
                         const Eigen::VectorXd& y, const TrainOptions& options,
                         const Eigen::VectorXd* warm_start = nullptr);

void save_checkpoint(const std::filesystem::path& path, const UNet& net, const TrainedNetwork& trained);
Eigen::VectorXd load_checkpoint(const std::filesystem::path& path, const UNet& net);

}  // namespace ctdesign

#endif  // CTDESIGN_NETWORK_HPP_
