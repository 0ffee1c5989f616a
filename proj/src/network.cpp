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

#include "ctdesign/network.hpp"

#include <bit>
#include <mutex>
#include <numbers>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "ctdesign/errors.hpp"
#include "ctdesign/raw_io.hpp"
#include "ctdesign/rng.hpp"
#include "ctdesign/tv.hpp"

namespace ctdesign {

void NetworkSpec::validate() const {
  if (height < 1 || width < 1) throw std::invalid_argument("NetworkSpec: image size must be positive");
  if (scales < 1) throw std::invalid_argument("NetworkSpec: need at least one scale");
  if (channels < 1 || input_channels < 1 || skip_channels < 0)
    throw std::invalid_argument("NetworkSpec: invalid channel counts");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("NetworkSpec: kernel must be odd");
  if (!(input_scale >= 0.0)) throw std::invalid_argument("NetworkSpec: input_scale must be >= 0");
}

std::uint64_t NetworkSpec::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int k = 0; k < 8; ++k) {
      h ^= (v >> (8 * k)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(height));
  mix(static_cast<std::uint64_t>(width));
  mix(static_cast<std::uint64_t>(scales));
  mix(static_cast<std::uint64_t>(channels));
  mix(static_cast<std::uint64_t>(skip_channels));
  mix(static_cast<std::uint64_t>(input_channels));
  mix(static_cast<std::uint64_t>(kernel));
  mix(input_seed);
  mix(std::bit_cast<std::uint64_t>(input_scale));
  return h;
}

// --- building blocks -----------------------------------------------------------------

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Feature maps are (h*w) x channels, each column a row-major channel image.
Eigen::MatrixXd im2col(const Eigen::MatrixXd& in, int h, int w, int k, int stride, int oh, int ow) {
  const int channels = static_cast<int>(in.cols());
  const int pad = k / 2;
  Eigen::MatrixXd cols(static_cast<Eigen::Index>(oh) * ow, static_cast<Eigen::Index>(channels) * k * k);
  for (int c = 0; c < channels; ++c) {
    const double* src = in.col(c).data();
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* dst = cols.col((c * k + ki) * k + kj).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ki - pad;
          double* row = dst + static_cast<std::ptrdiff_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + ow, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::ptrdiff_t>(iy) * w;
          if (stride == 1) {
            // Valid output range [lo, hi) maps to a contiguous input run.
            const int shift = kj - pad;
            const int lo = std::max(0, -shift), hi = std::min(ow, w - shift);
            std::fill(row, row + lo, 0.0);
            if (hi > lo) std::copy(srow + lo + shift, srow + hi + shift, row + lo);
            std::fill(row + std::max(hi, lo), row + ow, 0.0);
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kj - pad;
            row[ox] = (ix >= 0 && ix < w) ? srow[ix] : 0.0;
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col, accumulated into `out`.
void col2im_add(const Eigen::MatrixXd& cols, int h, int w, int k, int stride, int oh, int ow,
                Eigen::MatrixXd& out) {
  const int channels = static_cast<int>(out.cols());
  const int pad = k / 2;
  for (int c = 0; c < channels; ++c) {
    double* dst = out.col(c).data();
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* src = cols.col((c * k + ki) * k + kj).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ki - pad;
          if (iy < 0 || iy >= h) continue;
          const double* row = src + static_cast<std::ptrdiff_t>(oy) * ow;
          double* drow = dst + static_cast<std::ptrdiff_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kj - pad;
            if (ix >= 0 && ix < w) drow[ix] += row[ox];
          }
        }
      }
    }
  }
}

// 1-D linear interpolation weights, half-pixel centres (align_corners = false).
Eigen::MatrixXd interpolation_matrix(int out, int in) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(out, in);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double src = std::max(0.0, (o + 0.5) * scale - 0.5);
    const int i0 = std::min(static_cast<int>(std::floor(src)), in - 1);
    const int i1 = std::min(i0 + 1, in - 1);
    const double l = src - i0;
    r(o, i0) += 1.0 - l;
    r(o, i1) += l;
  }
  return r;
}

// Every pass allocates several megabytes of activations. With glibc's default
// mmap threshold each of them is a fresh mapping and pays page faults on
// first touch, which roughly doubles the cost of a forward pass.
void keep_large_buffers_on_heap() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
  });
#endif
}

}  // namespace

struct UNet::Node {
  enum class Kind { Input, Conv, Upsample, Concat };
  Kind kind = Kind::Input;
  int a = -1, b = -1;
  int layer = -1;
  int channels = 0, h = 0, w = 0;
  Eigen::MatrixXd interp_rows, interp_cols;  // Upsample only
};

struct UNet::Trace {
  Eigen::VectorXd theta;
  std::vector<Eigen::MatrixXd> values;
  std::vector<Eigen::MatrixXd> cols;   // im2col of the conv input; empty for 1x1 stride-1 convs
  std::vector<Eigen::MatrixXd> slope;  // activation derivative at the pre-activation
};

UNet::UNet(NetworkSpec spec) : spec_(spec) {
  spec_.validate();
  Rng rng(derive_seed(spec_.input_seed, {0x696e707574ULL}));
  std::uniform_real_distribution<double> unif(0.0, spec_.input_scale);
  input_.resize(static_cast<Eigen::Index>(spec_.height) * spec_.width, spec_.input_channels);
  for (Eigen::Index c = 0; c < input_.cols(); ++c)
    for (Eigen::Index i = 0; i < input_.rows(); ++i) input_(i, c) = unif(rng);
  build();
}

UNet::UNet(NetworkSpec spec, Eigen::MatrixXd fixed_input) : spec_(spec), input_(std::move(fixed_input)) {
  spec_.validate();
  if (input_.rows() != static_cast<Eigen::Index>(spec_.height) * spec_.width ||
      input_.cols() != spec_.input_channels)
    throw std::invalid_argument("UNet: fixed input has the wrong shape");
  build();
}

UNet::~UNet() = default;

void UNet::build() {
  keep_large_buffers_on_heap();
  const int C = spec_.channels, K = spec_.kernel;
  auto add_node = [this](Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  };
  auto add_conv = [&](const std::string& name, int src, int out_ch, int kernel, int stride,
                      Activation act) {
    const Node& s = nodes_[src];
    ConvLayer layer;
    layer.name = name;
    layer.in_channels = s.channels;
    layer.out_channels = out_ch;
    layer.kernel = kernel;
    layer.stride = stride;
    layer.in_h = s.h;
    layer.in_w = s.w;
    layer.out_h = (s.h + 2 * (kernel / 2) - kernel) / stride + 1;
    layer.out_w = (s.w + 2 * (kernel / 2) - kernel) / stride + 1;
    layer.activation = act;
    layer.weight_offset = parameter_count_;
    parameter_count_ += static_cast<Eigen::Index>(layer.in_channels) * kernel * kernel * out_ch;
    layer.bias_offset = parameter_count_;
    parameter_count_ += out_ch;
    layers_.push_back(layer);
    Node n;
    n.kind = Node::Kind::Conv;
    n.a = src;
    n.layer = static_cast<int>(layers_.size()) - 1;
    n.channels = out_ch;
    n.h = layer.out_h;
    n.w = layer.out_w;
    return add_node(std::move(n));
  };

  Node in;
  in.kind = Node::Kind::Input;
  in.channels = spec_.input_channels;
  in.h = spec_.height;
  in.w = spec_.width;
  const int input_node = add_node(std::move(in));

  std::vector<int> encoder;
  encoder.push_back(add_conv("enc0", input_node, C, K, 1, Activation::SiLU));
  for (int l = 1; l < spec_.scales; ++l)
    encoder.push_back(add_conv("enc" + std::to_string(l), encoder.back(), C, K, 2, Activation::SiLU));

  int current = encoder.back();
  for (int l = spec_.scales - 2; l >= 0; --l) {
    const Node& target = nodes_[encoder[l]];
    Node up;
    up.kind = Node::Kind::Upsample;
    up.a = current;
    up.channels = nodes_[current].channels;
    up.h = target.h;
    up.w = target.w;
    up.interp_rows = interpolation_matrix(target.h, nodes_[current].h);
    up.interp_cols = interpolation_matrix(target.w, nodes_[current].w);
    int merged = add_node(std::move(up));
    if (spec_.skip_channels > 0) {
      const int skip = add_conv("skip" + std::to_string(l), encoder[l], spec_.skip_channels, 1, 1,
                                Activation::SiLU);
      Node cat;
      cat.kind = Node::Kind::Concat;
      cat.a = merged;
      cat.b = skip;
      cat.channels = nodes_[merged].channels + nodes_[skip].channels;
      cat.h = nodes_[merged].h;
      cat.w = nodes_[merged].w;
      merged = add_node(std::move(cat));
    }
    current = add_conv("dec" + std::to_string(l), merged, C, K, 1, Activation::SiLU);
  }
  add_conv("out", current, 1, 1, 1, Activation::Identity);
}

std::vector<ParameterBlock> UNet::blocks() const {
  std::vector<ParameterBlock> out;
  for (const ConvLayer& l : layers_)
    out.push_back({l.name, l.weight_offset, l.bias_offset + l.out_channels - l.weight_offset});
  return out;
}

Eigen::VectorXd UNet::initial_parameters(std::uint64_t seed) const {
  Rng rng(derive_seed(seed, {0x7468657461ULL}));
  Eigen::VectorXd theta(parameter_count_);
  for (const ConvLayer& l : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_channels) * l.kernel * l.kernel);
    std::uniform_real_distribution<double> unif(-bound, bound);
    for (Eigen::Index k = l.weight_offset; k < l.bias_offset + l.out_channels; ++k) theta[k] = unif(rng);
  }
  return theta;
}

std::shared_ptr<const UNet::Trace> UNet::trace(const Eigen::VectorXd& theta) const {
  if (theta.size() != parameter_count_)
    throw std::invalid_argument("UNet: parameter vector has length " + std::to_string(theta.size()) +
                                ", expected " + std::to_string(parameter_count_));
  auto tr = std::make_shared<Trace>();
  tr->theta = theta;
  tr->values.resize(nodes_.size());
  tr->cols.resize(nodes_.size());
  tr->slope.resize(nodes_.size());
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    const Node& node = nodes_[n];
    switch (node.kind) {
      case Node::Kind::Input:
        tr->values[n] = input_;
        break;
      case Node::Kind::Conv: {
        const ConvLayer& l = layers_[node.layer];
        const Node& src = nodes_[node.a];
        const bool pointwise = l.kernel == 1 && l.stride == 1;
        if (!pointwise)
          tr->cols[n] = im2col(tr->values[node.a], src.h, src.w, l.kernel, l.stride, l.out_h, l.out_w);
        const Eigen::MatrixXd& cols = pointwise ? tr->values[node.a] : tr->cols[n];
        Eigen::Map<const Eigen::MatrixXd> W(theta.data() + l.weight_offset, cols.cols(), l.out_channels);
        Eigen::Map<const Eigen::RowVectorXd> b(theta.data() + l.bias_offset, l.out_channels);
        Eigen::MatrixXd z = cols * W;
        z.rowwise() += b;
        if (l.activation == Activation::Identity) {
          tr->values[n] = std::move(z);
        } else {
          const Eigen::ArrayXXd sig = ((-z.array()).exp() + 1.0).inverse();
          Eigen::MatrixXd a = (z.array() * sig).matrix();
          Eigen::MatrixXd d = (sig * (1.0 + z.array() * (1.0 - sig))).matrix();
          tr->values[n] = std::move(a);
          tr->slope[n] = std::move(d);
        }
        break;
      }
      case Node::Kind::Upsample: {
        const Node& src = nodes_[node.a];
        const Eigen::MatrixXd& x = tr->values[node.a];
        Eigen::MatrixXd out(static_cast<Eigen::Index>(node.h) * node.w, node.channels);
        for (int c = 0; c < node.channels; ++c) {
          Eigen::Map<const RowMajorMatrix> xc(x.col(c).data(), src.h, src.w);
          Eigen::Map<RowMajorMatrix> yc(out.col(c).data(), node.h, node.w);
          yc.noalias() = node.interp_rows * xc * node.interp_cols.transpose();
        }
        tr->values[n] = std::move(out);
        break;
      }
      case Node::Kind::Concat: {
        const Eigen::MatrixXd& a = tr->values[node.a];
        const Eigen::MatrixXd& b = tr->values[node.b];
        Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
        out << a, b;
        tr->values[n] = std::move(out);
        break;
      }
    }
  }
  return tr;
}

Eigen::VectorXd UNet::output(const Trace& trace) const { return trace.values.back().col(0); }

Eigen::VectorXd UNet::forward(const Eigen::VectorXd& theta) const { return output(*trace(theta)); }

Eigen::VectorXd UNet::jvp(const Trace& tr, const Eigen::VectorXd& dtheta) const {
  if (dtheta.size() != parameter_count_) throw std::invalid_argument("UNet::jvp: tangent length mismatch");
  // Empty matrix encodes an identically zero tangent (the fixed input).
  std::vector<Eigen::MatrixXd> tangent(nodes_.size());
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    const Node& node = nodes_[n];
    switch (node.kind) {
      case Node::Kind::Input:
        break;
      case Node::Kind::Conv: {
        const ConvLayer& l = layers_[node.layer];
        const Node& src = nodes_[node.a];
        const bool pointwise = l.kernel == 1 && l.stride == 1;
        const Eigen::MatrixXd& cols = pointwise ? tr.values[node.a] : tr.cols[n];
        Eigen::Map<const Eigen::MatrixXd> W(tr.theta.data() + l.weight_offset, cols.cols(), l.out_channels);
        Eigen::Map<const Eigen::MatrixXd> dW(dtheta.data() + l.weight_offset, cols.cols(), l.out_channels);
        Eigen::Map<const Eigen::RowVectorXd> db(dtheta.data() + l.bias_offset, l.out_channels);
        Eigen::MatrixXd dz = cols * dW;
        dz.rowwise() += db;
        const Eigen::MatrixXd& din = tangent[node.a];
        if (din.size() > 0) {
          if (pointwise)
            dz.noalias() += din * W;
          else
            dz.noalias() += im2col(din, src.h, src.w, l.kernel, l.stride, l.out_h, l.out_w) * W;
        }
        if (l.activation != Activation::Identity) dz.array() *= tr.slope[n].array();
        tangent[n] = std::move(dz);
        break;
      }
      case Node::Kind::Upsample: {
        const Node& src = nodes_[node.a];
        const Eigen::MatrixXd& x = tangent[node.a];
        if (x.size() == 0) break;
        Eigen::MatrixXd out(static_cast<Eigen::Index>(node.h) * node.w, node.channels);
        for (int c = 0; c < node.channels; ++c) {
          Eigen::Map<const RowMajorMatrix> xc(x.col(c).data(), src.h, src.w);
          Eigen::Map<RowMajorMatrix> yc(out.col(c).data(), node.h, node.w);
          yc.noalias() = node.interp_rows * xc * node.interp_cols.transpose();
        }
        tangent[n] = std::move(out);
        break;
      }
      case Node::Kind::Concat: {
        const Eigen::MatrixXd& a = tangent[node.a];
        const Eigen::MatrixXd& b = tangent[node.b];
        if (a.size() == 0 && b.size() == 0) break;
        const Eigen::Index ca = nodes_[node.a].channels;
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(node.h) * node.w, node.channels);
        if (a.size() > 0) out.leftCols(ca) = a;
        if (b.size() > 0) out.rightCols(node.channels - ca) = b;
        tangent[n] = std::move(out);
        break;
      }
    }
  }
  return tangent.back().col(0);
}

Eigen::VectorXd UNet::vjp(const Trace& tr, const Eigen::VectorXd& cotangent) const {
  if (cotangent.size() != image_size()) throw std::invalid_argument("UNet::vjp: cotangent length mismatch");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(parameter_count_);
  std::vector<Eigen::MatrixXd> g(nodes_.size());
  g.back() = cotangent;
  auto accumulate = [&g, this](int node, const Eigen::MatrixXd& v) {
    if (nodes_[node].kind == Node::Kind::Input) return;
    if (g[node].size() == 0)
      g[node] = v;
    else
      g[node] += v;
  };
  for (std::size_t n = nodes_.size(); n-- > 0;) {
    if (g[n].size() == 0) continue;
    const Node& node = nodes_[n];
    switch (node.kind) {
      case Node::Kind::Input:
        break;
      case Node::Kind::Conv: {
        const ConvLayer& l = layers_[node.layer];
        const Node& src = nodes_[node.a];
        const bool pointwise = l.kernel == 1 && l.stride == 1;
        const Eigen::MatrixXd& cols = pointwise ? tr.values[node.a] : tr.cols[n];
        Eigen::MatrixXd gz = std::move(g[n]);
        if (l.activation != Activation::Identity) gz.array() *= tr.slope[n].array();
        Eigen::Map<Eigen::MatrixXd> gW(grad.data() + l.weight_offset, cols.cols(), l.out_channels);
        Eigen::Map<Eigen::RowVectorXd> gb(grad.data() + l.bias_offset, l.out_channels);
        gW.noalias() += cols.transpose() * gz;
        gb += gz.colwise().sum();
        if (src.kind != Node::Kind::Input) {
          Eigen::Map<const Eigen::MatrixXd> W(tr.theta.data() + l.weight_offset, cols.cols(), l.out_channels);
          Eigen::MatrixXd gcols = gz * W.transpose();
          if (pointwise) {
            accumulate(node.a, gcols);
          } else {
            Eigen::MatrixXd gin = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(src.h) * src.w, src.channels);
            col2im_add(gcols, src.h, src.w, l.kernel, l.stride, l.out_h, l.out_w, gin);
            accumulate(node.a, gin);
          }
        }
        break;
      }
      case Node::Kind::Upsample: {
        const Node& src = nodes_[node.a];
        Eigen::MatrixXd gin(static_cast<Eigen::Index>(src.h) * src.w, src.channels);
        for (int c = 0; c < node.channels; ++c) {
          Eigen::Map<const RowMajorMatrix> yc(g[n].col(c).data(), node.h, node.w);
          Eigen::Map<RowMajorMatrix> xc(gin.col(c).data(), src.h, src.w);
          xc.noalias() = node.interp_rows.transpose() * yc * node.interp_cols;
        }
        accumulate(node.a, gin);
        break;
      }
      case Node::Kind::Concat: {
        const Eigen::Index ca = nodes_[node.a].channels;
        accumulate(node.a, g[n].leftCols(ca));
        accumulate(node.b, g[n].rightCols(node.channels - ca));
        break;
      }
    }
    g[n].resize(0, 0);
  }
  return grad;
}

// --- training ----------------------------------------------------------------------

TrainedNetwork train_dip(const UNet& net, const SparseRows& A, const Eigen::VectorXd& y,
                         const TrainOptions& options, const Eigen::VectorXd* warm_start) {
  if (A.cols() != net.image_size()) throw std::invalid_argument("train_dip: operator/image size mismatch");
  if (A.rows() != y.size()) throw std::invalid_argument("train_dip: measurement length mismatch");
  if (options.iterations < 0 || !(options.tv_strength >= 0.0))
    throw std::invalid_argument("train_dip: invalid options");
  const int h = net.spec().height, w = net.spec().width;

  TrainedNetwork out;
  out.options = options;
  out.theta = warm_start ? *warm_start : net.initial_parameters(options.seed);
  if (out.theta.size() != net.parameter_count()) throw std::invalid_argument("train_dip: warm start length mismatch");

  Eigen::VectorXd m = Eigen::VectorXd::Zero(out.theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(out.theta.size());
  Eigen::VectorXd tv_grad;
  double b1t = 1.0, b2t = 1.0;
  auto loss_at = [&](const Eigen::VectorXd& x, Eigen::VectorXd* gx) {
    const Eigen::VectorXd r = A * x - y;
    const double tv = options.tv_strength > 0.0 ? smoothed_tv(x, h, w, options.tv_smoothing, gx ? &tv_grad : nullptr) : 0.0;
    if (gx) {
      *gx = 2.0 * (A.transpose() * r);
      if (options.tv_strength > 0.0) *gx += options.tv_strength * tv_grad;
    }
    return r.squaredNorm() + options.tv_strength * tv;
  };

  for (int it = 0; it < options.iterations; ++it) {
    auto tr = net.trace(out.theta);
    const Eigen::VectorXd x = net.output(*tr);
    if (options.callback && it % options.callback_every == 0) options.callback(it, x);
    Eigen::VectorXd gx;
    const double loss = loss_at(x, &gx);
    out.loss_trace.push_back(loss);
    if (!std::isfinite(loss)) throw OptimisationError("train_dip: non-finite loss at iteration " + std::to_string(it), out.loss_trace);
    const Eigen::VectorXd g = net.vjp(*tr, gx);
    b1t *= options.beta1;
    b2t *= options.beta2;
    m = options.beta1 * m + (1.0 - options.beta1) * g;
    v = options.beta2 * v + (1.0 - options.beta2) * g.cwiseAbs2();
    double lr = options.learning_rate;
    if (it < options.warmup) lr *= static_cast<double>(it + 1) / options.warmup;
    if (options.final_lr_fraction != 1.0 && options.iterations > 1) {
      const double progress = static_cast<double>(it) / (options.iterations - 1);
      lr *= options.final_lr_fraction +
            (1.0 - options.final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }
    const double step = lr * std::sqrt(1.0 - b2t) / (1.0 - b1t);
    out.theta.array() -= step * m.array() / (v.array().sqrt() + options.epsilon * std::sqrt(1.0 - b2t));
  }
  const Eigen::VectorXd x = net.forward(out.theta);
  out.final_loss = loss_at(x, nullptr);
  out.loss_trace.push_back(out.final_loss);
  if (options.callback) options.callback(options.iterations, x);
  if (!std::isfinite(out.final_loss)) throw OptimisationError("train_dip: non-finite final loss", out.loss_trace);
  return out;
}

TrainedNetwork train_dip(const UNet& net, const RayTransform& op, const AngleSubset& subset,
                         const Eigen::VectorXd& y, const TrainOptions& options,
                         const Eigen::VectorXd* warm_start) {
  return train_dip(net, op.stacked(subset), y, options, warm_start);
}

void save_checkpoint(const std::filesystem::path& path, const UNet& net, const TrainedNetwork& trained) {
  KeyValues kv;
  kv["spec_hash"] = std::to_string(net.spec().hash());
  kv["seed"] = std::to_string(trained.options.seed);
  kv["iterations"] = std::to_string(trained.options.iterations);
  std::ostringstream loss;
  loss.precision(17);
  loss << trained.final_loss;
  kv["final_loss"] = loss.str();
  write_raw(path, trained.theta, kv);
}

Eigen::VectorXd load_checkpoint(const std::filesystem::path& path, const UNet& net) {
  KeyValues kv;
  Eigen::VectorXd theta = read_raw(path, &kv);
  if (kv.count("spec_hash") && kv["spec_hash"] != std::to_string(net.spec().hash()))
    throw std::runtime_error(path.string() + ": checkpoint was written for a different network spec");
  if (theta.size() != net.parameter_count())
    throw std::runtime_error(path.string() + ": checkpoint has the wrong parameter count");
  return theta;
}

}  // namespace ctdesign
