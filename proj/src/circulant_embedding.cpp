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

#include "ctdesign/circulant_embedding.hpp"

#include <cmath>
#include <complex>
#include <mutex>
#include <sstream>
#include <vector>

#include <fftw3.h>

#include "ctdesign/errors.hpp"

namespace ctdesign {

namespace {

// FFTW planning is not thread-safe; execution on fresh arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

template <typename T>
struct FftwArray {
  explicit FftwArray(std::size_t n) : data(static_cast<T*>(fftw_malloc(sizeof(T) * n))) {
    if (!data) throw std::bad_alloc();
  }
  ~FftwArray() { fftw_free(data); }
  FftwArray(const FftwArray&) = delete;
  FftwArray& operator=(const FftwArray&) = delete;
  T* data;
};

}  // namespace

struct CirculantEmbedding::Impl {
  int h = 0, w = 0;      // grid
  int m1 = 0, m2 = 0;    // embedding
  int enlargements = 0;
  double clipped_fraction = 0.0;
  std::vector<double> spectrum;       // real eigenvalues, half-complex layout m1 x (m2/2+1)
  std::vector<double> sqrt_spectrum;  // full layout m1 x m2, clipped and scaled by 1/sqrt(m1 m2)
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
  fftw_plan c2c = nullptr;

  int half() const { return m2 / 2 + 1; }

  ~Impl() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (r2c) fftw_destroy_plan(r2c);
    if (c2r) fftw_destroy_plan(c2r);
    if (c2c) fftw_destroy_plan(c2c);
  }
};

CirculantEmbedding::CirculantEmbedding(int height, int width, const Kernel& kernel, Options options)
    : impl_(std::make_unique<Impl>()) {
  Impl& s = *impl_;
  s.h = height;
  s.w = width;
  s.m1 = 2 * height;
  s.m2 = 2 * width;

  std::vector<double> full_spectrum;
  for (int attempt = 0;; ++attempt) {
    const int m1 = s.m1, m2 = s.m2, hc = m2 / 2 + 1;
    FftwArray<double> c(static_cast<std::size_t>(m1) * m2);
    FftwArray<fftw_complex> f(static_cast<std::size_t>(m1) * hc);
    for (int a = 0; a < m1; ++a) {
      const int da = std::min(a, m1 - a);
      for (int b = 0; b < m2; ++b) c.data[a * m2 + b] = kernel(da, std::min(b, m2 - b));
    }
    fftw_plan plan;
    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      plan = fftw_plan_dft_r2c_2d(m1, m2, c.data, f.data, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      fftw_destroy_plan(plan);
    }
    s.spectrum.assign(static_cast<std::size_t>(m1) * hc, 0.0);
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t k = 0; k < s.spectrum.size(); ++k) {
      s.spectrum[k] = f.data[k][0];
      lo = std::min(lo, s.spectrum[k]);
      hi = std::max(hi, s.spectrum[k]);
    }
    if (lo >= -options.negative_tolerance * std::max(hi, 0.0) || attempt >= options.max_enlargements)
      break;
    s.m1 *= 2;
    s.m2 *= 2;
    ++s.enlargements;
  }

  // Expand the half spectrum to the full layout for sampling; eigenvalues of a
  // real symmetric circulant satisfy lambda[a][b] = lambda[-a][-b].
  const int m1 = s.m1, m2 = s.m2, hc = s.half();
  const double scale = 1.0 / std::sqrt(static_cast<double>(m1) * m2);
  s.sqrt_spectrum.resize(static_cast<std::size_t>(m1) * m2);
  double negative = 0.0, total = 0.0;
  for (int a = 0; a < m1; ++a) {
    for (int b = 0; b < m2; ++b) {
      double lambda;
      if (b < hc)
        lambda = s.spectrum[a * hc + b];
      else
        lambda = s.spectrum[((m1 - a) % m1) * hc + (m2 - b)];
      total += std::abs(lambda);
      if (lambda < 0.0) negative += -lambda;
      s.sqrt_spectrum[a * m2 + b] = std::sqrt(std::max(lambda, 0.0)) * scale;
    }
  }
  s.clipped_fraction = total > 0.0 ? negative / total : 0.0;
  if (s.clipped_fraction > options.max_clipped_fraction) {
    std::ostringstream msg;
    msg << "circulant embedding of " << height << "x" << width << " grid into " << m1 << "x" << m2
        << " after " << s.enlargements << " enlargements has clipped spectral mass "
        << s.clipped_fraction << " > " << options.max_clipped_fraction;
    throw NumericalError(msg.str());
  }

  FftwArray<double> rbuf(static_cast<std::size_t>(m1) * m2);
  FftwArray<fftw_complex> cbuf(static_cast<std::size_t>(m1) * hc);
  FftwArray<fftw_complex> zbuf(static_cast<std::size_t>(m1) * m2);
  std::lock_guard<std::mutex> lock(planner_mutex());
  s.r2c = fftw_plan_dft_r2c_2d(m1, m2, rbuf.data, cbuf.data, FFTW_ESTIMATE);
  s.c2r = fftw_plan_dft_c2r_2d(m1, m2, cbuf.data, rbuf.data, FFTW_ESTIMATE);
  s.c2c = fftw_plan_dft_2d(m1, m2, zbuf.data, zbuf.data, FFTW_FORWARD, FFTW_ESTIMATE);
}

CirculantEmbedding::~CirculantEmbedding() = default;

int CirculantEmbedding::embed_height() const { return impl_->m1; }
int CirculantEmbedding::embed_width() const { return impl_->m2; }
int CirculantEmbedding::enlargements() const { return impl_->enlargements; }
double CirculantEmbedding::clipped_fraction() const { return impl_->clipped_fraction; }

Eigen::VectorXd CirculantEmbedding::multiply(const Eigen::VectorXd& v) const {
  const Impl& s = *impl_;
  if (v.size() != static_cast<Eigen::Index>(s.h) * s.w)
    throw std::invalid_argument("CirculantEmbedding::multiply: length mismatch");
  const int m1 = s.m1, m2 = s.m2, hc = s.half();
  FftwArray<double> r(static_cast<std::size_t>(m1) * m2);
  FftwArray<fftw_complex> c(static_cast<std::size_t>(m1) * hc);
  std::fill(r.data, r.data + static_cast<std::size_t>(m1) * m2, 0.0);
  for (int i = 0; i < s.h; ++i)
    for (int j = 0; j < s.w; ++j) r.data[i * m2 + j] = v[i * s.w + j];
  fftw_execute_dft_r2c(s.r2c, r.data, c.data);
  for (std::size_t k = 0; k < static_cast<std::size_t>(m1) * hc; ++k) {
    c.data[k][0] *= s.spectrum[k];
    c.data[k][1] *= s.spectrum[k];
  }
  fftw_execute_dft_c2r(s.c2r, c.data, r.data);
  const double norm = 1.0 / (static_cast<double>(m1) * m2);
  Eigen::VectorXd out(v.size());
  for (int i = 0; i < s.h; ++i)
    for (int j = 0; j < s.w; ++j) out[i * s.w + j] = r.data[i * m2 + j] * norm;
  return out;
}

Eigen::MatrixXd CirculantEmbedding::sample(int count, Rng& rng) const {
  const Impl& s = *impl_;
  if (count < 1) throw std::invalid_argument("CirculantEmbedding::sample: count must be >= 1");
  const int m1 = s.m1, m2 = s.m2;
  const std::size_t n = static_cast<std::size_t>(m1) * m2;
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(s.h) * s.w, count);
  FftwArray<fftw_complex> z(n);
  for (int k = 0; k < count; k += 2) {
    for (std::size_t q = 0; q < n; ++q) {
      z.data[q][0] = s.sqrt_spectrum[q] * normal(rng);
      z.data[q][1] = s.sqrt_spectrum[q] * normal(rng);
    }
    fftw_execute_dft(s.c2c, z.data, z.data);
    // Real and imaginary parts are independent draws.
    for (int i = 0; i < s.h; ++i) {
      for (int j = 0; j < s.w; ++j) {
        out(i * s.w + j, k) = z.data[i * m2 + j][0];
        if (k + 1 < count) out(i * s.w + j, k + 1) = z.data[i * m2 + j][1];
      }
    }
  }
  return out;
}

}  // namespace ctdesign
