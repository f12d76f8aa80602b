/*
 * Copyright 2026 The PCNN Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "pcnn/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "pcnn/error.hpp"

namespace pcnn::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

void require_rank4(const Shape& s, const char* what) {
  if (s.size() != 4) {
    throw InvalidShape(std::string(what) + " expects N x C x H x W, got " +
                       to_string(s));
  }
}

// Unrolls receptive fields into a (C*kh*kw) x (N*Ho*Wo) matrix.
template <typename T>
void im2col(std::span<const T> in, std::size_t n_batch, std::size_t c_in,
            std::size_t h, std::size_t w, const ConvSpec& spec, std::size_t ho,
            std::size_t wo, std::vector<T>& col) {
  const auto [kh, kw] = spec.kernel;
  const auto [sh, sw] = spec.stride;
  const auto [ph, pw] = spec.padding;
  const std::size_t plane = ho * wo;
  const std::size_t cols = n_batch * plane;
  col.assign(c_in * kh * kw * cols, T(0));
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        T* row = col.data() + ((c * kh + ki) * kw + kj) * cols;
        for (std::size_t n = 0; n < n_batch; ++n) {
          const T* src = in.data() + (n * c_in + c) * h * w;
          T* dst = row + n * plane;
          for (std::size_t oi = 0; oi < ho; ++oi) {
            const std::ptrdiff_t y =
                static_cast<std::ptrdiff_t>(oi * sh + ki) -
                static_cast<std::ptrdiff_t>(ph);
            if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t oj = 0; oj < wo; ++oj) {
              const std::ptrdiff_t x =
                  static_cast<std::ptrdiff_t>(oj * sw + kj) -
                  static_cast<std::ptrdiff_t>(pw);
              if (x < 0 || x >= static_cast<std::ptrdiff_t>(w)) continue;
              dst[oi * wo + oj] = src[y * w + x];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const std::vector<T>& col, std::size_t n_batch, std::size_t c_in,
            std::size_t h, std::size_t w, const ConvSpec& spec, std::size_t ho,
            std::size_t wo, std::vector<T>& grad_in) {
  const auto [kh, kw] = spec.kernel;
  const auto [sh, sw] = spec.stride;
  const auto [ph, pw] = spec.padding;
  const std::size_t plane = ho * wo;
  const std::size_t cols = n_batch * plane;
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const T* row = col.data() + ((c * kh + ki) * kw + kj) * cols;
        for (std::size_t n = 0; n < n_batch; ++n) {
          T* dst = grad_in.data() + (n * c_in + c) * h * w;
          const T* src = row + n * plane;
          for (std::size_t oi = 0; oi < ho; ++oi) {
            const std::ptrdiff_t y =
                static_cast<std::ptrdiff_t>(oi * sh + ki) -
                static_cast<std::ptrdiff_t>(ph);
            if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t oj = 0; oj < wo; ++oj) {
              const std::ptrdiff_t x =
                  static_cast<std::ptrdiff_t>(oj * sw + kj) -
                  static_cast<std::ptrdiff_t>(pw);
              if (x < 0 || x >= static_cast<std::ptrdiff_t>(w)) continue;
              dst[y * w + x] += src[oi * wo + oj];
            }
          }
        }
      }
    }
  }
}

// Shared windowed-argmax reduction for max_pool2d and global_max_pool.
template <typename T>
Tensor<T> max_reduce(const Tensor<T>& input, Extent2 window, Extent2 stride,
                     Shape out_shape, const char* op) {
  const std::size_t n_batch = input.dim(0), ch = input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t ho = (h - window.first) / stride.first + 1;
  const std::size_t wo = (w - window.second) / stride.second + 1;
  const std::size_t out_n = n_batch * ch * ho * wo;
  std::vector<T> out(out_n);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out_n);
  auto x = input.data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n_batch * ch; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oi = 0; oi < ho; ++oi) {
      for (std::size_t oj = 0; oj < wo; ++oj, ++o) {
        std::size_t best = base + oi * stride.first * w + oj * stride.second;
        for (std::size_t i = 0; i < window.first; ++i) {
          for (std::size_t j = 0; j < window.second; ++j) {
            const std::size_t idx =
                base + (oi * stride.first + i) * w + oj * stride.second + j;
            if (x[idx] > x[best]) best = idx;
          }
        }
        out[o] = x[best];
        (*argmax)[o] = best;
      }
    }
  }
  Tensor<T> in = input;
  return Tensor<T>::from_op(std::move(out_shape), std::move(out), op, {input},
                            [in, argmax](std::span<const T> g) mutable {
                              auto& gi = in.grad_buffer();
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                gi[(*argmax)[i]] += g[i];
                              }
                            });
}

}  // namespace

std::size_t ConvSpec::output_extent(std::size_t in, std::size_t k,
                                    std::size_t s, std::size_t p) {
  if (in + 2 * p < k) return 0;
  return (in + 2 * p - k) / s + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvSpec& spec,
                 const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank4(input.shape(), "conv2d");
  const auto [kh, kw] = spec.kernel;
  if (kh == 0 || kw == 0 || spec.stride.first == 0 || spec.stride.second == 0 ||
      spec.in_channels == 0 || spec.out_channels == 0) {
    throw InvalidShape("conv2d: zero extent in spec");
  }
  const std::size_t n_batch = input.dim(0), c_in = input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  if (c_in != spec.in_channels) {
    throw InvalidShape("conv2d: input has " + std::to_string(c_in) +
                       " channels, spec expects " +
                       std::to_string(spec.in_channels));
  }
  const Shape wshape{spec.out_channels, c_in, kh, kw};
  if (weight.shape() != wshape) {
    throw InvalidShape("conv2d: weight " + to_string(weight.shape()) +
                       " != " + to_string(wshape));
  }
  if (bias.defined() && bias.shape() != Shape{spec.out_channels}) {
    throw InvalidShape("conv2d: bias " + to_string(bias.shape()));
  }
  const std::size_t ho =
      ConvSpec::output_extent(h, kh, spec.stride.first, spec.padding.first);
  const std::size_t wo =
      ConvSpec::output_extent(w, kw, spec.stride.second, spec.padding.second);
  if (ho < 1 || wo < 1) {
    throw InvalidShape("conv2d: output extent < 1 for input " +
                       to_string(input.shape()));
  }

  const std::size_t k = c_in * kh * kw;
  const std::size_t plane = ho * wo;
  const std::size_t cols = n_batch * plane;
  const std::size_t c_out = spec.out_channels;
  auto col = std::make_shared<std::vector<T>>();
  im2col(input.data(), n_batch, c_in, h, w, spec, ho, wo, *col);

  RowMat<T> prod(c_out, cols);
  prod.noalias() = ConstMapMat<T>(weight.data().data(), c_out, k) *
                   ConstMapMat<T>(col->data(), k, cols);
  std::vector<T> out(n_batch * c_out * plane);
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t o = 0; o < c_out; ++o) {
      const T b = bias.defined() ? bias.data()[o] : T(0);
      const T* src = prod.data() + o * cols + n * plane;
      T* dst = out.data() + (n * c_out + o) * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + b;
    }
  }

  Tensor<T> in = input, wt = weight, bs = bias;
  std::vector<Tensor<T>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor<T>::from_op(
      {n_batch, c_out, ho, wo}, std::move(out), "conv2d", std::move(inputs),
      [in, wt, bs, col, spec, n_batch, c_in, h, w, ho, wo, k, plane, cols,
       c_out](std::span<const T> g) mutable {
        RowMat<T> gmat(c_out, cols);
        for (std::size_t n = 0; n < n_batch; ++n) {
          for (std::size_t o = 0; o < c_out; ++o) {
            std::copy_n(g.data() + (n * c_out + o) * plane, plane,
                        gmat.data() + o * cols + n * plane);
          }
        }
        if (bs.defined() && bs.requires_grad()) {
          auto& gb = bs.grad_buffer();
          for (std::size_t o = 0; o < c_out; ++o) gb[o] += gmat.row(o).sum();
        }
        if (wt.requires_grad()) {
          MapMat<T> gw(wt.grad_buffer().data(), c_out, k);
          gw.noalias() += gmat * ConstMapMat<T>(col->data(), k, cols).transpose();
        }
        if (in.requires_grad()) {
          std::vector<T> gcol(k * cols);
          MapMat<T>(gcol.data(), k, cols).noalias() =
              ConstMapMat<T>(wt.data().data(), c_out, k).transpose() * gmat;
          col2im(gcol, n_batch, c_in, h, w, spec, ho, wo, in.grad_buffer());
        }
      });
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, Extent2 window, Extent2 stride) {
  require_rank4(input.shape(), "max_pool2d");
  if (window.first == 0 || window.second == 0 || stride.first == 0 ||
      stride.second == 0) {
    throw InvalidShape("max_pool2d: zero window or stride");
  }
  if (window.first > input.dim(2) || window.second > input.dim(3)) {
    throw InvalidShape("max_pool2d: window larger than input " +
                       to_string(input.shape()));
  }
  const std::size_t ho = (input.dim(2) - window.first) / stride.first + 1;
  const std::size_t wo = (input.dim(3) - window.second) / stride.second + 1;
  return max_reduce(input, window, stride,
                    {input.dim(0), input.dim(1), ho, wo}, "max_pool2d");
}

template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& input) {
  require_rank4(input.shape(), "global_max_pool");
  return max_reduce(input, {input.dim(2), input.dim(3)},
                    {input.dim(2), input.dim(3)},
                    {input.dim(0), input.dim(1)}, "global_max_pool");
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  require_rank4(input.shape(), "global_avg_pool");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t area = input.dim(2) * input.dim(3);
  std::vector<T> out(planes);
  auto x = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    T acc = T(0);
    for (std::size_t i = 0; i < area; ++i) acc += x[p * area + i];
    out[p] = acc / static_cast<T>(area);
  }
  Tensor<T> in = input;
  return Tensor<T>::from_op({input.dim(0), input.dim(1)}, std::move(out),
                            "global_avg_pool", {input},
                            [in, area](std::span<const T> g) mutable {
                              auto& gi = in.grad_buffer();
                              const T inv = T(1) / static_cast<T>(area);
                              for (std::size_t p = 0; p < g.size(); ++p) {
                                for (std::size_t i = 0; i < area; ++i) {
                                  gi[p * area + i] += g[p] * inv;
                                }
                              }
                            });
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma,
                     const Tensor<T>& beta, BatchNormState<T>& state,
                     Mode mode) {
  require_rank4(input.shape(), "batch_norm");
  const std::size_t n_batch = input.dim(0), ch = input.dim(1);
  const std::size_t area = input.dim(2) * input.dim(3);
  if (gamma.shape() != Shape{ch} || beta.shape() != Shape{ch}) {
    throw InvalidShape("batch_norm: gamma/beta must have shape [" +
                       std::to_string(ch) + "]");
  }
  if (state.running_mean.size() != ch || state.running_var.size() != ch) {
    throw InvalidShape("batch_norm: running stats do not match channels");
  }
  const std::size_t count = n_batch * area;
  if (mode == Mode::kTrain && count < 2) {
    throw DegenerateBatch("batch_norm needs at least two values per channel");
  }
  const T eps = static_cast<T>(kBatchNormEpsilon);
  auto x = input.data();
  auto mean = std::make_shared<std::vector<T>>(ch);
  auto inv_std = std::make_shared<std::vector<T>>(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    if (mode == Mode::kTrain) {
      T m = T(0);
      for (std::size_t n = 0; n < n_batch; ++n) {
        const T* p = x.data() + (n * ch + c) * area;
        for (std::size_t i = 0; i < area; ++i) m += p[i];
      }
      m /= static_cast<T>(count);
      T v = T(0);
      for (std::size_t n = 0; n < n_batch; ++n) {
        const T* p = x.data() + (n * ch + c) * area;
        for (std::size_t i = 0; i < area; ++i) v += (p[i] - m) * (p[i] - m);
      }
      v /= static_cast<T>(count);
      (*mean)[c] = m;
      (*inv_std)[c] = T(1) / std::sqrt(v + eps);
      const T mom = static_cast<T>(kBatchNormMomentum);
      const T unbiased = v * static_cast<T>(count) / static_cast<T>(count - 1);
      state.running_mean[c] = (T(1) - mom) * state.running_mean[c] + mom * m;
      state.running_var[c] =
          (T(1) - mom) * state.running_var[c] + mom * unbiased;
    } else {
      (*mean)[c] = state.running_mean[c];
      (*inv_std)[c] = T(1) / std::sqrt(state.running_var[c] + eps);
    }
  }
  // Normalized activations are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<T>>(input.size());
  std::vector<T> out(input.size());
  auto gm = gamma.data();
  auto bt = beta.data();
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t base = (n * ch + c) * area;
      for (std::size_t i = 0; i < area; ++i) {
        const T v = (x[base + i] - (*mean)[c]) * (*inv_std)[c];
        (*xhat)[base + i] = v;
        out[base + i] = gm[c] * v + bt[c];
      }
    }
  }
  Tensor<T> in = input, ga = gamma, be = beta;
  const bool train = mode == Mode::kTrain;
  return Tensor<T>::from_op(
      input.shape(), std::move(out), "batch_norm", {input, gamma, beta},
      [in, ga, be, xhat, inv_std, n_batch, ch, area, count,
       train](std::span<const T> g) mutable {
        std::vector<T> sum_g(ch, T(0)), sum_gx(ch, T(0));
        for (std::size_t n = 0; n < n_batch; ++n) {
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t base = (n * ch + c) * area;
            for (std::size_t i = 0; i < area; ++i) {
              sum_g[c] += g[base + i];
              sum_gx[c] += g[base + i] * (*xhat)[base + i];
            }
          }
        }
        if (be.requires_grad()) {
          auto& gb = be.grad_buffer();
          for (std::size_t c = 0; c < ch; ++c) gb[c] += sum_g[c];
        }
        if (ga.requires_grad()) {
          auto& gg = ga.grad_buffer();
          for (std::size_t c = 0; c < ch; ++c) gg[c] += sum_gx[c];
        }
        if (!in.requires_grad()) return;
        auto& gi = in.grad_buffer();
        auto gm = ga.data();
        const T inv_count = T(1) / static_cast<T>(count);
        for (std::size_t n = 0; n < n_batch; ++n) {
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t base = (n * ch + c) * area;
            const T k = gm[c] * (*inv_std)[c];
            for (std::size_t i = 0; i < area; ++i) {
              if (train) {
                gi[base + i] += k * (g[base + i] - sum_g[c] * inv_count -
                                     (*xhat)[base + i] * sum_gx[c] * inv_count);
              } else {
                gi[base + i] += k * g[base + i];
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& bias) {
  if (input.rank() != 2 || weight.rank() != 2 || bias.rank() != 1 ||
      weight.dim(1) != input.dim(1) || bias.dim(0) != weight.dim(0)) {
    throw InvalidShape("fully_connected: input " + to_string(input.shape()) +
                       ", weight " + to_string(weight.shape()) + ", bias " +
                       to_string(bias.shape()));
  }
  const std::size_t n = input.dim(0), d = input.dim(1), k = weight.dim(0);
  std::vector<T> out(n * k);
  MapMat<T> y(out.data(), n, k);
  y.noalias() = ConstMapMat<T>(input.data().data(), n, d) *
                ConstMapMat<T>(weight.data().data(), k, d).transpose();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] += bias.data()[j];
  }
  Tensor<T> in = input, wt = weight, bs = bias;
  return Tensor<T>::from_op(
      {n, k}, std::move(out), "fully_connected", {input, weight, bias},
      [in, wt, bs, n, d, k](std::span<const T> g) mutable {
        ConstMapMat<T> gy(g.data(), n, k);
        if (in.requires_grad()) {
          MapMat<T>(in.grad_buffer().data(), n, d).noalias() +=
              gy * ConstMapMat<T>(wt.data().data(), k, d);
        }
        if (wt.requires_grad()) {
          MapMat<T>(wt.grad_buffer().data(), k, d).noalias() +=
              gy.transpose() * ConstMapMat<T>(in.data().data(), n, d);
        }
        if (bs.requires_grad()) {
          auto& gb = bs.grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < k; ++j) gb[j] += g[i * k + j];
          }
        }
      });
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits,
                                std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw InvalidShape("softmax_cross_entropy: logits must be N x K");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (k < 2) throw InvalidShape("softmax_cross_entropy: need K >= 2");
  if (labels.size() != n) {
    throw InvalidShape("softmax_cross_entropy: " + std::to_string(labels.size()) +
                       " labels for batch of " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw InvalidLabel("label " + std::to_string(labels[i]) +
                         " outside [0, " + std::to_string(k) + ")");
    }
  }
  auto z = logits.data();
  auto prob = std::make_shared<std::vector<T>>(n * k);
  T loss = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = z.data() + i * k;
    const T m = *std::max_element(row, row + k);
    T denom = T(0);
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - m);
    const T log_denom = std::log(denom);
    for (std::size_t j = 0; j < k; ++j) {
      (*prob)[i * k + j] = std::exp(row[j] - m - log_denom);
    }
    loss += log_denom - (row[labels[i]] - m);
  }
  loss /= static_cast<T>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  Tensor<T> in = logits;
  return Tensor<T>::from_op(
      {1}, {loss}, "softmax_cross_entropy", {logits},
      [in, prob, lab, n, k](std::span<const T> g) mutable {
        auto& gi = in.grad_buffer();
        const T s = g[0] / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const T onehot = static_cast<int>(j) == lab[i] ? T(1) : T(0);
            gi[i * k + j] += s * ((*prob)[i * k + j] - onehot);
          }
        }
      });
}

namespace {

// Corner-aligned source coordinate of output index `j` out of `out` samples
// over an axis of `in` pixels.
double aligned_coord(std::size_t j, std::size_t in, std::size_t out) {
  if (out == 1) return (static_cast<double>(in) - 1.0) / 2.0;
  return static_cast<double>(j) * (static_cast<double>(in) - 1.0) /
         (static_cast<double>(out) - 1.0);
}

struct Tap {
  std::size_t lo, hi;
  double frac;  // weight of `hi`
};

Tap resize_tap(std::size_t j, std::size_t in, std::size_t out) {
  const double x = aligned_coord(j, in, out);
  std::size_t lo = static_cast<std::size_t>(std::floor(x));
  if (lo > in - 1) lo = in - 1;
  const std::size_t hi = std::min(lo + 1, in - 1);
  return {lo, hi, x - static_cast<double>(lo)};
}

}  // namespace

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, std::size_t out_h,
                          std::size_t out_w) {
  require_rank4(input.shape(), "bilinear_resize");
  if (out_h == 0 || out_w == 0) {
    throw InvalidShape("bilinear_resize: output extent must be >= 1");
  }
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  auto rows = std::make_shared<std::vector<Tap>>(out_h);
  auto cols = std::make_shared<std::vector<Tap>>(out_w);
  for (std::size_t i = 0; i < out_h; ++i) (*rows)[i] = resize_tap(i, h, out_h);
  for (std::size_t j = 0; j < out_w; ++j) (*cols)[j] = resize_tap(j, w, out_w);

  std::vector<T> out(planes * out_h * out_w);
  auto x = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.data() + p * h * w;
    T* dst = out.data() + p * out_h * out_w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const Tap& r = (*rows)[i];
      const T fy = static_cast<T>(r.frac);
      for (std::size_t j = 0; j < out_w; ++j) {
        const Tap& c = (*cols)[j];
        const T fx = static_cast<T>(c.frac);
        // Exact grid hits copy the source value untouched.
        if (r.frac == 0.0 && c.frac == 0.0) {
          dst[i * out_w + j] = src[r.lo * w + c.lo];
          continue;
        }
        // Lerp form keeps constant inputs exact.
        const T a = src[r.lo * w + c.lo], b = src[r.lo * w + c.hi];
        const T d = src[r.hi * w + c.lo], e = src[r.hi * w + c.hi];
        const T top = a + fx * (b - a);
        const T bot = d + fx * (e - d);
        dst[i * out_w + j] = top + fy * (bot - top);
      }
    }
  }
  Tensor<T> in = input;
  return Tensor<T>::from_op(
      {input.dim(0), input.dim(1), out_h, out_w}, std::move(out),
      "bilinear_resize", {input},
      [in, rows, cols, planes, h, w, out_h, out_w](std::span<const T> g) mutable {
        auto& gi = in.grad_buffer();
        for (std::size_t p = 0; p < planes; ++p) {
          T* dst = gi.data() + p * h * w;
          const T* src = g.data() + p * out_h * out_w;
          for (std::size_t i = 0; i < out_h; ++i) {
            const Tap& r = (*rows)[i];
            const T fy = static_cast<T>(r.frac);
            for (std::size_t j = 0; j < out_w; ++j) {
              const Tap& c = (*cols)[j];
              const T fx = static_cast<T>(c.frac);
              const T v = src[i * out_w + j];
              dst[r.lo * w + c.lo] += v * (T(1) - fy) * (T(1) - fx);
              dst[r.lo * w + c.hi] += v * (T(1) - fy) * fx;
              dst[r.hi * w + c.lo] += v * fy * (T(1) - fx);
              dst[r.hi * w + c.hi] += v * fy * fx;
            }
          }
        }
      });
}

namespace {

double target_coord(std::size_t j, std::size_t extent) {
  if (extent == 1) return 0.0;
  return 2.0 * static_cast<double>(j) / (static_cast<double>(extent) - 1.0) -
         1.0;
}

}  // namespace

template <typename T>
Tensor<T> grid_generate(const Tensor<T>& theta, std::size_t out_h,
                        std::size_t out_w) {
  if (theta.rank() != 3 || theta.dim(1) != 2 || theta.dim(2) != 3) {
    throw InvalidShape("grid_generate: theta must be N x 2 x 3, got " +
                       to_string(theta.shape()));
  }
  if (out_h == 0 || out_w == 0) {
    throw InvalidShape("grid_generate: output extent must be >= 1");
  }
  const std::size_t n_batch = theta.dim(0);
  std::vector<T> out(n_batch * out_h * out_w * 2);
  auto th = theta.data();
  for (std::size_t n = 0; n < n_batch; ++n) {
    const T* a = th.data() + n * 6;
    for (std::size_t i = 0; i < out_h; ++i) {
      const T yt = static_cast<T>(target_coord(i, out_h));
      for (std::size_t j = 0; j < out_w; ++j) {
        const T xt = static_cast<T>(target_coord(j, out_w));
        T* dst = out.data() + ((n * out_h + i) * out_w + j) * 2;
        dst[0] = a[0] * xt + a[1] * yt + a[2];
        dst[1] = a[3] * xt + a[4] * yt + a[5];
      }
    }
  }
  Tensor<T> th_in = theta;
  return Tensor<T>::from_op(
      {n_batch, out_h, out_w, 2}, std::move(out), "grid_generate", {theta},
      [th_in, n_batch, out_h, out_w](std::span<const T> g) mutable {
        auto& gt = th_in.grad_buffer();
        for (std::size_t n = 0; n < n_batch; ++n) {
          T* d = gt.data() + n * 6;
          for (std::size_t i = 0; i < out_h; ++i) {
            const T yt = static_cast<T>(target_coord(i, out_h));
            for (std::size_t j = 0; j < out_w; ++j) {
              const T xt = static_cast<T>(target_coord(j, out_w));
              const T* gg = g.data() + ((n * out_h + i) * out_w + j) * 2;
              d[0] += gg[0] * xt;
              d[1] += gg[0] * yt;
              d[2] += gg[0];
              d[3] += gg[1] * xt;
              d[4] += gg[1] * yt;
              d[5] += gg[1];
            }
          }
        }
      });
}

template <typename T>
Tensor<T> grid_sample(const Tensor<T>& input, const Tensor<T>& grid) {
  require_rank4(input.shape(), "grid_sample");
  if (grid.rank() != 4 || grid.dim(3) != 2 || grid.dim(0) != input.dim(0)) {
    throw InvalidShape("grid_sample: grid " + to_string(grid.shape()) +
                       " does not match input " + to_string(input.shape()));
  }
  const std::size_t n_batch = input.dim(0), ch = input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t ho = grid.dim(1), wo = grid.dim(2);
  const T sx = static_cast<T>(w - 1) / T(2);
  const T sy = static_cast<T>(h - 1) / T(2);
  auto x = input.data();
  auto gd = grid.data();

  std::vector<T> out(n_batch * ch * ho * wo, T(0));
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t p = 0; p < ho * wo; ++p) {
      const T px = (gd[(n * ho * wo + p) * 2] + T(1)) * sx;
      const T py = (gd[(n * ho * wo + p) * 2 + 1] + T(1)) * sy;
      const T fx0 = std::floor(px), fy0 = std::floor(py);
      const T ax = px - fx0, ay = py - fy0;
      const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
      const long taps_x[2] = {x0, x0 + 1};
      const long taps_y[2] = {y0, y0 + 1};
      const T wx[2] = {T(1) - ax, ax};
      const T wy[2] = {T(1) - ay, ay};
      for (int a = 0; a < 2; ++a) {
        if (taps_y[a] < 0 || taps_y[a] >= static_cast<long>(h)) continue;
        for (int b = 0; b < 2; ++b) {
          if (taps_x[b] < 0 || taps_x[b] >= static_cast<long>(w)) continue;
          const T wgt = wy[a] * wx[b];
          if (wgt == T(0)) continue;
          const std::size_t off = taps_y[a] * w + taps_x[b];
          for (std::size_t c = 0; c < ch; ++c) {
            out[(n * ch + c) * ho * wo + p] += wgt * x[(n * ch + c) * h * w + off];
          }
        }
      }
    }
  }

  Tensor<T> in = input, gr = grid;
  return Tensor<T>::from_op(
      {n_batch, ch, ho, wo}, std::move(out), "grid_sample", {input, grid},
      [in, gr, n_batch, ch, h, w, ho, wo, sx, sy](std::span<const T> g) mutable {
        auto x = in.data();
        auto gd = gr.data();
        T* gin = in.requires_grad() ? in.grad_buffer().data() : nullptr;
        T* ggrid = gr.requires_grad() ? gr.grad_buffer().data() : nullptr;
        for (std::size_t n = 0; n < n_batch; ++n) {
          for (std::size_t p = 0; p < ho * wo; ++p) {
            const T px = (gd[(n * ho * wo + p) * 2] + T(1)) * sx;
            const T py = (gd[(n * ho * wo + p) * 2 + 1] + T(1)) * sy;
            const T fx0 = std::floor(px), fy0 = std::floor(py);
            const T ax = px - fx0, ay = py - fy0;
            const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
            T dpx = T(0), dpy = T(0);
            for (int a = 0; a < 2; ++a) {
              const long yy = y0 + a;
              if (yy < 0 || yy >= static_cast<long>(h)) continue;
              const T wy = a ? ay : T(1) - ay;
              const T dwy = a ? T(1) : T(-1);
              for (int b = 0; b < 2; ++b) {
                const long xx = x0 + b;
                if (xx < 0 || xx >= static_cast<long>(w)) continue;
                const T wx = b ? ax : T(1) - ax;
                const T dwx = b ? T(1) : T(-1);
                const std::size_t off = yy * w + xx;
                for (std::size_t c = 0; c < ch; ++c) {
                  const T go = g[(n * ch + c) * ho * wo + p];
                  if (go == T(0)) continue;
                  const std::size_t idx = (n * ch + c) * h * w + off;
                  if (gin) gin[idx] += go * wy * wx;
                  dpx += go * x[idx] * wy * dwx;
                  dpy += go * x[idx] * dwy * wx;
                }
              }
            }
            if (ggrid) {
              ggrid[(n * ho * wo + p) * 2] += dpx * sx;
              ggrid[(n * ho * wo + p) * 2 + 1] += dpy * sy;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> identity_theta(std::size_t batch) {
  std::vector<T> v;
  v.reserve(batch * 6);
  for (std::size_t n = 0; n < batch; ++n) {
    v.insert(v.end(), {T(1), T(0), T(0), T(0), T(1), T(0)});
  }
  return Tensor<T>({batch, 2, 3}, std::move(v));
}

#define PCNN_INSTANTIATE(T)                                                    \
  template Tensor<T> conv2d(const Tensor<T>&, const ConvSpec&,                 \
                            const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> max_pool2d(const Tensor<T>&, Extent2, Extent2);           \
  template Tensor<T> global_max_pool(const Tensor<T>&);                        \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                        \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&,            \
                                const Tensor<T>&, BatchNormState<T>&, Mode);   \
  template Tensor<T> fully_connected(const Tensor<T>&, const Tensor<T>&,       \
                                     const Tensor<T>&);                        \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&,                   \
                                           std::span<const int>);              \
  template Tensor<T> bilinear_resize(const Tensor<T>&, std::size_t,            \
                                     std::size_t);                             \
  template Tensor<T> grid_generate(const Tensor<T>&, std::size_t,              \
                                   std::size_t);                               \
  template Tensor<T> grid_sample(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> identity_theta(std::size_t);

PCNN_INSTANTIATE(float)
PCNN_INSTANTIATE(double)

#undef PCNN_INSTANTIATE

}  // namespace pcnn::nn
