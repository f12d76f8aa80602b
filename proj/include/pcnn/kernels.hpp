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

#ifndef PCNN_KERNELS_HPP_
#define PCNN_KERNELS_HPP_

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "pcnn/tensor.hpp"

// Differentiable layers on N x C x H x W tensors. Every function records a
// graph node when one of its inputs requires grad.
namespace pcnn::nn {

using Extent2 = std::pair<std::size_t, std::size_t>;

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  Extent2 kernel{3, 3};
  Extent2 stride{1, 1};
  Extent2 padding{0, 0};

  // Output extent along one axis, or 0 when the input is too small.
  static std::size_t output_extent(std::size_t in, std::size_t k,
                                   std::size_t s, std::size_t p);
};

// Cross-correlation with zero padding. `bias` may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvSpec& spec,
                 const Tensor<T>& weight, const Tensor<T>& bias);

// Windowed max; the gradient goes to the first maximum in row-major order.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, Extent2 window = {2, 2},
                     Extent2 stride = {2, 2});

// N x C x H x W -> N x C, same tie rule as max_pool2d.
template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& input);

// N x C x H x W -> N x C spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input);

enum class Mode { kTrain, kEval };

template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Per-channel normalization. Train mode uses batch statistics and updates
// `state`; eval mode reads `state` only.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma,
                     const Tensor<T>& beta, BatchNormState<T>& state,
                     Mode mode);

// input (N x D) * weight^T (D x K) + bias (K).
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& bias);

// Mean over the batch of -log softmax(logits)[label]; shape [1].
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits,
                                std::span<const int> labels);

// Corner-aligned bilinear resampling to out_h x out_w.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, std::size_t out_h,
                          std::size_t out_w);

// theta: N x 2 x 3 affine maps in normalized coordinates. Returns the
// sampling grid N x H_out x W_out x 2 holding (x_s, y_s) per output pixel.
template <typename T>
Tensor<T> grid_generate(const Tensor<T>& theta, std::size_t out_h,
                        std::size_t out_w);

// Bilinear sampling of `input` at `grid` locations; taps outside the image
// read as zero.
template <typename T>
Tensor<T> grid_sample(const Tensor<T>& input, const Tensor<T>& grid);

// Identity affine batch, N x 2 x 3.
template <typename T>
Tensor<T> identity_theta(std::size_t batch);

}  // namespace pcnn::nn

#endif  // PCNN_KERNELS_HPP_
