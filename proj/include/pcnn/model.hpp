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

#ifndef PCNN_MODEL_HPP_
#define PCNN_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pcnn/kernels.hpp"
#include "pcnn/regions.hpp"
#include "pcnn/tensor.hpp"

namespace pcnn::model {

using nn::Mode;

// Stem convolution followed by one residual block per stage.
struct BackboneConfig {
  std::size_t stem_channels = 16;
  std::vector<std::size_t> stage_channels{16, 32, 64};
  std::vector<std::size_t> stage_strides{1, 2, 2};

  void validate() const;
  std::size_t out_channels() const;
  // Spatial extent of the feature map for an input extent.
  std::size_t output_extent(std::size_t input) const;
};

enum class VariantKind {
  kFull,
  kNoCrop,
  kTwoRandomCrop,
  kThreeCrop,
  kFourCrop,
  kGfiebOnly,
  kNoMdim,
  kCustomAlphaBeta,
};

struct Variant {
  VariantKind kind = VariantKind::kFull;
  double alpha = 12.0;  // only read for kCustomAlphaBeta
  double beta = 8.0;

  static Variant custom(double alpha, double beta) {
    return {VariantKind::kCustomAlphaBeta, alpha, beta};
  }
  // Accepts the names produced by name(), e.g. "no_crop" or "alpha_beta:4:16".
  static Variant parse(const std::string& text);
  std::string name() const;

  bool has_local_branch() const { return kind != VariantKind::kGfiebOnly; }
  bool has_mdim() const {
    return kind != VariantKind::kGfiebOnly && kind != VariantKind::kNoMdim;
  }
  friend bool operator==(const Variant&, const Variant&) = default;
};

std::vector<Variant> all_variants();

struct ModelConfig {
  BackboneConfig backbone;
  regions::RegionSpec regions;
  Variant variant;
  std::size_t classes = 7;
  std::size_t height = 32;
  std::size_t width = 32;
  double alpha = 12.0;
  double beta = 8.0;
  std::size_t refine_blocks = 2;  // residual blocks in locnet and GPN
  bool share_local_weights = false;
  std::uint64_t seed = 0;

  // Loss weights after applying a custom_alpha_beta variant.
  double effective_alpha() const;
  double effective_beta() const;
};

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  bool decay = true;  // false for biases and batch-norm affine terms
};

// Named non-trainable state (batch-norm running statistics).
template <typename T>
struct Buffer {
  std::string name;
  std::vector<T>* values;
};

template <typename T>
struct Heads {
  Tensor<T> global_logits;
  Tensor<T> local_logits;  // undefined without a local branch
};

template <typename T>
struct ForwardResult {
  Tensor<T> loss;
  Tensor<T> global_logits;
  Tensor<T> local_logits;
  double ce_global = 0.0;
  double ce_local = 0.0;
};

template <typename T>
struct Conv {
  nn::ConvSpec spec;
  Tensor<T> weight;
  Tensor<T> bias;  // undefined for convolutions followed by batch norm
  Tensor<T> forward(const Tensor<T>& x) const {
    return nn::conv2d(x, spec, weight, bias);
  }
};

template <typename T>
struct BatchNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  nn::BatchNormState<T> state;
  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    return nn::batch_norm(x, gamma, beta, state, mode);
  }
};

template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;
  Tensor<T> forward(const Tensor<T>& x) const {
    return nn::fully_connected(x, weight, bias);
  }
};

template <typename T>
struct ResidualBlock {
  Conv<T> conv1;
  BatchNorm<T> bn1;
  Conv<T> conv2;
  BatchNorm<T> bn2;
  std::optional<Conv<T>> proj;
  std::optional<BatchNorm<T>> proj_bn;
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
};

template <typename T>
struct Backbone {
  Conv<T> stem;
  BatchNorm<T> stem_bn;
  std::vector<ResidualBlock<T>> stages;
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
};

template <typename T>
struct Refinement {
  std::vector<ResidualBlock<T>> blocks;
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
};

// Global backbone, local five-backbone branch with stitching, registration
// and fusion, and the two prediction heads.
template <typename T>
class PcnnModel {
 public:
  explicit PcnnModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const Variant& variant() const { return config_.variant; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  std::size_t feature_channels() const { return feature_channels_; }
  std::size_t feature_height() const { return feature_h_; }
  std::size_t feature_width() const { return feature_w_; }
  const regions::RegionLayout* local_layout() const {
    return layout_ ? &*layout_ : nullptr;
  }

  Tensor<T> gfieb_forward(const Tensor<T>& images, Mode mode);
  Tensor<T> lfsieb_forward(const Tensor<T>& images, Mode mode);
  // Affine parameters predicted from the local features, N x 2 x 3.
  Tensor<T> locnet_forward(const Tensor<T>& o_l, Mode mode);
  Tensor<T> mdim_forward(const Tensor<T>& o_g, const Tensor<T>& o_l, Mode mode);
  Heads<T> heads_forward(const Tensor<T>& fused, const Tensor<T>* o_l,
                         Mode mode);
  ForwardResult<T> forward(const Tensor<T>& images, std::span<const int> labels,
                           Mode mode);
  // Global logits only, for prediction.
  Tensor<T> logits(const Tensor<T>& images, Mode mode);

  std::vector<Param<T>> parameters();
  std::vector<Buffer<T>> buffers();
  void zero_grad();

 private:
  void check_images(const Tensor<T>& images) const;

  ModelConfig config_;
  double alpha_;
  double beta_;
  std::size_t feature_channels_;
  std::size_t feature_h_;
  std::size_t feature_w_;
  std::optional<regions::RegionLayout> layout_;
  regions::RegionSet image_regions_;

  Backbone<T> gfieb_;
  std::vector<Backbone<T>> lfsieb_;
  Refinement<T> loc_refine_;
  Linear<T> loc_fc_;
  Refinement<T> gpn_refine_;
  Linear<T> gpn_fc_;
  Linear<T> lpn_fc_;
};

// Loss weighted over the global and local heads.
template <typename T>
Tensor<T> pcnn_loss(const Tensor<T>& global_logits,
                    const Tensor<T>& local_logits, std::span<const int> labels,
                    double alpha, double beta);

// Row-wise argmax, smallest index on ties.
template <typename T>
std::vector<int> predict(const Tensor<T>& logits);

}  // namespace pcnn::model

#endif  // PCNN_MODEL_HPP_
