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

#include "pcnn/model.hpp"

#include <cmath>
#include <sstream>

#include "pcnn/error.hpp"

namespace pcnn::model {

void BackboneConfig::validate() const {
  if (stem_channels == 0) throw InvalidConfig("stem_channels must be >= 1");
  if (stage_channels.size() != stage_strides.size()) {
    throw InvalidConfig("stage_channels and stage_strides differ in length");
  }
  for (auto c : stage_channels) {
    if (c == 0) throw InvalidConfig("stage channel count must be >= 1");
  }
  for (auto s : stage_strides) {
    if (s == 0) throw InvalidConfig("stage stride must be >= 1");
  }
}

std::size_t BackboneConfig::out_channels() const {
  return stage_channels.empty() ? stem_channels : stage_channels.back();
}

std::size_t BackboneConfig::output_extent(std::size_t input) const {
  std::size_t e = nn::ConvSpec::output_extent(input, 3, 1, 1);
  for (auto s : stage_strides) e = nn::ConvSpec::output_extent(e, 3, s, 1);
  return e;
}

namespace {

struct VariantName {
  VariantKind kind;
  const char* name;
};

constexpr VariantName kVariantNames[] = {
    {VariantKind::kFull, "full"},
    {VariantKind::kNoCrop, "no_crop"},
    {VariantKind::kTwoRandomCrop, "two_random_crop"},
    {VariantKind::kThreeCrop, "three_crop"},
    {VariantKind::kFourCrop, "four_crop"},
    {VariantKind::kGfiebOnly, "gfieb_only"},
    {VariantKind::kNoMdim, "no_mdim"},
};

}  // namespace

Variant Variant::parse(const std::string& text) {
  for (const auto& v : kVariantNames) {
    if (text == v.name) return {v.kind};
  }
  const std::string prefix = "alpha_beta:";
  if (text.rfind(prefix, 0) == 0) {
    std::istringstream is(text.substr(prefix.size()));
    double a = 0, b = 0;
    char sep = 0;
    if (is >> a >> sep >> b && sep == ':' && is.eof()) return custom(a, b);
  }
  throw InvalidConfig("unknown variant '" + text + "'");
}

std::string Variant::name() const {
  if (kind == VariantKind::kCustomAlphaBeta) {
    std::ostringstream os;
    os << "alpha_beta:" << alpha << ':' << beta;
    return os.str();
  }
  for (const auto& v : kVariantNames) {
    if (v.kind == kind) return v.name;
  }
  return "unknown";
}

std::vector<Variant> all_variants() {
  std::vector<Variant> out;
  for (const auto& v : kVariantNames) out.push_back({v.kind});
  return out;
}

double ModelConfig::effective_alpha() const {
  return variant.kind == VariantKind::kCustomAlphaBeta ? variant.alpha : alpha;
}
double ModelConfig::effective_beta() const {
  return variant.kind == VariantKind::kCustomAlphaBeta ? variant.beta : beta;
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> y = relu(bn1.forward(conv1.forward(x), mode));
  y = bn2.forward(conv2.forward(y), mode);
  Tensor<T> shortcut = proj ? proj_bn->forward(proj->forward(x), mode) : x;
  return relu(add(y, shortcut));
}

template <typename T>
Tensor<T> Backbone<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> y = relu(stem_bn.forward(stem.forward(x), mode));
  for (auto& stage : stages) y = stage.forward(y, mode);
  return y;
}

template <typename T>
Tensor<T> Refinement<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> y = x;
  for (auto& block : blocks) y = block.forward(y, mode);
  return y;
}

namespace {

// Draws every initial value from one seeded stream, in construction order.
// Values are drawn in double precision so float and double models built from
// the same seed agree up to rounding.
template <typename T>
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor<T> fan_in_normal(Shape shape, std::size_t fan_in) {
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(normal_(rng_) * std);
    return trainable(Tensor<T>(std::move(shape), std::move(v)));
  }

  static Tensor<T> constant(Shape shape, T value) {
    return trainable(Tensor<T>(std::move(shape), value));
  }

  Conv<T> conv(std::size_t in, std::size_t out, std::size_t k,
               std::size_t stride) {
    nn::ConvSpec spec{in, out, {k, k}, {stride, stride}, {k / 2, k / 2}};
    return {spec, fan_in_normal({out, in, k, k}, in * k * k), Tensor<T>()};
  }

  static BatchNorm<T> batch_norm(std::size_t ch) {
    return {constant({ch}, T(1)), constant({ch}, T(0)),
            nn::BatchNormState<T>(ch)};
  }

  ResidualBlock<T> block(std::size_t in, std::size_t out, std::size_t stride) {
    ResidualBlock<T> b{conv(in, out, 3, stride), batch_norm(out),
                       conv(out, out, 3, 1), batch_norm(out),
                       std::nullopt, std::nullopt};
    if (in != out || stride != 1) {
      b.proj = conv(in, out, 1, stride);
      b.proj_bn = batch_norm(out);
    }
    return b;
  }

  Backbone<T> backbone(const BackboneConfig& cfg) {
    Backbone<T> b{conv(1, cfg.stem_channels, 3, 1),
                  batch_norm(cfg.stem_channels), {}};
    std::size_t in = cfg.stem_channels;
    for (std::size_t i = 0; i < cfg.stage_channels.size(); ++i) {
      b.stages.push_back(block(in, cfg.stage_channels[i], cfg.stage_strides[i]));
      in = cfg.stage_channels[i];
    }
    return b;
  }

  Refinement<T> refinement(std::size_t ch, std::size_t blocks) {
    Refinement<T> r;
    for (std::size_t i = 0; i < blocks; ++i) r.blocks.push_back(block(ch, ch, 1));
    return r;
  }

  Linear<T> linear(std::size_t in, std::size_t out) {
    return {fan_in_normal({out, in}, in), constant({out}, T(0))};
  }

 private:
  static Tensor<T> trainable(Tensor<T> t) {
    t.set_requires_grad(true);
    return t;
  }

  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

template <typename T>
void collect_conv(Conv<T>& c, const std::string& p, std::vector<Param<T>>& out) {
  out.push_back({p + ".weight", c.weight, true});
  if (c.bias.defined()) out.push_back({p + ".bias", c.bias, false});
}

template <typename T>
void collect_bn(BatchNorm<T>& b, const std::string& p,
                std::vector<Param<T>>& out) {
  out.push_back({p + ".gamma", b.gamma, false});
  out.push_back({p + ".beta", b.beta, false});
}

template <typename T>
void collect_block(ResidualBlock<T>& b, const std::string& p,
                   std::vector<Param<T>>& out) {
  collect_conv(b.conv1, p + ".conv1", out);
  collect_bn(b.bn1, p + ".bn1", out);
  collect_conv(b.conv2, p + ".conv2", out);
  collect_bn(b.bn2, p + ".bn2", out);
  if (b.proj) {
    collect_conv(*b.proj, p + ".proj", out);
    collect_bn(*b.proj_bn, p + ".proj_bn", out);
  }
}

template <typename T>
void collect_backbone(Backbone<T>& b, const std::string& p,
                      std::vector<Param<T>>& out) {
  collect_conv(b.stem, p + ".stem", out);
  collect_bn(b.stem_bn, p + ".stem_bn", out);
  for (std::size_t i = 0; i < b.stages.size(); ++i) {
    collect_block(b.stages[i], p + ".stage" + std::to_string(i), out);
  }
}

template <typename T>
void collect_linear(Linear<T>& l, const std::string& p,
                    std::vector<Param<T>>& out) {
  out.push_back({p + ".weight", l.weight, true});
  out.push_back({p + ".bias", l.bias, false});
}

template <typename T>
void bn_buffers(BatchNorm<T>& b, const std::string& p,
                std::vector<Buffer<T>>& out) {
  out.push_back({p + ".running_mean", &b.state.running_mean});
  out.push_back({p + ".running_var", &b.state.running_var});
}

template <typename T>
void block_buffers(ResidualBlock<T>& b, const std::string& p,
                   std::vector<Buffer<T>>& out) {
  bn_buffers(b.bn1, p + ".bn1", out);
  bn_buffers(b.bn2, p + ".bn2", out);
  if (b.proj_bn) bn_buffers(*b.proj_bn, p + ".proj_bn", out);
}

template <typename T>
void backbone_buffers(Backbone<T>& b, const std::string& p,
                      std::vector<Buffer<T>>& out) {
  bn_buffers(b.stem_bn, p + ".stem_bn", out);
  for (std::size_t i = 0; i < b.stages.size(); ++i) {
    block_buffers(b.stages[i], p + ".stage" + std::to_string(i), out);
  }
}

std::optional<regions::RegionLayout> layout_for(const ModelConfig& cfg) {
  switch (cfg.variant.kind) {
    case VariantKind::kGfiebOnly:
      return std::nullopt;
    case VariantKind::kNoCrop:
      return regions::RegionLayout::whole();
    case VariantKind::kTwoRandomCrop:
      return regions::RegionLayout::random_pair(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    case VariantKind::kThreeCrop:
      return regions::RegionLayout::horizontal_bands(3);
    case VariantKind::kFourCrop:
      return regions::RegionLayout::grid(2, 2);
    default:
      return regions::RegionLayout::face(cfg.regions);
  }
}

}  // namespace

template <typename T>
PcnnModel<T>::PcnnModel(const ModelConfig& config)
    : config_(config),
      alpha_(config.effective_alpha()),
      beta_(config.effective_beta()) {
  config_.backbone.validate();
  config_.regions.validate();
  if (config_.classes < 2) throw InvalidConfig("need at least two classes");
  if (!(alpha_ > 0.0) || !(beta_ > 0.0)) {
    throw InvalidConfig("loss weights alpha and beta must be positive");
  }
  if (config_.height == 0 || config_.width == 0) {
    throw InvalidConfig("input extent must be positive");
  }
  feature_channels_ = config_.backbone.out_channels();
  feature_h_ = config_.backbone.output_extent(config_.height);
  feature_w_ = config_.backbone.output_extent(config_.width);
  layout_ = layout_for(config_);

  if (layout_) {
    if (config_.variant.kind == VariantKind::kFull ||
        config_.variant.kind == VariantKind::kNoMdim ||
        config_.variant.kind == VariantKind::kCustomAlphaBeta) {
      image_regions_ =
          regions::compute_regions(config_.height, config_.width, config_.regions);
    } else {
      try {
        image_regions_ = layout_->resolve(config_.height, config_.width);
      } catch (const TargetTooSmall& e) {
        throw InvalidConfig(std::string("input too small for layout: ") + e.what());
      }
    }
    // The stitched composite must match the global feature map.
    try {
      layout_->resolve(feature_h_, feature_w_);
    } catch (const TargetTooSmall& e) {
      throw InvalidConfig("local branch cannot be stitched to the " +
                          std::to_string(feature_h_) + "x" +
                          std::to_string(feature_w_) + " global feature map (" +
                          e.what() + ")");
    }
  }

  Initializer<T> init(config_.seed);
  gfieb_ = init.backbone(config_.backbone);
  if (layout_) {
    const std::size_t count = config_.share_local_weights ? 1 : layout_->size();
    for (std::size_t i = 0; i < count; ++i) {
      lfsieb_.push_back(init.backbone(config_.backbone));
    }
  }
  if (config_.variant.has_mdim()) {
    loc_refine_ = init.refinement(feature_channels_, config_.refine_blocks);
    // Zero weights and an identity bias make the initial warp the identity.
    loc_fc_ = {Initializer<T>::constant({6, feature_channels_}, T(0)),
               Initializer<T>::constant({6}, T(0))};
    auto b = loc_fc_.bias.mutable_data();
    b[0] = T(1);
    b[4] = T(1);
  }
  gpn_refine_ = init.refinement(feature_channels_, config_.refine_blocks);
  gpn_fc_ = init.linear(feature_channels_, config_.classes);
  if (layout_) lpn_fc_ = init.linear(feature_channels_, config_.classes);
}

template <typename T>
void PcnnModel<T>::check_images(const Tensor<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != 1) {
    throw InvalidShape("images must be N x 1 x H x W, got " +
                       to_string(images.shape()));
  }
}

template <typename T>
Tensor<T> PcnnModel<T>::gfieb_forward(const Tensor<T>& images, Mode mode) {
  check_images(images);
  return gfieb_.forward(images, mode);
}

template <typename T>
Tensor<T> PcnnModel<T>::lfsieb_forward(const Tensor<T>& images, Mode mode) {
  if (!layout_) throw InvalidConfig("variant has no local branch");
  check_images(images);
  if (images.dim(2) != config_.height || images.dim(3) != config_.width) {
    throw InvalidShape("model built for " + std::to_string(config_.height) +
                       "x" + std::to_string(config_.width) + " images, got " +
                       to_string(images.shape()));
  }
  auto crops = regions::crop_regions(images, image_regions_);
  std::vector<Tensor<T>> features;
  features.reserve(crops.size());
  for (std::size_t k = 0; k < crops.size(); ++k) {
    Backbone<T>& net = lfsieb_[config_.share_local_weights ? 0 : k];
    features.push_back(net.forward(crops[k], mode));
  }
  return regions::stitch_features(features, *layout_, feature_h_, feature_w_);
}

template <typename T>
Tensor<T> PcnnModel<T>::locnet_forward(const Tensor<T>& o_l, Mode mode) {
  if (!config_.variant.has_mdim()) {
    throw InvalidConfig("variant has no registration network");
  }
  Tensor<T> pooled = nn::global_avg_pool(loc_refine_.forward(o_l, mode));
  return reshape(loc_fc_.forward(pooled), {o_l.dim(0), 2, 3});
}

template <typename T>
Tensor<T> PcnnModel<T>::mdim_forward(const Tensor<T>& o_g, const Tensor<T>& o_l,
                                     Mode mode) {
  if (o_g.shape() != o_l.shape()) {
    throw InvalidShape("global " + to_string(o_g.shape()) + " and local " +
                       to_string(o_l.shape()) + " features differ");
  }
  Tensor<T> theta = locnet_forward(o_l, mode);
  Tensor<T> grid = nn::grid_generate(theta, o_g.dim(2), o_g.dim(3));
  Tensor<T> registered = nn::grid_sample(o_l, grid);
  return add(mul(registered, o_l), o_g);
}

template <typename T>
Heads<T> PcnnModel<T>::heads_forward(const Tensor<T>& fused,
                                     const Tensor<T>* o_l, Mode mode) {
  Heads<T> h;
  h.global_logits =
      gpn_fc_.forward(nn::global_max_pool(gpn_refine_.forward(fused, mode)));
  if (o_l != nullptr) {
    if (!layout_) throw InvalidConfig("variant has no local head");
    h.local_logits = lpn_fc_.forward(nn::global_max_pool(*o_l));
  }
  return h;
}

template <typename T>
ForwardResult<T> PcnnModel<T>::forward(const Tensor<T>& images,
                                       std::span<const int> labels, Mode mode) {
  ForwardResult<T> r;
  Tensor<T> o_g = gfieb_forward(images, mode);
  if (!layout_) {
    r.global_logits = heads_forward(o_g, nullptr, mode).global_logits;
    Tensor<T> ce = nn::softmax_cross_entropy(r.global_logits, labels);
    r.ce_global = static_cast<double>(ce.item());
    r.loss = scale(ce, static_cast<T>(alpha_));
    return r;
  }
  Tensor<T> o_l = lfsieb_forward(images, mode);
  if (o_l.shape() != o_g.shape()) {
    throw InvalidShape("branch outputs differ: " + to_string(o_g.shape()) +
                       " vs " + to_string(o_l.shape()));
  }
  Tensor<T> fused =
      config_.variant.has_mdim() ? mdim_forward(o_g, o_l, mode) : add(o_l, o_g);
  Heads<T> h = heads_forward(fused, &o_l, mode);
  r.global_logits = h.global_logits;
  r.local_logits = h.local_logits;
  Tensor<T> ce_g = nn::softmax_cross_entropy(h.global_logits, labels);
  Tensor<T> ce_l = nn::softmax_cross_entropy(h.local_logits, labels);
  r.ce_global = static_cast<double>(ce_g.item());
  r.ce_local = static_cast<double>(ce_l.item());
  r.loss = add(scale(ce_g, static_cast<T>(alpha_)),
               scale(ce_l, static_cast<T>(beta_)));
  return r;
}

template <typename T>
Tensor<T> PcnnModel<T>::logits(const Tensor<T>& images, Mode mode) {
  Tensor<T> o_g = gfieb_forward(images, mode);
  if (!layout_) return heads_forward(o_g, nullptr, mode).global_logits;
  Tensor<T> o_l = lfsieb_forward(images, mode);
  Tensor<T> fused =
      config_.variant.has_mdim() ? mdim_forward(o_g, o_l, mode) : add(o_l, o_g);
  return heads_forward(fused, nullptr, mode).global_logits;
}

template <typename T>
std::vector<Param<T>> PcnnModel<T>::parameters() {
  std::vector<Param<T>> out;
  collect_backbone(gfieb_, "gfieb", out);
  for (std::size_t i = 0; i < lfsieb_.size(); ++i) {
    collect_backbone(lfsieb_[i], "lfsieb" + std::to_string(i), out);
  }
  if (config_.variant.has_mdim()) {
    for (std::size_t i = 0; i < loc_refine_.blocks.size(); ++i) {
      collect_block(loc_refine_.blocks[i], "locnet.block" + std::to_string(i), out);
    }
    collect_linear(loc_fc_, "locnet.fc", out);
  }
  for (std::size_t i = 0; i < gpn_refine_.blocks.size(); ++i) {
    collect_block(gpn_refine_.blocks[i], "gpn.block" + std::to_string(i), out);
  }
  collect_linear(gpn_fc_, "gpn.fc", out);
  if (layout_) collect_linear(lpn_fc_, "lpn.fc", out);
  return out;
}

template <typename T>
std::vector<Buffer<T>> PcnnModel<T>::buffers() {
  std::vector<Buffer<T>> out;
  backbone_buffers(gfieb_, "gfieb", out);
  for (std::size_t i = 0; i < lfsieb_.size(); ++i) {
    backbone_buffers(lfsieb_[i], "lfsieb" + std::to_string(i), out);
  }
  if (config_.variant.has_mdim()) {
    for (std::size_t i = 0; i < loc_refine_.blocks.size(); ++i) {
      block_buffers(loc_refine_.blocks[i], "locnet.block" + std::to_string(i), out);
    }
  }
  for (std::size_t i = 0; i < gpn_refine_.blocks.size(); ++i) {
    block_buffers(gpn_refine_.blocks[i], "gpn.block" + std::to_string(i), out);
  }
  return out;
}

template <typename T>
void PcnnModel<T>::zero_grad() {
  for (auto& p : parameters()) p.value.zero_grad();
}

template <typename T>
Tensor<T> pcnn_loss(const Tensor<T>& global_logits,
                    const Tensor<T>& local_logits, std::span<const int> labels,
                    double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    throw InvalidArgument("alpha and beta must be positive");
  }
  return add(scale(nn::softmax_cross_entropy(global_logits, labels),
                   static_cast<T>(alpha)),
             scale(nn::softmax_cross_entropy(local_logits, labels),
                   static_cast<T>(beta)));
}

template <typename T>
std::vector<int> predict(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw InvalidShape("logits must be N x K");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  auto z = logits.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (z[i * k + j] > z[i * k + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

#define PCNN_INSTANTIATE(T)                                                   \
  template struct ResidualBlock<T>;                                           \
  template struct Backbone<T>;                                                \
  template struct Refinement<T>;                                              \
  template class PcnnModel<T>;                                                \
  template Tensor<T> pcnn_loss(const Tensor<T>&, const Tensor<T>&,            \
                               std::span<const int>, double, double);         \
  template std::vector<int> predict(const Tensor<T>&);

PCNN_INSTANTIATE(float)
PCNN_INSTANTIATE(double)

#undef PCNN_INSTANTIATE

}  // namespace pcnn::model
