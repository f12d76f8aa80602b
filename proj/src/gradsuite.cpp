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


#include "pcnn/gradsuite.hpp"

#include <cmath>
#include <random>

#include "pcnn/kernels.hpp"
#include "pcnn/model.hpp"
#include "pcnn/regions.hpp"

namespace pcnn::gradsuite {

namespace {

using TD = Tensor<double>;

TD uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = u(rng);
  return TD(std::move(shape), std::move(v));
}

TD weighted(const TD& y, const TD& w) { return sum(mul(y, w)); }

// Keeps values at least `margin` away from zero (ReLU kink).
TD off_zero(TD t, double margin) {
  for (auto& v : t.mutable_data())
    if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
  return t;
}

// Moves sample points off integer pixel coordinates, where bilinear
// sampling is not differentiable.
TD off_pixel_centres(const TD& grid, std::size_t h, std::size_t w) {
  std::vector<double> g(grid.data().begin(), grid.data().end());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double half = 0.5 * static_cast<double>((i % 2 == 0 ? w : h) - 1);
    double p = (g[i] + 1) * half;
    const double frac = p - std::floor(p);
    if (frac < 0.05) p += 0.05;
    if (frac > 0.95) p -= 0.05;
    g[i] = p / half - 1;
  }
  return TD(grid.shape(), g);
}

model::ModelConfig small_model() {
  model::ModelConfig cfg;
  cfg.backbone.stem_channels = 4;
  cfg.backbone.stage_channels = {4, 8};
  cfg.backbone.stage_strides = {1, 2};
  cfg.height = 16;
  cfg.width = 16;
  cfg.refine_blocks = 1;
  cfg.seed = 3;
  return cfg;
}

// Moves the registration off the identity (identity samples sit on pixel
// centres) and shrinks the head weights so the softmax is not saturated.
void condition(model::PcnnModel<double>& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto& p : m.parameters()) {
    if (p.name == "locnet.fc.weight") {
      for (auto& v : p.value.mutable_data()) v = u(rng);
    } else if (p.name == "locnet.fc.bias") {
      const double base[6] = {0.93, 0.04, 0.031, -0.027, 0.91, 0.017};
      for (int i = 0; i < 6; ++i) p.value.mutable_data()[i] = base[i];
    } else if (p.name == "gpn.fc.weight" || p.name == "lpn.fc.weight") {
      for (auto& v : p.value.mutable_data()) v *= 0.1;
    }
  }
}

}  // namespace

std::vector<GradReport> run(std::uint64_t seed,
                            const std::function<void(const GradReport&)>& progress) {
  std::mt19937_64 rng(seed);
  std::vector<GradReport> out;
  auto add = [&](GradReport r) {
    if (progress) progress(r);
    out.push_back(std::move(r));
  };
  const GradCheckOptions kernel_opts{.eps = 1e-5};
  const std::size_t n = 2, c = 3, h = 6, w = 5, o = 4;

  TD x = uniform({n, c, h, w}, rng);
  TD y = uniform({n, c, h, w}, rng);
  TD u_x = uniform({n, c, h, w}, rng);
  add(grad_check("add", [&](const std::vector<TD>& in) { return weighted(pcnn::add(in[0], in[1]), u_x); },
                 {x, y}, kernel_opts));
  add(grad_check("mul", [&](const std::vector<TD>& in) { return weighted(mul(in[0], in[1]), u_x); },
                 {x, y}, kernel_opts));
  add(grad_check("relu", [&](const std::vector<TD>& in) { return weighted(relu(in[0]), u_x); },
                 {off_zero(x.detach(), 1e-2)}, kernel_opts));

  for (const std::size_t k : {1, 3}) {
    for (const std::size_t s : {1, 2}) {
      nn::ConvSpec spec{c, o, {k, k}, {s, s}, {k / 2, k / 2}};
      const std::size_t oh = nn::ConvSpec::output_extent(h, k, s, k / 2);
      const std::size_t ow = nn::ConvSpec::output_extent(w, k, s, k / 2);
      TD u = uniform({n, o, oh, ow}, rng);
      add(grad_check("conv2d k" + std::to_string(k) + " s" + std::to_string(s),
                     [&](const std::vector<TD>& in) {
                       return weighted(nn::conv2d(in[0], spec, in[1], in[2]), u);
                     },
                     {x.detach(), uniform({o, c, k, k}, rng), uniform({o}, rng)}, kernel_opts));
    }
  }

  TD u_pool = uniform({n, c, h / 2, w / 2}, rng);
  add(grad_check("max_pool2d",
                 [&](const std::vector<TD>& in) { return weighted(nn::max_pool2d(in[0]), u_pool); },
                 {x.detach()}, kernel_opts));
  TD u_nc = uniform({n, c}, rng);
  add(grad_check("global_max_pool",
                 [&](const std::vector<TD>& in) { return weighted(nn::global_max_pool(in[0]), u_nc); },
                 {x.detach()}, kernel_opts));
  add(grad_check("global_avg_pool",
                 [&](const std::vector<TD>& in) { return weighted(nn::global_avg_pool(in[0]), u_nc); },
                 {x.detach()}, kernel_opts));
  add(grad_check("batch_norm",
                 [&](const std::vector<TD>& in) {
                   nn::BatchNormState<double> st(c);
                   return weighted(nn::batch_norm(in[0], in[1], in[2], st, nn::Mode::kTrain), u_x);
                 },
                 {x.detach(), uniform({c}, rng, 0.5, 1.5), uniform({c}, rng)}, kernel_opts));

  TD u_fc = uniform({n, o}, rng);
  add(grad_check("fully_connected",
                 [&](const std::vector<TD>& in) {
                   return weighted(nn::fully_connected(in[0], in[1], in[2]), u_fc);
                 },
                 {uniform({n, 10}, rng), uniform({o, 10}, rng), uniform({o}, rng)}, kernel_opts));

  const std::vector<int> labels{1, 5};
  add(grad_check("softmax_cross_entropy",
                 [&](const std::vector<TD>& in) { return nn::softmax_cross_entropy(in[0], labels); },
                 {uniform({n, 7}, rng, -3, 3)}, kernel_opts));

  for (const auto& [rh, rw] : {std::pair<std::size_t, std::size_t>{9, 7}, {4, 3}}) {
    TD u = uniform({n, c, rh, rw}, rng);
    add(grad_check("bilinear_resize " + std::to_string(rh) + "x" + std::to_string(rw),
                   [&](const std::vector<TD>& in) {
                     return weighted(nn::bilinear_resize(in[0], rh, rw), u);
                   },
                   {x.detach()}, kernel_opts));
  }

  TD u_grid = uniform({n, 4, 5, 2}, rng);
  add(grad_check("grid_generate",
                 [&](const std::vector<TD>& in) { return weighted(nn::grid_generate(in[0], 4, 5), u_grid); },
                 {uniform({n, 2, 3}, rng)}, kernel_opts));
  TD u_sample = uniform({n, c, 4, 5}, rng);
  add(grad_check("grid_sample",
                 [&](const std::vector<TD>& in) { return weighted(nn::grid_sample(in[0], in[1]), u_sample); },
                 {x.detach(), off_pixel_centres(uniform({n, 4, 5, 2}, rng, -1.2, 1.2), h, w)},
                 kernel_opts));

  {
    const auto layout = regions::RegionLayout::face({});
    const auto set = layout.resolve(20, 20);
    TD image = uniform({1, 2, 20, 20}, rng);
    std::vector<TD> crop_w;
    for (const auto& r : set.rects)
      crop_w.push_back(uniform({1, 2, r.row_end - r.row_begin, r.col_end - r.col_begin}, rng));
    add(grad_check("crop_regions",
                   [&](const std::vector<TD>& in) {
                     const auto crops = regions::crop_regions(in[0], set);
                     TD total = weighted(crops[0], crop_w[0]);
                     for (std::size_t k = 1; k < crops.size(); ++k)
                       total = pcnn::add(total, weighted(crops[k], crop_w[k]));
                     return total;
                   },
                   {image}, kernel_opts));
    std::vector<TD> feats;
    for (std::size_t k = 0; k < set.rects.size(); ++k) feats.push_back(uniform({1, 2, 3 + k % 2, 4}, rng));
    TD u = uniform({1, 2, 8, 8}, rng);
    add(grad_check("stitch_features",
                   [&](const std::vector<TD>& in) {
                     return weighted(regions::stitch_features(in, layout, 8, 8), u);
                   },
                   feats, kernel_opts));
  }

  {
    model::PcnnModel<double> m(small_model());
    condition(m, 5);
    TD o_g = uniform({2, 8, 8, 8}, rng);
    TD o_l = uniform({2, 8, 8, 8}, rng);
    std::vector<TD> inputs{o_g, o_l};
    for (auto& p : m.parameters())
      if (p.name.starts_with("locnet")) inputs.push_back(p.value);
    add(grad_check("mdim_forward",
                   [&](const std::vector<TD>& in) {
                     return sum(mul(m.mdim_forward(in[0], in[1], nn::Mode::kTrain), o_g));
                   },
                   inputs, {.eps = 1e-6, .max_coords_per_input = 40, .seed = 1}));
  }

  {
    model::PcnnModel<double> m(small_model());
    condition(m, 6);
    TD images = uniform({2, 1, 16, 16}, rng, 0.0, 1.0);
    const std::vector<int> y{2, 5};
    std::vector<TD> inputs{images};
    for (auto& p : m.parameters()) inputs.push_back(p.value);
    add(grad_check("pcnn_forward loss",
                   [&](const std::vector<TD>& in) {
                     return m.forward(in[0], y, nn::Mode::kTrain).loss;
                   },
                   inputs, {.eps = 1e-6, .max_coords_per_input = 6, .seed = 2}));
  }
  return out;
}

}  // namespace pcnn::gradsuite
