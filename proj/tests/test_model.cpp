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

#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pcnn/error.hpp"
#include "pcnn/model.hpp"

namespace md = pcnn::model;
namespace nn = pcnn::nn;
using TD = pcnn::Tensor<double>;
using md::Mode;

namespace {

std::vector<double> values(const TD& t) {
  return {t.data().begin(), t.data().end()};
}

md::ModelConfig small_config(md::Variant variant = {}) {
  md::ModelConfig cfg;
  cfg.backbone.stem_channels = 4;
  cfg.backbone.stage_channels = {4, 8};
  cfg.backbone.stage_strides = {1, 2};
  cfg.height = 16;
  cfg.width = 16;
  cfg.refine_blocks = 1;
  cfg.variant = variant;
  cfg.seed = 3;
  return cfg;
}

// Moves the registration away from the identity so that sample points do
// not sit on pixel centres, and shrinks the heads so the softmax is not
// saturated.
void perturb_locnet(md::PcnnModel<double>& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto& p : m.parameters()) {
    if (p.name == "locnet.fc.weight") {
      for (auto& v : p.value.mutable_data()) v = u(rng);
    } else if (p.name == "locnet.fc.bias") {
      const double base[6] = {0.93, 0.04, 0.031, -0.027, 0.91, 0.017};
      auto b = p.value.mutable_data();
      for (int i = 0; i < 6; ++i) b[i] = base[i];
    } else if (p.name == "gpn.fc.weight" || p.name == "lpn.fc.weight") {
      for (auto& v : p.value.mutable_data()) v *= 0.1;
    }
  }
}

// Logits over 7 classes whose cross entropy for label 0 is exactly `ce`.
TD logits_with_ce(double ce) {
  const double t = std::log(6.0 / (std::exp(ce) - 1.0));
  std::vector<double> z(7, 0.0);
  z[0] = t;
  return TD({1, 7}, z);
}

}  // namespace

TEST_CASE("seeded construction is deterministic") {
  md::ModelConfig cfg;
  md::PcnnModel<double> a(cfg), b(cfg);
  auto pa = a.parameters(), pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(values(pa[i].value) == values(pb[i].value));
  }
  cfg.seed = 1;
  md::PcnnModel<double> c(cfg);
  CHECK(values(c.parameters()[0].value) != values(pa[0].value));
}

TEST_CASE("initialization") {
  md::PcnnModel<double> m(md::ModelConfig{});
  std::map<std::string, TD> by_name;
  for (auto& p : m.parameters()) by_name[p.name] = p.value;
  CHECK(values(by_name.at("locnet.fc.bias")) == std::vector<double>{1, 0, 0, 0, 1, 0});
  for (double v : by_name.at("locnet.fc.weight").data()) CHECK(v == 0.0);

  const TD& w = by_name.at("gfieb.stage2.conv1.weight");
  double ss = 0;
  for (double v : w.data()) ss += v * v;
  const double fan_in = 32.0 * 9.0;
  CHECK(std::sqrt(ss / w.size()) == doctest::Approx(std::sqrt(2.0 / fan_in)).epsilon(0.05));

  for (auto& p : m.parameters()) {
    const bool bias_like = p.name.ends_with(".bias") || p.name.ends_with(".beta") ||
                           p.name.ends_with(".gamma");
    CHECK_MESSAGE(p.decay != bias_like, p.name);
  }
}

TEST_CASE("variant wiring") {
  for (const auto& v : md::all_variants()) {
    CHECK(md::Variant::parse(v.name()) == v);
  }
  auto custom = md::Variant::parse("alpha_beta:4:16");
  CHECK(custom.kind == md::VariantKind::kCustomAlphaBeta);
  CHECK(custom.alpha == 4.0);
  CHECK(custom.beta == 16.0);
  CHECK(md::Variant::parse(custom.name()) == custom);
  CHECK_THROWS_AS(md::Variant::parse("five_crop"), pcnn::InvalidConfig);

  md::ModelConfig cfg;
  cfg.variant = {md::VariantKind::kGfiebOnly};
  md::PcnnModel<double> g(cfg);
  for (auto& p : g.parameters()) {
    CHECK_FALSE(p.name.starts_with("lfsieb"));
    CHECK_FALSE(p.name.starts_with("locnet"));
    CHECK_FALSE(p.name.starts_with("lpn"));
  }

  auto count_backbones = [](md::PcnnModel<double>& m) {
    std::size_t n = 0;
    for (auto& p : m.parameters())
      if (p.name.starts_with("lfsieb") && p.name.ends_with("stem.weight")) ++n;
    return n;
  };
  const std::pair<md::VariantKind, std::size_t> expected[] = {
      {md::VariantKind::kFull, 5},         {md::VariantKind::kNoCrop, 1},
      {md::VariantKind::kTwoRandomCrop, 2}, {md::VariantKind::kThreeCrop, 3},
      {md::VariantKind::kFourCrop, 4},     {md::VariantKind::kNoMdim, 5}};
  for (auto [kind, n] : expected) {
    cfg.variant = {kind};
    md::PcnnModel<double> m(cfg);
    CHECK(count_backbones(m) == n);
    bool has_locnet = false;
    for (auto& p : m.parameters()) has_locnet |= p.name.starts_with("locnet");
    CHECK(has_locnet == (kind != md::VariantKind::kNoMdim));
  }

  cfg.variant = {};
  cfg.share_local_weights = true;
  md::PcnnModel<double> shared(cfg);
  CHECK(count_backbones(shared) == 1);

  md::ModelConfig tiny;
  tiny.height = tiny.width = 16;  // 4x4 features cannot hold the middle band
  CHECK_THROWS_AS(md::PcnnModel<double>{tiny}, pcnn::InvalidConfig);
  md::ModelConfig bad;
  bad.beta = 0;
  CHECK_THROWS_AS(md::PcnnModel<double>{bad}, pcnn::InvalidConfig);
  bad = {};
  bad.backbone.stage_strides = {1, 2};
  CHECK_THROWS_AS(md::PcnnModel<double>{bad}, pcnn::InvalidConfig);
}

TEST_CASE("branch shapes at 32x32") {
  md::PcnnModel<double> m(md::ModelConfig{});
  std::mt19937_64 rng(1);
  TD images = oracle::random_tensor({2, 1, 32, 32}, rng, 0.0, 1.0);
  TD o_g = m.gfieb_forward(images, Mode::kEval);
  TD o_l = m.lfsieb_forward(images, Mode::kEval);
  CHECK(o_g.shape() == pcnn::Shape{2, 64, 8, 8});
  CHECK(o_l.shape() == o_g.shape());
  CHECK(m.feature_channels() == 64);
  CHECK(m.feature_height() == 8);

  TD zeros({2, 1, 32, 32}, 0.0);
  for (double v : m.gfieb_forward(zeros, Mode::kEval).data()) CHECK(std::isfinite(v));
  TD constant({2, 1, 32, 32}, 0.5);
  for (double v : m.lfsieb_forward(constant, Mode::kEval).data()) CHECK(std::isfinite(v));

  CHECK_THROWS_AS(m.lfsieb_forward(TD({1, 1, 24, 24}, 0.0), Mode::kEval), pcnn::InvalidShape);
  CHECK_THROWS_AS(m.gfieb_forward(TD({1, 3, 32, 32}, 0.0), Mode::kEval), pcnn::InvalidShape);
}

TEST_CASE("registration and fusion") {
  md::PcnnModel<double> m(md::ModelConfig{});
  std::mt19937_64 rng(2);
  SUBCASE("identity theta at initialization") {
    for (int trial = 0; trial < 3; ++trial) {
      TD o_g = oracle::random_tensor({2, 64, 8, 8}, rng);
      TD o_l = oracle::random_tensor({2, 64, 8, 8}, rng);
      TD out = m.mdim_forward(o_g, o_l, Mode::kTrain);
      double worst = 0;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double expect = o_l.data()[i] * o_l.data()[i] + o_g.data()[i];
        worst = std::max(worst, std::abs(out.data()[i] - expect));
      }
      CHECK(worst <= 1e-5);
    }
  }
  SUBCASE("zero local features return the global features exactly") {
    TD o_g = oracle::random_tensor({2, 64, 8, 8}, rng);
    TD out = m.mdim_forward(o_g, TD({2, 64, 8, 8}, 0.0), Mode::kEval);
    CHECK(values(out) == values(o_g));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(m.mdim_forward(TD({2, 64, 8, 8}, 0.0), TD({2, 64, 4, 8}, 0.0),
                                   Mode::kEval),
                    pcnn::InvalidShape);
  }
  SUBCASE("gradients through theta") {
    md::PcnnModel<double> s(small_config());
    perturb_locnet(s, 5);
    TD o_g = oracle::random_tensor({2, 8, 8, 8}, rng);
    TD o_l = oracle::random_tensor({2, 8, 8, 8}, rng);
    std::vector<TD> inputs{o_g, o_l};
    for (auto& p : s.parameters())
      if (p.name.starts_with("locnet")) inputs.push_back(p.value);
    auto r = pcnn::grad_check(
        "mdim",
        [&](const std::vector<TD>& in) {
          return pcnn::sum(pcnn::mul(s.mdim_forward(in[0], in[1], Mode::kTrain), o_g));
        },
        inputs, {.eps = 1e-5, .max_coords_per_input = 40, .seed = 1});
    INFO("worst index " << r.worst_index);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("heads") {
  md::PcnnModel<double> m(md::ModelConfig{});
  std::mt19937_64 rng(3);
  TD fused = oracle::random_tensor({2, 64, 8, 8}, rng);
  TD o_l = oracle::random_tensor({2, 64, 8, 8}, rng);
  auto h1 = m.heads_forward(fused, &o_l, Mode::kEval);
  auto h2 = m.heads_forward(fused, &o_l, Mode::kEval);
  CHECK(h1.global_logits.shape() == pcnn::Shape{2, 7});
  CHECK(h1.local_logits.shape() == pcnn::Shape{2, 7});
  CHECK(values(h1.global_logits) == values(h2.global_logits));
  CHECK(values(h1.local_logits) == values(h2.local_logits));
}

TEST_CASE("loss") {
  const std::vector<int> label0{0};
  CHECK(nn::softmax_cross_entropy(logits_with_ce(1.0), label0).item() ==
        doctest::Approx(1.0).epsilon(1e-12));
  TD l = md::pcnn_loss(logits_with_ce(1.0), logits_with_ce(0.5), label0, 12.0, 8.0);
  CHECK(std::abs(l.item() - 16.0) <= 1e-9);
  TD e = md::pcnn_loss(logits_with_ce(1.0), logits_with_ce(1.0), label0, 10.0, 10.0);
  CHECK(std::abs(e.item() - 20.0) <= 1e-9);
  CHECK_THROWS_AS(md::pcnn_loss(logits_with_ce(1.0), logits_with_ce(1.0), label0, 12.0, 0.0),
                  pcnn::InvalidArgument);
  const std::vector<int> bad{7};
  CHECK_THROWS_AS(md::pcnn_loss(logits_with_ce(1.0), logits_with_ce(1.0), bad, 12.0, 8.0),
                  pcnn::InvalidLabel);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    TD g = oracle::random_tensor({4, 7}, rng, -5, 5);
    TD lo = oracle::random_tensor({4, 7}, rng, -5, 5);
    std::vector<int> labels{trial % 7, (trial + 2) % 7, 6, 0};
    const double ce_g = nn::softmax_cross_entropy(g, labels).item();
    const double ce_l = nn::softmax_cross_entropy(lo, labels).item();
    CHECK(std::abs(md::pcnn_loss(g, lo, labels, 12.0, 8.0).item() -
                   (12.0 * ce_g + 8.0 * ce_l)) <= 1e-9);
  }
}

TEST_CASE("forward wiring") {
  std::mt19937_64 rng(5);
  TD images = oracle::random_tensor({2, 1, 32, 32}, rng, 0.0, 1.0);
  const std::vector<int> labels{1, 4};

  md::PcnnModel<double> full(md::ModelConfig{});
  auto r = full.forward(images, labels, Mode::kTrain);
  CHECK(r.loss.item() > 0);
  CHECK(std::isfinite(r.loss.item()));
  CHECK(std::abs(r.loss.item() - (12.0 * r.ce_global + 8.0 * r.ce_local)) <= 1e-9);

  md::ModelConfig gcfg;
  gcfg.variant = {md::VariantKind::kGfiebOnly};
  md::PcnnModel<double> g(gcfg);
  auto rg = g.forward(images, labels, Mode::kTrain);
  CHECK_FALSE(rg.local_logits.defined());
  CHECK(rg.ce_local == 0.0);
  CHECK(std::abs(rg.loss.item() - 12.0 * rg.ce_global) <= 1e-12);

  md::ModelConfig ncfg;
  ncfg.variant = {md::VariantKind::kNoMdim};
  md::PcnnModel<double> nm(ncfg);
  TD o_g = nm.gfieb_forward(images, Mode::kEval);
  TD o_l = nm.lfsieb_forward(images, Mode::kEval);
  TD fused = pcnn::add(o_l, o_g);
  CHECK(values(nm.logits(images, Mode::kEval)) ==
        values(nm.heads_forward(fused, nullptr, Mode::kEval).global_logits));

  md::ModelConfig ccfg;
  ccfg.variant = md::Variant::custom(4, 16);
  md::PcnnModel<double> c(ccfg);
  CHECK(c.alpha() == 4.0);
  CHECK(c.beta() == 16.0);

  for (const auto& v : md::all_variants()) {
    md::ModelConfig cfg;
    cfg.variant = v;
    md::PcnnModel<double> m(cfg);
    auto out = m.forward(images, labels, Mode::kTrain);
    CHECK_MESSAGE(std::isfinite(out.loss.item()), v.name());
  }
}

TEST_CASE("end-to-end gradients on a 2x1x16x16 batch") {
  md::PcnnModel<double> m(small_config());
  perturb_locnet(m, 6);
  std::mt19937_64 rng(6);
  TD images = oracle::random_tensor({2, 1, 16, 16}, rng, 0.0, 1.0);
  const std::vector<int> labels{2, 5};
  std::vector<TD> inputs{images};
  for (auto& p : m.parameters()) inputs.push_back(p.value);
  auto r = pcnn::grad_check(
      "pcnn_forward",
      [&](const std::vector<TD>& in) {
        return m.forward(in[0], labels, Mode::kTrain).loss;
      },
      inputs, {.eps = 1e-6, .max_coords_per_input = 6, .seed = 2});
  INFO("worst index " << r.worst_index);
  CHECK(r.max_rel_error <= 1e-4);
}

// The zero-initialized locnet head blocks gradient to the locnet blocks until
// it has moved, so a small descent step separates the batches.
TEST_CASE("every parameter receives a gradient") {
  md::PcnnModel<double> m(md::ModelConfig{});
  auto params = m.parameters();
  std::vector<bool> seen(params.size(), false);
  std::mt19937_64 rng(7);
  for (int batch = 0; batch < 5; ++batch) {
    TD images = oracle::random_tensor({4, 1, 32, 32}, rng, 0.0, 1.0);
    std::vector<int> labels{batch % 7, (batch + 3) % 7, 6, 1};
    m.zero_grad();
    pcnn::backward(m.forward(images, labels, Mode::kTrain).loss);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].value.has_grad()) continue;
      for (double g : params[i].value.grad())
        if (g != 0.0) seen[i] = true;
      auto v = params[i].value.mutable_data();
      auto g = params[i].value.grad();
      for (std::size_t j = 0; j < v.size(); ++j) v[j] -= 1e-6 * g[j];
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) CHECK_MESSAGE(seen[i], params[i].name);
}

TEST_CASE("prediction") {
  TD z({2, 4}, std::vector<double>{0.1, 0.7, 0.7, -1, 3, 2, 1, 0});
  CHECK(md::predict(z) == std::vector<int>{1, 0});
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    TD logits = oracle::random_tensor({3, 7}, rng, -4, 4);
    std::vector<double> shifted(logits.data().begin(), logits.data().end());
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 7; ++j) shifted[i * 7 + j] += 10.0 * (trial - 10) + i;
    CHECK(md::predict(logits) == md::predict(TD({3, 7}, shifted)));
  }
}

TEST_CASE("float model runs") {
  md::PcnnModel<float> m(md::ModelConfig{});
  pcnn::Tensor<float> images({2, 1, 32, 32}, 0.25f);
  const std::vector<int> labels{0, 3};
  auto r = m.forward(images, labels, Mode::kTrain);
  CHECK(std::isfinite(r.loss.item()));
  pcnn::backward(r.loss);
}
