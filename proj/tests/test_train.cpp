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
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "pcnn/checkpoint.hpp"
#include "pcnn/config.hpp"
#include "pcnn/data.hpp"
#include "pcnn/error.hpp"
#include "pcnn/train.hpp"

namespace fs = std::filesystem;
namespace md = pcnn::model;
namespace dt = pcnn::data;
namespace tr = pcnn::train;
namespace ck = pcnn::checkpoint;
namespace cf = pcnn::config;

namespace {

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

cf::RunConfig small_run(std::size_t epochs, std::size_t batch) {
  cf::RunConfig rc;
  rc.model = small_config();
  rc.train.epochs = epochs;
  rc.train.batch_size = batch;
  rc.seed = rc.train.seed = rc.model.seed = 3;
  return rc;
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("pcnn_test_train_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

template <typename T>
std::vector<std::vector<T>> snapshot(md::PcnnModel<T>& m) {
  std::vector<std::vector<T>> out;
  for (const auto& p : m.parameters()) out.emplace_back(p.value.data().begin(), p.value.data().end());
  for (const auto& b : m.buffers()) out.push_back(*b.values);
  return out;
}

std::vector<double> losses(const tr::TrainHistory& h) {
  std::vector<double> v;
  for (const auto& e : h.epochs) v.push_back(e.mean_loss);
  return v;
}

}  // namespace

TEST_CASE("sgd step by hand") {
  std::vector<double> p{1.0}, g{0.1}, v{0.0};
  tr::sgd_momentum_step<double>(p, g, v, 0.01, 0.9, 0.0);
  CHECK(v[0] == 0.1);
  CHECK(p[0] == doctest::Approx(0.999).epsilon(1e-15));

  std::vector<double> q{0.37}, z{0.0}, w{0.0};
  tr::sgd_momentum_step<double>(q, z, w, 0.01, 0.9, 0.0);
  CHECK(q[0] == 0.37);
  CHECK(w[0] == 0.0);
}

TEST_CASE("sgd two steps match the unrolled recurrence") {
  const double lr = 0.05, m = 0.9, wd = 1e-3, g = 0.3, p0 = -0.7;
  std::vector<double> p{p0}, grad{g}, v{0.0};
  tr::sgd_momentum_step<double>(p, grad, v, lr, m, wd);
  tr::sgd_momentum_step<double>(p, grad, v, lr, m, wd);
  const double v1 = m * 0.0 + (g + wd * p0);
  const double p1 = p0 - lr * v1;
  const double v2 = m * v1 + (g + wd * p1);
  const double p2 = p1 - lr * v2;
  CHECK(v[0] == v2);
  CHECK(p[0] == p2);
}

TEST_CASE("sgd without momentum or decay is plain gradient descent") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> p(13), g(13), v(13);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = u(rng);
      g[i] = u(rng);
      v[i] = u(rng);
    }
    const auto before = p;
    const double lr = 0.001 + 0.1 * std::abs(u(rng));
    tr::sgd_momentum_step<double>(p, g, v, lr, 0.0, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == before[i] - lr * g[i]);
  }
}

TEST_CASE("sgd shape mismatch") {
  std::vector<float> p(3), g(2), v(3);
  CHECK_THROWS_AS(tr::sgd_momentum_step<float>(p, g, v, 0.1, 0.9, 0.0), pcnn::InvalidShape);
  std::vector<float> g3(3), v4(4);
  CHECK_THROWS_AS(tr::sgd_momentum_step<float>(p, g3, v4, 0.1, 0.9, 0.0), pcnn::InvalidShape);
}

TEST_CASE("train config validation") {
  tr::TrainConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = [&](auto mutate) {
    tr::TrainConfig b;
    mutate(b);
    CHECK_THROWS_AS(b.validate(), pcnn::InvalidConfig);
  };
  bad([](auto& b) { b.lr = 0; });
  bad([](auto& b) { b.momentum = 1.0; });
  bad([](auto& b) { b.momentum = -0.1; });
  bad([](auto& b) { b.weight_decay = -1e-4; });
  bad([](auto& b) { b.epochs = 0; });
  bad([](auto& b) { b.batch_size = 0; });
  CHECK(tr::parse_precision("double") == tr::Precision::kDouble);
  CHECK_THROWS_AS(tr::parse_precision("half"), pcnn::InvalidConfig);
}

TEST_CASE("one epoch smoke") {
  const auto ds = dt::gen_synthetic_faces(8, 16, 16, 1);
  md::PcnnModel<float> m(small_config());
  tr::TrainConfig c;
  c.epochs = 1;
  c.batch_size = 4;
  const auto h = tr::train(m, ds, &ds, c);
  REQUIRE(h.epochs.size() == 1);
  CHECK(std::isfinite(h.epochs[0].mean_loss));
  CHECK(h.epochs[0].eval_accuracy.has_value());
  CHECK(h.epochs[0].mean_loss ==
        doctest::Approx(12 * h.epochs[0].mean_ce_global + 8 * h.epochs[0].mean_ce_local)
            .epsilon(1e-5));
  const auto csv = h.to_csv();
  CHECK(csv.rfind("epoch,mean_loss,mean_ce_global,mean_ce_local,train_accuracy,eval_accuracy\n1,", 0) == 0);
}

TEST_CASE("identical seeds give identical loss traces") {
  const auto ds = dt::gen_synthetic_faces(24, 16, 16, 2);
  tr::TrainConfig c;
  c.epochs = 3;
  c.batch_size = 8;
  c.seed = 11;
  auto run = [&] {
    md::PcnnModel<float> m(small_config());
    return tr::train(m, ds, nullptr, c);
  };
  const auto a = losses(run()), b = losses(run());
  REQUIRE(a.size() == 3);
  CHECK(a == b);

  c.seed = 12;
  md::PcnnModel<float> m(small_config());
  CHECK(losses(tr::train(m, ds, nullptr, c)) != a);
}

TEST_CASE("a small step lowers the loss on its batch") {
  int failures = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto ds = dt::gen_synthetic_faces(8, 16, 16, 100 + s);
    md::PcnnModel<double> m(small_config());
    dt::Batch all{0, 1, 2, 3, 4, 5, 6, 7};
    const auto x = dt::batch_images<double>(ds, all);
    const auto y = dt::batch_labels(ds, all);
    const double before = m.forward(x, y, md::Mode::kTrain).loss.item();
    tr::TrainConfig c;
    c.lr = 1e-4;
    c.epochs = 1;
    c.batch_size = 8;
    c.seed = s;
    tr::train(m, ds, nullptr, c);
    const double after = m.forward(x, y, md::Mode::kTrain).loss.item();
    failures += !(after < before);
  }
  CHECK(failures <= 1);
}

TEST_CASE("non-finite loss raises DivergenceDetected") {
  const auto ds = dt::gen_synthetic_faces(8, 16, 16, 1);
  md::PcnnModel<float> m(small_config());
  for (auto& p : m.parameters()) {
    if (p.name == "gpn.fc.bias") p.value.mutable_data()[0] = NAN;
  }
  tr::TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  try {
    tr::train(m, ds, nullptr, c);
    FAIL("expected DivergenceDetected");
  } catch (const pcnn::DivergenceDetected& e) {
    CHECK(e.epoch() == 0);
    CHECK(e.batch() == 0);
  }
}

TEST_CASE("train preconditions") {
  md::PcnnModel<float> m(small_config());
  tr::TrainConfig c;
  c.alpha = 10;
  CHECK_THROWS_AS(tr::train(m, dt::gen_synthetic_faces(4, 16, 16, 0), nullptr, c),
                  pcnn::InvalidConfig);
  CHECK_THROWS_AS(tr::train(m, dt::Dataset{16, 16, {}}, nullptr, tr::TrainConfig{}),
                  pcnn::EmptyDataset);
}

TEST_CASE("gradient clipping only rescales large updates") {
  const auto ds = dt::gen_synthetic_faces(8, 16, 16, 4);
  tr::TrainConfig c;
  c.epochs = 1;
  c.batch_size = 8;
  c.lr = 1e-3;
  auto run = [&](double clip) {
    md::PcnnModel<double> m(small_config());
    c.clip_norm = clip;
    tr::train(m, ds, nullptr, c);
    return snapshot(m);
  };
  const auto off = run(0.0), huge = run(1e12), tight = run(1e-3);
  CHECK(off == huge);
  CHECK(off != tight);
}

TEST_CASE("checkpoint roundtrip is bitwise") {
  const auto dir = temp_dir("roundtrip");
  const auto ds = dt::gen_synthetic_faces(16, 16, 16, 5);
  auto rc = small_run(2, 8);
  md::PcnnModel<float> m(rc.model);
  tr::OptimizerState<float> st;
  tr::train(m, ds, nullptr, rc.train, &st);
  ck::save_checkpoint(m, st, rc, dir / "a.ckpt");

  auto loaded = ck::load_checkpoint<float>(dir / "a.ckpt");
  CHECK(loaded.state.epoch == 2);
  CHECK(snapshot(*loaded.model) == snapshot(m));
  CHECK(loaded.state.velocity == st.velocity);
  CHECK(loaded.config.train.epochs == 2);
  CHECK(loaded.config.model.variant == rc.model.variant);

  const auto x = dt::batch_images<float>(ds, {0, 1, 2, 3, 4});
  const auto a = m.logits(x, md::Mode::kEval);
  const auto b = loaded.model->logits(x, md::Mode::kEval);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end()));

  ck::save_checkpoint(*loaded.model, loaded.state, loaded.config, dir / "b.ckpt");
  std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(fa), {}) ==
        std::string(std::istreambuf_iterator<char>(fb), {}));

  auto split_seed = rc;
  split_seed.train.seed = rc.seed + 1;
  CHECK_THROWS_AS(ck::save_checkpoint(m, st, split_seed, dir / "c.ckpt"), pcnn::InvalidConfig);
  CHECK_FALSE(std::filesystem::exists(dir / "c.ckpt"));
}

TEST_CASE("checkpoint corruption") {
  const auto dir = temp_dir("corrupt");
  auto rc = small_run(1, 8);
  md::PcnnModel<float> m(rc.model);
  ck::save_checkpoint(m, tr::OptimizerState<float>{}, rc, dir / "ok.ckpt");
  const auto size = fs::file_size(dir / "ok.ckpt");

  fs::copy_file(dir / "ok.ckpt", dir / "short.ckpt");
  fs::resize_file(dir / "short.ckpt", size - 1);
  CHECK_THROWS_AS(ck::load_checkpoint<float>(dir / "short.ckpt"), pcnn::CorruptCheckpoint);

  for (std::uintmax_t cut : {std::uintmax_t{0}, std::uintmax_t{3}, std::uintmax_t{9}, size / 2}) {
    fs::copy_file(dir / "ok.ckpt", dir / "cut.ckpt", fs::copy_options::overwrite_existing);
    fs::resize_file(dir / "cut.ckpt", cut);
    CHECK_THROWS_AS(ck::read_file(dir / "cut.ckpt"), pcnn::CorruptCheckpoint);
  }

  auto bytes = [&](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  auto put = [&](const fs::path& p, const std::string& s) {
    std::ofstream(p, std::ios::binary) << s;
  };
  auto b = bytes(dir / "ok.ckpt");
  CHECK(b.substr(0, 4) == "PCNN");
  CHECK(b[4] == 1);
  b[4] = 2;
  put(dir / "v2.ckpt", b);
  CHECK_THROWS_AS(ck::load_checkpoint<float>(dir / "v2.ckpt"), pcnn::UnsupportedVersion);
  b[4] = 1;
  b[0] = 'X';
  put(dir / "magic.ckpt", b);
  CHECK_THROWS_AS(ck::load_checkpoint<float>(dir / "magic.ckpt"), pcnn::CorruptCheckpoint);
  b[0] = 'P';
  put(dir / "extra.ckpt", b + "z");
  CHECK_THROWS_AS(ck::load_checkpoint<float>(dir / "extra.ckpt"), pcnn::CorruptCheckpoint);
  CHECK_THROWS_AS(ck::load_checkpoint<float>(dir / "missing.ckpt"), pcnn::IoError);
}

TEST_CASE("checkpoint file layout") {
  const auto dir = temp_dir("layout");
  ck::File f;
  f.config_text = "a = 1\n";
  f.arrays.push_back({"w", pcnn::Shape{2, 1}, {1.5f, -2.0f}});
  ck::write_file(dir / "f.ckpt", f);
  std::ifstream in(dir / "f.ckpt", std::ios::binary);
  const std::string b(std::istreambuf_iterator<char>(in), {});
  // 4 magic + 4 version + 8 + 6 text + 8 count + 8 + 1 name + 4 rank + 16 extents + 8 values
  REQUIRE(b.size() == 67u);
  CHECK(b.substr(0, 4) == "PCNN");
  CHECK(static_cast<unsigned char>(b[8]) == 6);
  CHECK(b.substr(16, 6) == "a = 1\n");
  CHECK(static_cast<unsigned char>(b[22]) == 1);
  CHECK(static_cast<unsigned char>(b[30]) == 1);
  CHECK(b[38] == 'w');
  CHECK(static_cast<unsigned char>(b[39]) == 2);
  CHECK(static_cast<unsigned char>(b[43]) == 2);
  CHECK(static_cast<unsigned char>(b[51]) == 1);
  // 1.5f = 0x3FC00000 little-endian
  CHECK(static_cast<unsigned char>(b[61]) == 0xC0);
  CHECK(static_cast<unsigned char>(b[62]) == 0x3F);
  const auto r = ck::read_file(dir / "f.ckpt");
  CHECK(r.config_text == f.config_text);
  CHECK(r.arrays[0].values == f.arrays[0].values);
  CHECK(r.arrays[0].shape == f.arrays[0].shape);
}

TEST_CASE("resume matches an uninterrupted run") {
  const auto dir = temp_dir("resume");
  const auto ds = dt::gen_synthetic_faces(16, 16, 16, 6);
  auto rc = small_run(10, 8);

  md::PcnnModel<float> straight(rc.model);
  const auto full = tr::train(straight, ds, nullptr, rc.train);

  auto first = rc;
  first.train.epochs = 5;
  md::PcnnModel<float> m(rc.model);
  tr::OptimizerState<float> st;
  const auto h1 = tr::train(m, ds, nullptr, first.train, &st);
  ck::save_checkpoint(m, st, rc, dir / "e5.ckpt");

  auto loaded = ck::load_checkpoint<float>(dir / "e5.ckpt");
  REQUIRE(loaded.state.epoch == 5);
  const auto h2 = tr::train(*loaded.model, ds, nullptr, loaded.config.train, &loaded.state);
  CHECK(h2.epochs.size() == 5);
  CHECK(snapshot(*loaded.model) == snapshot(straight));

  auto joined = losses(h1);
  for (double l : losses(h2)) joined.push_back(l);
  CHECK(joined == losses(full));
}

TEST_CASE("config text parsing") {
  const auto kv = cf::parse("# comment\n lr = 0.5  # trailing\n\nvariant=no_crop\n", "x.cfg");
  CHECK(kv.size() == 2);
  CHECK(kv.at("lr") == "0.5");
  CHECK(kv.at("variant") == "no_crop");
  try {
    cf::parse("lr = 1\nnonsense\n", "x.cfg");
    FAIL("expected InvalidConfig");
  } catch (const pcnn::InvalidConfig& e) {
    CHECK(std::string(e.what()).find("x.cfg:2") != std::string::npos);
  }
  CHECK_THROWS_AS(cf::parse(" = 3\n"), pcnn::InvalidConfig);
}

TEST_CASE("config apply and roundtrip") {
  cf::RunConfig base;
  const auto kv = cf::to_key_values(base);
  const auto again = cf::apply(kv);
  CHECK(cf::to_key_values(again) == kv);

  auto c = cf::apply({{"lr", "0.02"}, {"variant", "alpha_beta:4:16"}, {"seed", "9"},
                      {"stage_channels", "8, 16"}, {"stage_strides", "1,2"},
                      {"share_local_weights", "true"}, {"b2", "0.7"}});
  CHECK(c.train.lr == 0.02);
  CHECK(c.model.variant == md::Variant::custom(4, 16));
  CHECK(c.model.seed == 9);
  CHECK(c.train.seed == 9);
  CHECK(c.model.backbone.stage_channels == std::vector<std::size_t>{8, 16});
  CHECK(c.model.share_local_weights);
  CHECK(c.model.regions.b2 == 0.7);
  CHECK(cf::apply(cf::to_key_values(c)).model.variant == c.model.variant);

  CHECK_THROWS_AS(cf::apply({{"learning_rate", "1"}}), pcnn::InvalidConfig);
  CHECK_THROWS_AS(cf::apply({{"lr", "fast"}}), pcnn::InvalidConfig);
  CHECK_THROWS_AS(cf::apply({{"epochs", "-1"}}), pcnn::InvalidConfig);
  CHECK_THROWS_AS(cf::apply({{"share_local_weights", "maybe"}}), pcnn::InvalidConfig);
  CHECK_THROWS_AS(cf::apply({{"variant", "bogus"}}), pcnn::InvalidConfig);
}

TEST_CASE("config resolution order and validation") {
  const auto dir = temp_dir("config");
  std::ofstream(dir / "run.cfg") << "lr = 0.03\nepochs = 4\n";
  const auto file = dir / "run.cfg";
  const auto c = cf::resolve(&file, {{"epochs", "7"}});
  CHECK(c.train.lr == 0.03);
  CHECK(c.train.epochs == 7);
  CHECK(c.train.momentum == 0.9);

  CHECK_THROWS_AS(cf::resolve(nullptr, {{"lr", "0"}}), pcnn::InvalidConfig);
  CHECK_THROWS_AS(cf::resolve(nullptr, {{"height", "12"}, {"width", "12"}}),
                  pcnn::InvalidConfig);
  CHECK_THROWS_AS(cf::resolve(nullptr, {{"train_usage", "Validation"}}), pcnn::Error);
  const auto missing = dir / "none.cfg";
  CHECK_THROWS_AS(cf::resolve(&missing, {}), pcnn::IoError);
}

TEST_CASE("data paths fall back to PCNN_DATA_DIR") {
  const auto dir = temp_dir("datadir");
  std::ofstream(dir / "fer.csv") << "x";
  ::setenv("PCNN_DATA_DIR", dir.c_str(), 1);
  CHECK(cf::resolve_data_path("fer.csv") == dir / "fer.csv");
  CHECK(cf::resolve_data_path("absent.csv") == fs::path("absent.csv"));
  ::unsetenv("PCNN_DATA_DIR");
  CHECK(cf::resolve_data_path("fer.csv") == fs::path("fer.csv"));
}
