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
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "pcnn/data.hpp"
#include "pcnn/error.hpp"
#include "pcnn/pgm.hpp"
#include "pcnn/regions.hpp"

namespace fs = std::filesystem;
namespace dt = pcnn::data;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("pcnn_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string pixel_field(std::size_t count, int value) {
  std::ostringstream os;
  for (std::size_t i = 0; i < count; ++i) os << (i ? " " : "") << value;
  return os.str();
}

fs::path write_csv(const std::string& name, const std::vector<std::string>& rows) {
  fs::path p = scratch(name) / "fer.csv";
  std::ofstream out(p);
  out << "emotion,pixels,Usage\n";
  for (const auto& r : rows) out << r << "\n";
  return p;
}

std::vector<double> flat(const dt::Sample& s) {
  return {s.pixels.data().begin(), s.pixels.data().end()};
}

void check_ranges(const dt::Dataset& ds) {
  for (const auto& s : ds.samples) {
    CHECK(s.label >= 0);
    CHECK(s.label < 7);
    for (float v : s.pixels.data()) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
    }
  }
}

}  // namespace

TEST_CASE("FER2013 csv") {
  const std::string zeros = pixel_field(2304, 0);
  SUBCASE("format definition row") {
    auto p = write_csv("basic", {"3," + zeros + ",Training"});
    auto ds = dt::load_fer2013_csv(p, dt::Usage::kAll);
    REQUIRE(ds.size() == 1);
    CHECK(ds.samples[0].label == 3);
    CHECK(ds.samples[0].pixels.shape() == pcnn::Shape{1, 48, 48});
    for (float v : ds.samples[0].pixels.data()) CHECK(v == 0.0f);
    CHECK(ds.samples[0].meta.source == "fer2013:Training");
  }
  SUBCASE("scaling") {
    auto p = write_csv("scale", {"0," + pixel_field(2304, 255) + ",PublicTest"});
    auto ds = dt::load_fer2013_csv(p, dt::Usage::kAll);
    CHECK(ds.samples[0].pixels.data()[100] == 1.0f);
  }
  SUBCASE("short row") {
    auto p = write_csv("short", {"3," + zeros + ",Training", "1," + pixel_field(2303, 7) + ",Training"});
    try {
      dt::load_fer2013_csv(p, dt::Usage::kAll);
      FAIL("expected MalformedRow");
    } catch (const pcnn::MalformedRow& e) {
      CHECK(e.row() == 3);
    }
  }
  SUBCASE("bad label and pixel") {
    auto p = write_csv("label", {"7," + zeros + ",Training"});
    CHECK_THROWS_AS(dt::load_fer2013_csv(p, dt::Usage::kAll), pcnn::MalformedRow);
    auto q = write_csv("pixel", {"1," + pixel_field(2303, 0) + " 256,Training"});
    CHECK_THROWS_AS(dt::load_fer2013_csv(q, dt::Usage::kAll), pcnn::MalformedRow);
    auto r = write_csv("usage", {"1," + zeros + ",Validation"});
    CHECK_THROWS_AS(dt::load_fer2013_csv(r, dt::Usage::kAll), pcnn::MalformedRow);
  }
  SUBCASE("usage filter and limit") {
    std::vector<std::string> rows;
    for (int i = 0; i < 5; ++i) rows.push_back(std::to_string(i) + "," + zeros + ",Training");
    for (int i = 0; i < 3; ++i) rows.push_back(std::to_string(i) + "," + zeros + ",PrivateTest");
    rows.push_back("6," + zeros + ",PublicTest");
    auto p = write_csv("filter", rows);
    auto priv = dt::load_fer2013_csv(p, dt::Usage::kPrivateTest);
    CHECK(priv.size() == 3);
    for (const auto& s : priv.samples) CHECK(s.meta.source == "fer2013:PrivateTest");
    CHECK(dt::load_fer2013_csv(p, dt::Usage::kTraining).size() == 5);
    for (std::size_t k : {0u, 1u, 4u, 5u, 9u})
      CHECK(dt::load_fer2013_csv(p, dt::Usage::kTraining, k).size() == std::min<std::size_t>(k, 5));
    CHECK(dt::load_fer2013_csv(p, dt::Usage::kAll, 100).size() == 9);
  }
  SUBCASE("missing file and header") {
    CHECK_THROWS_AS(dt::load_fer2013_csv("/nonexistent/fer.csv", dt::Usage::kAll), pcnn::IoError);
    fs::path p = scratch("header") / "bad.csv";
    std::ofstream(p) << "label,pixels\n";
    CHECK_THROWS_AS(dt::load_fer2013_csv(p, dt::Usage::kAll), pcnn::MalformedRow);
  }
}

TEST_CASE("synthetic faces") {
  auto a = dt::gen_synthetic_faces(21, 32, 32, 5);
  auto b = dt::gen_synthetic_faces(21, 32, 32, 5);
  REQUIRE(a.size() == 21);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(flat(a.samples[i]) == flat(b.samples[i]));
    CHECK(a.samples[i].label == static_cast<int>(i % 7));
  }
  CHECK(a.checksum() == b.checksum());
  CHECK(dt::gen_synthetic_faces(21, 32, 32, 6).checksum() != a.checksum());
  for (auto c : a.class_counts()) CHECK(c == 3);

  for (const auto& s : a.samples) {
    REQUIRE(s.meta.face.has_value());
    const auto& f = *s.meta.face;
    const auto nominal = dt::nominal_params(s.label);
    CHECK(std::abs(f.eye_openness - nominal.eye_openness) <= 0.15 + 1e-12);
    CHECK(std::abs(f.eyebrow_angle - nominal.eyebrow_angle) <= 0.15 + 1e-12);
    CHECK(std::abs(f.mouth_curvature - nominal.mouth_curvature) <= 0.15 + 1e-12);
    CHECK(std::abs(f.mouth_openness - nominal.mouth_openness) <= 0.15 + 1e-12);
    if (s.label == dt::kHappy) CHECK(f.mouth_curvature > 0);
    if (s.label == dt::kSad) CHECK(f.mouth_curvature < 0);
  }
  CHECK(dt::nominal_params(dt::kHappy).mouth_curvature == 0.8);
  CHECK(dt::nominal_params(dt::kSad).mouth_curvature == -0.8);
  CHECK(dt::nominal_params(dt::kSurprise).mouth_openness == 0.9);
  CHECK(dt::nominal_params(dt::kSurprise).eye_openness == 1.0);
  CHECK(dt::nominal_params(dt::kAngry).eyebrow_angle == -0.8);

  CHECK_THROWS_AS(dt::gen_synthetic_faces(7, 15, 32, 0), pcnn::ImageTooSmall);
  CHECK_THROWS_AS(dt::nominal_params(7), pcnn::InvalidLabel);
  check_ranges(dt::gen_synthetic_faces(14, 16, 24, 1));
}

TEST_CASE("pinned synthetic checksum") {
  CHECK(dt::gen_synthetic_faces(10, 32, 32, 0).checksum() == 0xdb04837298144756ULL);
}

TEST_CASE("nearest-centroid separability") {
  auto ds = dt::gen_synthetic_faces(840, 32, 32, 0);
  auto [train, test] = dt::split(ds, 700);
  auto features = [](const dt::Dataset& d, std::vector<std::vector<double>>& x,
                     std::vector<int>& y) {
    for (const auto& s : d.samples) {
      x.push_back(flat(s));
      y.push_back(s.label);
    }
  };
  std::vector<std::vector<double>> tx, vx;
  std::vector<int> ty, vy;
  features(train, tx, ty);
  features(test, vx, vy);
  const double acc = oracle::nearest_centroid_accuracy(tx, ty, vx, vy);
  MESSAGE("nearest-centroid accuracy " << acc);
  CHECK(acc >= 0.6);
}

TEST_CASE("augmentation") {
  auto ds = dt::gen_synthetic_faces(7, 32, 32, 2);
  const auto& s = ds.samples[3];
  SUBCASE("identity") {
    dt::AugSpec spec;
    spec.occlusion = dt::Occlusion{0.0, std::nullopt, dt::Fill::kZero};
    auto out = dt::augment(s, spec);
    CHECK(flat(out) == flat(s));
    CHECK(out.label == s.label);
    CHECK(out.pixels.data().data() != s.pixels.data().data());
  }
  SUBCASE("bottom band occlusion blanks the mouth region") {
    dt::AugSpec spec;
    spec.occlusion = dt::Occlusion{0.0, dt::Box{0.625, 0.0, 0.375, 1.0}, dt::Fill::kZero};
    auto out = dt::augment(s, spec);
    auto regions = pcnn::regions::compute_regions(32, 32, {});
    pcnn::Tensor<float> img({1, 1, 32, 32},
                            std::vector<float>(out.pixels.data().begin(), out.pixels.data().end()));
    auto crops = pcnn::regions::crop_regions(img, regions);
    for (float v : crops[pcnn::regions::kMouth].data()) CHECK(v == 0.0f);
    CHECK(out.meta.augmentations.size() == 1);
  }
  SUBCASE("seeded occlusion covers the requested fraction") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      dt::AugSpec spec;
      spec.seed = seed;
      spec.occlusion = dt::Occlusion{0.25, std::nullopt, dt::Fill::kMean};
      auto a = dt::augment(s, spec);
      auto b = dt::augment(s, spec);
      CHECK(flat(a) == flat(b));
      double mean = 0;
      for (float v : s.pixels.data()) mean += v;
      mean /= 1024.0;
      std::size_t filled = 0;
      for (float v : a.pixels.data()) filled += std::abs(v - static_cast<float>(mean)) < 1e-7f;
      CHECK(filled >= 180);
      CHECK(filled <= 360);
    }
  }
  SUBCASE("rotation roundtrip on a constant image") {
    dt::Sample c;
    c.pixels = pcnn::Tensor<float>({1, 32, 32}, 0.5f);
    dt::AugSpec fwd, back;
    fwd.pose = dt::Pose{30.0, 0.0};
    back.pose = dt::Pose{-30.0, 0.0};
    auto out = dt::augment(dt::augment(c, fwd), back);
    // Zero padding enters at the corners; the inscribed disc never leaves
    // the image under either warp.
    for (std::size_t i = 0; i < 32; ++i)
      for (std::size_t j = 0; j < 32; ++j) {
        const double r = std::hypot(i - 15.5, j - 15.5);
        if (r <= 14.5) CHECK(std::abs(out.pixels.data()[i * 32 + j] - 0.5f) <= 1e-6);
      }
  }
  SUBCASE("pose matrix") {
    auto th = dt::pose_theta({0.0, 0.0}, 32, 32);
    CHECK(th == std::array<double, 6>{1, 0, 0, 0, 1, 0});
    auto r = dt::pose_theta({90.0, 0.0}, 32, 32);
    CHECK(std::abs(r[1] - 1.0) < 1e-12);
    CHECK(std::abs(r[3] + 1.0) < 1e-12);
  }
  SUBCASE("validation") {
    dt::AugSpec spec;
    spec.occlusion = dt::Occlusion{0.6, std::nullopt, dt::Fill::kZero};
    CHECK_THROWS_AS(dt::augment(s, spec), pcnn::InvalidArgument);
    spec.occlusion.reset();
    spec.pose = dt::Pose{50.0, 0.0};
    CHECK_THROWS_AS(dt::augment(s, spec), pcnn::InvalidArgument);
  }
  SUBCASE("property: augmented samples stay in range") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> rot(-45, 45), frac(0, 0.5), sh(-0.3, 0.3);
    for (int trial = 0; trial < 20; ++trial) {
      dt::AugSpec spec;
      spec.seed = trial;
      spec.pose = dt::Pose{rot(rng), sh(rng)};
      spec.occlusion = dt::Occlusion{frac(rng), std::nullopt,
                                     trial % 2 ? dt::Fill::kMean : dt::Fill::kZero};
      auto out = dt::augment(ds, spec);
      check_ranges(out);
      for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.samples[i].label == ds.samples[i].label);
    }
  }
}

TEST_CASE("batching") {
  auto ds = dt::gen_synthetic_faces(10, 16, 16, 0);
  auto batches = dt::make_batches(ds, 4, 1);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 4);
  CHECK(batches[1].size() == 4);
  CHECK(batches[2].size() == 2);
  std::set<std::size_t> all;
  for (const auto& b : batches) all.insert(b.begin(), b.end());
  CHECK(all.size() == 10);
  CHECK(dt::make_batches(ds, 4, 1) == batches);

  std::set<std::vector<dt::Batch>> distinct;
  for (std::uint64_t seed = 0; seed < 20; ++seed) distinct.insert(dt::make_batches(ds, 4, seed));
  CHECK(distinct.size() >= 19);

  auto images = dt::batch_images<double>(ds, batches[2]);
  CHECK(images.shape() == pcnn::Shape{2, 1, 16, 16});
  CHECK(images.data()[0] == static_cast<double>(ds.samples[batches[2][0]].pixels.data()[0]));
  CHECK(dt::batch_labels(ds, batches[2])[1] == ds.samples[batches[2][1]].label);

  CHECK_THROWS_AS(dt::make_batches(dt::Dataset{}, 4, 0), pcnn::EmptyDataset);
  CHECK_THROWS_AS(dt::make_batches(ds, 0, 0), pcnn::InvalidArgument);
}

TEST_CASE("synthetic export and import") {
  auto ds = dt::gen_synthetic_faces(9, 20, 24, 4);
  auto dir = scratch("export");
  dt::export_synthetic(ds, dir);
  CHECK(fs::exists(dir / "labels.txt"));
  CHECK(fs::exists(dir / "000008.pgm"));
  auto back = dt::import_synthetic(dir);
  REQUIRE(back.size() == 9);
  CHECK(back.height == 20);
  CHECK(back.width == 24);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(back.samples[i].label == ds.samples[i].label);
    CHECK(oracle::max_abs_diff(flat(back.samples[i]), flat(ds.samples[i])) <= 1.0 / 65535);
    REQUIRE(back.samples[i].meta.face.has_value());
    CHECK(back.samples[i].meta.face->to_string() == ds.samples[i].meta.face->to_string());
  }
  CHECK_THROWS_AS(dt::import_synthetic(scratch("empty")), pcnn::IoError);
}

TEST_CASE("pgm") {
  auto dir = scratch("pgm");
  pcnn::pgm::Image img{3, 2, 255, {0, 1, 2, 253, 254, 255}};
  pcnn::pgm::write_ascii(dir / "a.pgm", img);
  auto back = pcnn::pgm::read(dir / "a.pgm");
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.values == img.values);

  std::ofstream(dir / "b.pgm", std::ios::binary) << "P5\n# note\n2 1\n255\n" << '\x07' << '\xff';
  auto raw = pcnn::pgm::read(dir / "b.pgm");
  CHECK(raw.values == std::vector<std::uint16_t>{7, 255});
  std::ofstream(dir / "c.pgm") << "P3\n1 1\n255\n0\n";
  CHECK_THROWS_AS(pcnn::pgm::read(dir / "c.pgm"), pcnn::IoError);
}
