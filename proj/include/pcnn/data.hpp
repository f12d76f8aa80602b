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

#ifndef PCNN_DATA_HPP_
#define PCNN_DATA_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pcnn/tensor.hpp"

namespace pcnn::data {

inline constexpr std::size_t kNumClasses = 7;

// FER2013 label order.
enum Emotion : int {
  kAngry = 0,
  kDisgust = 1,
  kFear = 2,
  kHappy = 3,
  kSad = 4,
  kSurprise = 5,
  kNeutral = 6,
};

const std::array<std::string, kNumClasses>& class_names();

struct FaceParams {
  int label = kNeutral;
  double eye_openness = 0.0;    // [0, 1]
  double eyebrow_angle = 0.0;   // [-1, 1], negative lowers the inner ends
  double mouth_curvature = 0.0; // [-1, 1], positive smiles
  double mouth_openness = 0.0;  // [0, 1]
  std::uint64_t jitter_seed = 0;

  void validate() const;
  // "eye=...;brow=...;kappa=...;open=...;seed=..."
  std::string to_string() const;
  static FaceParams parse(int label, const std::string& text);
};

// Nominal parameters of a class before jitter.
FaceParams nominal_params(int label);

// Nominal parameters perturbed uniformly within +-0.15 and clamped.
FaceParams jittered_params(int label, std::uint64_t seed);

struct Box {
  double top = 0.0;  // fractions of the image extent
  double left = 0.0;
  double height = 0.0;
  double width = 0.0;
};

enum class Fill { kZero, kMean };

struct Occlusion {
  double fraction = 0.0;    // of the image area, <= 0.5
  std::optional<Box> box;   // explicit placement; seeded when absent
  Fill fill = Fill::kZero;
};

struct Pose {
  double rotation_degrees = 0.0;  // |rotation| <= 45
  double shear = 0.0;             // horizontal shear factor
};

struct AugSpec {
  std::optional<Occlusion> occlusion;
  std::optional<Pose> pose;
  std::uint64_t seed = 0;

  void validate() const;
  bool is_identity() const;
  std::string to_string() const;
};

struct SampleMeta {
  std::string source;  // "fer2013:Training", "synthetic", ...
  std::optional<FaceParams> face;
  std::vector<std::string> augmentations;
};

struct Sample {
  Tensor<float> pixels;  // 1 x H x W in [0, 1]
  int label = 0;
  SampleMeta meta;
};

struct Dataset {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::array<std::size_t, kNumClasses> class_counts() const;
  // FNV-1a over the pixel bytes and labels.
  std::uint64_t checksum() const;
};

enum class Usage { kTraining, kPublicTest, kPrivateTest, kAll };
Usage parse_usage(const std::string& text);

Dataset load_fer2013_csv(const std::filesystem::path& path, Usage filter,
                         std::optional<std::size_t> limit = std::nullopt);

// Balanced schematic faces: sample i has class i mod 7.
Dataset gen_synthetic_faces(std::size_t n, std::size_t height, std::size_t width,
                            std::uint64_t seed);

Sample render_face(const FaceParams& params, std::size_t height,
                   std::size_t width);

Sample augment(const Sample& sample, const AugSpec& spec);
Dataset augment(const Dataset& dataset, const AugSpec& spec);

// Inverse-mapping affine of a pose in normalized coordinates, 2 x 3 row-major.
std::array<double, 6> pose_theta(const Pose& pose, std::size_t height,
                                 std::size_t width);

using Batch = std::vector<std::size_t>;

// Seeded permutation cut into batches; the final partial batch is kept.
std::vector<Batch> make_batches(const Dataset& dataset, std::size_t batch_size,
                                std::uint64_t shuffle_seed);

template <typename T>
Tensor<T> batch_images(const Dataset& dataset, const Batch& batch);
std::vector<int> batch_labels(const Dataset& dataset, const Batch& batch);

// The first `first` samples and the rest.
std::pair<Dataset, Dataset> split(const Dataset& dataset, std::size_t first);

void export_synthetic(const Dataset& dataset, const std::filesystem::path& dir);
Dataset import_synthetic(const std::filesystem::path& dir);

}  // namespace pcnn::data

#endif  // PCNN_DATA_HPP_
