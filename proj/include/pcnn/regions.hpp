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

#ifndef PCNN_REGIONS_HPP_
#define PCNN_REGIONS_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pcnn/tensor.hpp"

namespace pcnn::regions {

// Half-open rectangle [row_begin, row_end) x [col_begin, col_end).
struct Rect {
  std::size_t row_begin = 0;
  std::size_t row_end = 0;
  std::size_t col_begin = 0;
  std::size_t col_end = 0;

  std::size_t height() const { return row_end - row_begin; }
  std::size_t width() const { return col_end - col_begin; }
  std::size_t area() const { return height() * width(); }
  bool contains(std::size_t r, std::size_t c) const {
    return r >= row_begin && r < row_end && c >= col_begin && c < col_end;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

// Height fractions of the two band boundaries and the width split. The
// defaults give bands in the ratio 10:3:7 with an even left/right split.
struct RegionSpec {
  double b1 = 0.5;
  double b2 = 0.65;
  double wsplit = 0.5;

  void validate() const;
};

// Face layout order.
enum FaceRegion : std::size_t {
  kLeftEye = 0,    // eye + eyebrow, left half of the top band
  kRightEye = 1,   // eye + eyebrow, right half of the top band
  kLeftCheek = 2,  // zygomatic, left half of the middle band
  kRightCheek = 3,
  kMouth = 4,      // full-width bottom band
  kFaceRegionCount = 5,
};

struct RegionSet {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Rect> rects;
};

inline constexpr std::size_t kMinImageExtent = 8;

// floor(frac * extent), robust to products that land a rounding error below
// an integer.
std::size_t scaled_boundary(double frac, std::size_t extent);

// Five-region face segmentation of an h x w image.
RegionSet compute_regions(std::size_t h, std::size_t w, const RegionSpec& spec);

// A set of rectangles defined by fractional boundaries, resolvable at any
// resolution with the floor rule. The face layout is one instance; the
// ablation variants use the others.
class RegionLayout {
 public:
  static RegionLayout face(const RegionSpec& spec);
  static RegionLayout whole();
  static RegionLayout horizontal_bands(std::size_t count);
  static RegionLayout grid(std::size_t rows, std::size_t cols);
  // Two independent seeded crops, each covering half of the image area.
  static RegionLayout random_pair(std::uint64_t seed);

  // Throws TargetTooSmall when a rectangle collapses at this resolution.
  RegionSet resolve(std::size_t h, std::size_t w) const;

  std::size_t size() const { return cells_.size(); }
  bool tiles() const { return tiles_; }
  const std::string& name() const { return name_; }

 private:
  struct Cell {
    double top, bottom, left, right;
  };
  RegionLayout(std::string name, std::vector<Cell> cells, bool tiles,
               bool clamp)
      : name_(std::move(name)), cells_(std::move(cells)), tiles_(tiles),
        clamp_(clamp) {}

  std::string name_;
  std::vector<Cell> cells_;
  bool tiles_;
  bool clamp_;  // widen collapsed rectangles to one cell instead of failing
};

// Copies each rectangle out of an N x C x H x W image; gradients scatter back
// to the source rectangle.
template <typename T>
std::vector<Tensor<T>> crop_regions(const Tensor<T>& image,
                                    const RegionSet& regions);

// Resizes feature map k to rectangle k of `layout` resolved at
// target_h x target_w and writes it there. Cells covered by several
// rectangles receive the mean; uncovered cells are zero.
template <typename T>
Tensor<T> stitch_features(const std::vector<Tensor<T>>& features,
                          const RegionLayout& layout, std::size_t target_h,
                          std::size_t target_w);

// Single-channel map of region indices (1-based, 0 = uncovered).
std::vector<int> region_index_map(const RegionSet& regions);

}  // namespace pcnn::regions

#endif  // PCNN_REGIONS_HPP_
