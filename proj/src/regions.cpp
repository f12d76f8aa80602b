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

#include "pcnn/regions.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "pcnn/error.hpp"
#include "pcnn/kernels.hpp"

namespace pcnn::regions {

void RegionSpec::validate() const {
  if (!(b1 > 0.0 && b1 < b2 && b2 < 1.0)) {
    throw InvalidConfig("band fractions need 0 < b1 < b2 < 1");
  }
  if (!(wsplit > 0.0 && wsplit < 1.0)) {
    throw InvalidConfig("width split needs 0 < wsplit < 1");
  }
}

std::size_t scaled_boundary(double frac, std::size_t extent) {
  return static_cast<std::size_t>(
      std::floor(frac * static_cast<double>(extent) + 1e-9));
}

namespace {

// Rectangles of the face layout, or an empty vector if a band collapses.
std::vector<Rect> face_rects(std::size_t h, std::size_t w,
                             const RegionSpec& spec) {
  const std::size_t r1 = scaled_boundary(spec.b1, h);
  const std::size_t r2 = scaled_boundary(spec.b2, h);
  const std::size_t c = scaled_boundary(spec.wsplit, w);
  if (r1 == 0 || r2 <= r1 || r2 >= h || c == 0 || c >= w) return {};
  return {
      {0, r1, 0, c},   {0, r1, c, w},   // eyes and eyebrows
      {r1, r2, 0, c},  {r1, r2, c, w},  // zygomatic
      {r2, h, 0, w},                    // mouth
  };
}

}  // namespace

RegionSet compute_regions(std::size_t h, std::size_t w, const RegionSpec& spec) {
  spec.validate();
  if (h < kMinImageExtent || w < kMinImageExtent) {
    throw ImageTooSmall("image " + std::to_string(h) + "x" + std::to_string(w) +
                        " is below the " + std::to_string(kMinImageExtent) +
                        "x" + std::to_string(kMinImageExtent) + " minimum");
  }
  auto rects = face_rects(h, w, spec);
  if (rects.empty()) {
    throw ImageTooSmall("a face band collapses at " + std::to_string(h) + "x" +
                        std::to_string(w));
  }
  return {h, w, std::move(rects)};
}

RegionLayout RegionLayout::face(const RegionSpec& spec) {
  spec.validate();
  const double b1 = spec.b1, b2 = spec.b2, c = spec.wsplit;
  return RegionLayout("face",
                      {{0, b1, 0, c},
                       {0, b1, c, 1},
                       {b1, b2, 0, c},
                       {b1, b2, c, 1},
                       {b2, 1, 0, 1}},
                      true, false);
}

RegionLayout RegionLayout::whole() {
  return RegionLayout("whole", {{0, 1, 0, 1}}, true, false);
}

RegionLayout RegionLayout::horizontal_bands(std::size_t count) {
  if (count == 0) throw InvalidConfig("band count must be positive");
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < count; ++i) {
    cells.push_back({static_cast<double>(i) / count,
                     static_cast<double>(i + 1) / count, 0, 1});
  }
  return RegionLayout("bands" + std::to_string(count), std::move(cells), true,
                      false);
}

RegionLayout RegionLayout::grid(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw InvalidConfig("grid extent must be positive");
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      cells.push_back({static_cast<double>(i) / rows,
                       static_cast<double>(i + 1) / rows,
                       static_cast<double>(j) / cols,
                       static_cast<double>(j + 1) / cols});
    }
  }
  return RegionLayout("grid" + std::to_string(rows) + "x" + std::to_string(cols),
                      std::move(cells), true, false);
}

RegionLayout RegionLayout::random_pair(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Cell> cells;
  for (int k = 0; k < 2; ++k) {
    const double wf = 0.5 + 0.5 * unit(rng);
    const double hf = 0.5 / wf;
    const double top = (1.0 - hf) * unit(rng);
    const double left = (1.0 - wf) * unit(rng);
    cells.push_back({top, top + hf, left, left + wf});
  }
  return RegionLayout("random_pair", std::move(cells), false, true);
}

RegionSet RegionLayout::resolve(std::size_t h, std::size_t w) const {
  RegionSet out{h, w, {}};
  for (const Cell& cell : cells_) {
    Rect r{scaled_boundary(cell.top, h), scaled_boundary(cell.bottom, h),
           scaled_boundary(cell.left, w), scaled_boundary(cell.right, w)};
    r.row_end = std::min(r.row_end, h);
    r.col_end = std::min(r.col_end, w);
    if (clamp_) {
      r.row_begin = std::min(r.row_begin, h - 1);
      r.col_begin = std::min(r.col_begin, w - 1);
      r.row_end = std::max(r.row_end, r.row_begin + 1);
      r.col_end = std::max(r.col_end, r.col_begin + 1);
    }
    if (r.row_end <= r.row_begin || r.col_end <= r.col_begin) {
      throw TargetTooSmall("layout '" + name_ + "' collapses at " +
                           std::to_string(h) + "x" + std::to_string(w));
    }
    out.rects.push_back(r);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> crop_regions(const Tensor<T>& image,
                                    const RegionSet& regions) {
  if (image.rank() != 4 || image.dim(2) != regions.height ||
      image.dim(3) != regions.width) {
    throw InvalidShape("regions computed for " + std::to_string(regions.height) +
                       "x" + std::to_string(regions.width) +
                       " do not match image " + to_string(image.shape()));
  }
  const std::size_t planes = image.dim(0) * image.dim(1);
  const std::size_t h = image.dim(2), w = image.dim(3);
  std::vector<Tensor<T>> crops;
  for (const Rect& r : regions.rects) {
    if (r.row_end > h || r.col_end > w || r.area() == 0) {
      throw InvalidShape("rectangle outside image");
    }
    std::vector<T> out(planes * r.area());
    auto x = image.data();
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t i = 0; i < r.height(); ++i) {
        std::copy_n(x.data() + p * h * w + (r.row_begin + i) * w + r.col_begin,
                    r.width(), out.data() + (p * r.height() + i) * r.width());
      }
    }
    Tensor<T> in = image;
    crops.push_back(Tensor<T>::from_op(
        {image.dim(0), image.dim(1), r.height(), r.width()}, std::move(out),
        "crop", {image}, [in, r, planes, h, w](std::span<const T> g) mutable {
          auto& gi = in.grad_buffer();
          for (std::size_t p = 0; p < planes; ++p) {
            for (std::size_t i = 0; i < r.height(); ++i) {
              const T* src = g.data() + (p * r.height() + i) * r.width();
              T* dst = gi.data() + p * h * w + (r.row_begin + i) * w + r.col_begin;
              for (std::size_t j = 0; j < r.width(); ++j) dst[j] += src[j];
            }
          }
        }));
  }
  return crops;
}

template <typename T>
Tensor<T> stitch_features(const std::vector<Tensor<T>>& features,
                          const RegionLayout& layout, std::size_t target_h,
                          std::size_t target_w) {
  if (features.size() != layout.size()) {
    throw InvalidShape("layout '" + layout.name() + "' has " +
                       std::to_string(layout.size()) + " regions, got " +
                       std::to_string(features.size()) + " feature maps");
  }
  const RegionSet set = layout.resolve(target_h, target_w);
  const std::size_t n_batch = features.front().dim(0);
  const std::size_t ch = features.front().dim(1);
  std::vector<Tensor<T>> placed;
  for (std::size_t k = 0; k < features.size(); ++k) {
    const Tensor<T>& f = features[k];
    if (f.rank() != 4 || f.dim(0) != n_batch || f.dim(1) != ch) {
      throw InvalidShape("feature map " + std::to_string(k) + " has shape " +
                         to_string(f.shape()));
    }
    const Rect& r = set.rects[k];
    if (f.dim(2) == r.height() && f.dim(3) == r.width()) {
      placed.push_back(f);
    } else {
      placed.push_back(nn::bilinear_resize(f, r.height(), r.width()));
    }
  }

  const std::size_t area = target_h * target_w;
  auto coverage = std::make_shared<std::vector<int>>(area, 0);
  for (const Rect& r : set.rects) {
    for (std::size_t i = r.row_begin; i < r.row_end; ++i) {
      for (std::size_t j = r.col_begin; j < r.col_end; ++j) {
        ++(*coverage)[i * target_w + j];
      }
    }
  }
  std::vector<T> out(n_batch * ch * area, T(0));
  const std::size_t planes = n_batch * ch;
  for (std::size_t k = 0; k < placed.size(); ++k) {
    const Rect& r = set.rects[k];
    auto src = placed[k].data();
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t i = 0; i < r.height(); ++i) {
        for (std::size_t j = 0; j < r.width(); ++j) {
          const std::size_t cell = (r.row_begin + i) * target_w + r.col_begin + j;
          const T v = src[(p * r.height() + i) * r.width() + j];
          T& dst = out[p * area + cell];
          if ((*coverage)[cell] == 1) {
            dst = v;
          } else {
            dst += v / static_cast<T>((*coverage)[cell]);
          }
        }
      }
    }
  }
  auto rects = std::make_shared<std::vector<Rect>>(set.rects);
  std::vector<Tensor<T>> inputs = placed;
  return Tensor<T>::from_op(
      {n_batch, ch, target_h, target_w}, std::move(out), "stitch",
      std::move(inputs),
      [placed, rects, coverage, planes, area, target_w](
          std::span<const T> g) mutable {
        for (std::size_t k = 0; k < placed.size(); ++k) {
          if (!placed[k].requires_grad()) continue;
          const Rect& r = (*rects)[k];
          auto& gi = placed[k].grad_buffer();
          for (std::size_t p = 0; p < planes; ++p) {
            for (std::size_t i = 0; i < r.height(); ++i) {
              for (std::size_t j = 0; j < r.width(); ++j) {
                const std::size_t cell =
                    (r.row_begin + i) * target_w + r.col_begin + j;
                gi[(p * r.height() + i) * r.width() + j] +=
                    g[p * area + cell] / static_cast<T>((*coverage)[cell]);
              }
            }
          }
        }
      });
}

std::vector<int> region_index_map(const RegionSet& regions) {
  std::vector<int> map(regions.height * regions.width, 0);
  for (std::size_t k = 0; k < regions.rects.size(); ++k) {
    const Rect& r = regions.rects[k];
    for (std::size_t i = r.row_begin; i < r.row_end; ++i) {
      for (std::size_t j = r.col_begin; j < r.col_end; ++j) {
        map[i * regions.width + j] = static_cast<int>(k + 1);
      }
    }
  }
  return map;
}

template std::vector<Tensor<float>> crop_regions(const Tensor<float>&,
                                                 const RegionSet&);
template std::vector<Tensor<double>> crop_regions(const Tensor<double>&,
                                                  const RegionSet&);
template Tensor<float> stitch_features(const std::vector<Tensor<float>>&,
                                       const RegionLayout&, std::size_t,
                                       std::size_t);
template Tensor<double> stitch_features(const std::vector<Tensor<double>>&,
                                        const RegionLayout&, std::size_t,
                                        std::size_t);

}  // namespace pcnn::regions
