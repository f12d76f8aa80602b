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

#ifndef PCNN_PGM_HPP_
#define PCNN_PGM_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace pcnn::pgm {

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 255;
  std::vector<std::uint16_t> values;  // row-major
};

// Plain (P2) output, 16 values per line.
void write_ascii(const std::filesystem::path& path, const Image& image);
// Reads P2 and P5 files.
Image read(const std::filesystem::path& path);

// Quantizes values in [lo, hi] to 0..maxval.
Image from_floats(const std::vector<double>& values, std::size_t width,
                  std::size_t height, double lo, double hi,
                  unsigned maxval = 255);

}  // namespace pcnn::pgm

#endif  // PCNN_PGM_HPP_
