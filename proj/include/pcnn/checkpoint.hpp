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


#ifndef PCNN_CHECKPOINT_HPP_
#define PCNN_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pcnn/config.hpp"
#include "pcnn/model.hpp"
#include "pcnn/train.hpp"

namespace pcnn::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

// Raw file contents: magic "PCNN", u32 version, u64-prefixed config text,
// u64 array count, then per array a u64-prefixed name, u32 rank, u64 extents
// and float32 values. All integers little-endian.
struct File {
  std::string config_text;
  std::vector<NamedArray> arrays;
};

void write_file(const std::filesystem::path& path, const File& file);
File read_file(const std::filesystem::path& path);

template <typename T>
struct Loaded {
  config::RunConfig config;
  std::unique_ptr<model::PcnnModel<T>> model;
  train::OptimizerState<T> state;
};

// Arrays are named "param/<name>", "velocity/<name>" and "buffer/<name>";
// the epoch counter travels in the config text. Values are stored as float32,
// so only float models roundtrip bitwise.
template <typename T>
void save_checkpoint(model::PcnnModel<T>& model, const train::OptimizerState<T>& state,
                     const config::RunConfig& config,
                     const std::filesystem::path& path);

template <typename T>
Loaded<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace pcnn::checkpoint

#endif  // PCNN_CHECKPOINT_HPP_
