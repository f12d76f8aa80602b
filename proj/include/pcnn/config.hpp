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


#ifndef PCNN_CONFIG_HPP_
#define PCNN_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pcnn/model.hpp"
#include "pcnn/train.hpp"

namespace pcnn::config {

// Flat `key = value` pairs; later sources override earlier ones.
using KeyValues = std::map<std::string, std::string>;

// Blank lines and `#` comments are skipped. Errors name the origin and line.
KeyValues parse(const std::string& text, const std::string& origin = "<text>");
KeyValues read_file(const std::filesystem::path& path);
std::string format(const KeyValues& values);
void merge(KeyValues& into, const KeyValues& from);

struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  std::uint64_t seed = 0;
  // "synthetic", a FER2013 CSV, or a directory written by synth-gen.
  std::string data = "synthetic";
  std::size_t train_size = 700;
  std::size_t test_size = 140;
  std::string train_usage = "Training";
  std::string test_usage = "PublicTest";
  std::filesystem::path out = "out";
  std::size_t seeds = 1;  // consecutive seeds starting at `seed`
  std::size_t threads = 1;

  void validate() const;
};

// Every key and its current value.
KeyValues to_key_values(const RunConfig& config);
// Applies keys over `base`; unknown keys and bad values raise InvalidConfig.
RunConfig apply(const KeyValues& values, RunConfig base = {});

// Defaults < file < overrides. A relative data path is looked up under
// PCNN_DATA_DIR when it does not exist as given.
RunConfig resolve(const std::filesystem::path* file, const KeyValues& overrides);

std::filesystem::path resolve_data_path(const std::string& data);

}  // namespace pcnn::config

#endif  // PCNN_CONFIG_HPP_
