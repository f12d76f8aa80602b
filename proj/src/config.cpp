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


#include "pcnn/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "pcnn/error.hpp"

namespace pcnn::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw InvalidConfig(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw InvalidConfig(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidConfig(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_uint(key, trim(item)));
  if (out.empty()) throw InvalidConfig(key + ": empty list");
  return out;
}

std::string from_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

KeyValues parse(const std::string& text, const std::string& origin) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidConfig(origin + ":" + std::to_string(number) +
                          ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw InvalidConfig(origin + ":" + std::to_string(number) + ": empty key");
    }
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

KeyValues read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string format(const KeyValues& values) {
  std::string out;
  for (const auto& [k, v] : values) out += k + " = " + v + "\n";
  return out;
}

void merge(KeyValues& into, const KeyValues& from) {
  for (const auto& [k, v] : from) into[k] = v;
}

void RunConfig::validate() const {
  model.backbone.validate();
  model.regions.validate();
  train.validate();
  if (model.height < 16 || model.width < 16)
    throw InvalidConfig("image extent must be >= 16");
  if (train_size == 0) throw InvalidConfig("train_size must be >= 1");
  if (seeds == 0) throw InvalidConfig("seeds must be >= 1");
  if (threads == 0) throw InvalidConfig("threads must be >= 1");
  data::parse_usage(train_usage);
  data::parse_usage(test_usage);
  // Building the model checks the remaining cross-field constraints.
  model::PcnnModel<float> probe(model);
}

KeyValues to_key_values(const RunConfig& c) {
  KeyValues kv;
  kv["seed"] = std::to_string(c.seed);
  kv["data"] = c.data;
  kv["train_size"] = std::to_string(c.train_size);
  kv["test_size"] = std::to_string(c.test_size);
  kv["train_usage"] = c.train_usage;
  kv["test_usage"] = c.test_usage;
  kv["out"] = c.out.string();
  kv["seeds"] = std::to_string(c.seeds);
  kv["threads"] = std::to_string(c.threads);

  kv["variant"] = c.model.variant.name();
  kv["height"] = std::to_string(c.model.height);
  kv["width"] = std::to_string(c.model.width);
  kv["classes"] = std::to_string(c.model.classes);
  kv["stem_channels"] = std::to_string(c.model.backbone.stem_channels);
  kv["stage_channels"] = from_list(c.model.backbone.stage_channels);
  kv["stage_strides"] = from_list(c.model.backbone.stage_strides);
  kv["refine_blocks"] = std::to_string(c.model.refine_blocks);
  kv["share_local_weights"] = c.model.share_local_weights ? "true" : "false";
  kv["b1"] = fmt(c.model.regions.b1);
  kv["b2"] = fmt(c.model.regions.b2);
  kv["wsplit"] = fmt(c.model.regions.wsplit);

  kv["lr"] = fmt(c.train.lr);
  kv["momentum"] = fmt(c.train.momentum);
  kv["weight_decay"] = fmt(c.train.weight_decay);
  kv["batch_size"] = std::to_string(c.train.batch_size);
  kv["epochs"] = std::to_string(c.train.epochs);
  kv["alpha"] = fmt(c.train.alpha);
  kv["beta"] = fmt(c.train.beta);
  kv["precision"] = train::to_string(c.train.precision);
  kv["locnet_lr_scale"] = fmt(c.train.locnet_lr_scale);
  kv["clip_norm"] = fmt(c.train.clip_norm);
  return kv;
}

RunConfig apply(const KeyValues& values, RunConfig c) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"seed", [&](auto& k, auto& v) { c.seed = to_uint(k, v); }},
      {"data", [&](auto&, auto& v) { c.data = v; }},
      {"train_size", [&](auto& k, auto& v) { c.train_size = to_uint(k, v); }},
      {"test_size", [&](auto& k, auto& v) { c.test_size = to_uint(k, v); }},
      {"train_usage", [&](auto&, auto& v) { c.train_usage = v; }},
      {"test_usage", [&](auto&, auto& v) { c.test_usage = v; }},
      {"out", [&](auto&, auto& v) { c.out = v; }},
      {"seeds", [&](auto& k, auto& v) { c.seeds = to_uint(k, v); }},
      {"threads", [&](auto& k, auto& v) { c.threads = to_uint(k, v); }},
      {"variant", [&](auto&, auto& v) { c.model.variant = model::Variant::parse(v); }},
      {"height", [&](auto& k, auto& v) { c.model.height = to_uint(k, v); }},
      {"width", [&](auto& k, auto& v) { c.model.width = to_uint(k, v); }},
      {"classes", [&](auto& k, auto& v) { c.model.classes = to_uint(k, v); }},
      {"stem_channels",
       [&](auto& k, auto& v) { c.model.backbone.stem_channels = to_uint(k, v); }},
      {"stage_channels",
       [&](auto& k, auto& v) { c.model.backbone.stage_channels = to_list(k, v); }},
      {"stage_strides",
       [&](auto& k, auto& v) { c.model.backbone.stage_strides = to_list(k, v); }},
      {"refine_blocks", [&](auto& k, auto& v) { c.model.refine_blocks = to_uint(k, v); }},
      {"share_local_weights",
       [&](auto& k, auto& v) { c.model.share_local_weights = to_bool(k, v); }},
      {"b1", [&](auto& k, auto& v) { c.model.regions.b1 = to_double(k, v); }},
      {"b2", [&](auto& k, auto& v) { c.model.regions.b2 = to_double(k, v); }},
      {"wsplit", [&](auto& k, auto& v) { c.model.regions.wsplit = to_double(k, v); }},
      {"lr", [&](auto& k, auto& v) { c.train.lr = to_double(k, v); }},
      {"momentum", [&](auto& k, auto& v) { c.train.momentum = to_double(k, v); }},
      {"weight_decay", [&](auto& k, auto& v) { c.train.weight_decay = to_double(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { c.train.batch_size = to_uint(k, v); }},
      {"epochs", [&](auto& k, auto& v) { c.train.epochs = to_uint(k, v); }},
      {"alpha", [&](auto& k, auto& v) { c.train.alpha = to_double(k, v); }},
      {"beta", [&](auto& k, auto& v) { c.train.beta = to_double(k, v); }},
      {"precision", [&](auto&, auto& v) { c.train.precision = train::parse_precision(v); }},
      {"locnet_lr_scale",
       [&](auto& k, auto& v) { c.train.locnet_lr_scale = to_double(k, v); }},
      {"clip_norm", [&](auto& k, auto& v) { c.train.clip_norm = to_double(k, v); }},
  };
  for (const auto& [k, v] : values) {
    const auto it = setters.find(k);
    if (it == setters.end()) throw InvalidConfig("unknown key '" + k + "'");
    it->second(k, v);
  }
  c.model.seed = c.seed;
  c.train.seed = c.seed;
  c.model.alpha = c.train.alpha;
  c.model.beta = c.train.beta;
  return c;
}

RunConfig resolve(const std::filesystem::path* file, const KeyValues& overrides) {
  KeyValues kv;
  if (file) merge(kv, read_file(*file));
  merge(kv, overrides);
  RunConfig c = apply(kv);
  c.validate();
  return c;
}

std::filesystem::path resolve_data_path(const std::string& data) {
  std::filesystem::path p(data);
  if (p.is_relative() && !std::filesystem::exists(p)) {
    if (const char* root = std::getenv("PCNN_DATA_DIR")) {
      const auto candidate = std::filesystem::path(root) / p;
      if (std::filesystem::exists(candidate)) return candidate;
    }
  }
  return p;
}

}  // namespace pcnn::config
