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


#include "pcnn/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <map>

#include "pcnn/error.hpp"

namespace pcnn::checkpoint {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'N', 'N'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void text(const std::string& s) {
    uint<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}
  void need(std::uint64_t n) const {
    if (n > buf_.size() - pos_) {
      throw CorruptCheckpoint("truncated at byte " + std::to_string(pos_) + " (" +
                              std::to_string(n) + " more bytes expected, " +
                              std::to_string(buf_.size() - pos_) + " left)");
    }
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::string text() {
    const auto n = uint<std::uint64_t>();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  const char* take(std::size_t n) {
    need(n);
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_file(const std::filesystem::path& path, const File& file) {
  Writer w;
  w.bytes(kMagic, 4);
  w.uint<std::uint32_t>(kFormatVersion);
  w.text(file.config_text);
  w.uint<std::uint64_t>(file.arrays.size());
  for (const auto& a : file.arrays) {
    if (numel(a.shape) != a.values.size()) {
      throw InvalidShape("array " + a.name + ": shape " + to_string(a.shape) +
                         " holds " + std::to_string(a.values.size()) + " values");
    }
    w.text(a.name);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(a.shape.size()));
    for (const auto e : a.shape) w.uint<std::uint64_t>(e);
    for (const float v : a.values) w.uint<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("write failed for " + path.string());
}

File read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));
  const char* magic = r.take(4);
  if (!std::equal(magic, magic + 4, kMagic))
    throw CorruptCheckpoint(path.string() + " is not a checkpoint (bad magic)");
  const auto version = r.uint<std::uint32_t>();
  if (version != kFormatVersion) {
    throw UnsupportedVersion("checkpoint version " + std::to_string(version) +
                             ", expected " + std::to_string(kFormatVersion));
  }
  File f;
  f.config_text = r.text();
  const auto count = r.uint<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.text();
    const auto rank = r.uint<std::uint32_t>();
    r.need(std::uint64_t{rank} * 8);
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(r.uint<std::uint64_t>());
      n *= a.shape.back();
    }
    r.need(n * 4);
    a.values.resize(n);
    for (auto& v : a.values) v = std::bit_cast<float>(r.uint<std::uint32_t>());
    f.arrays.push_back(std::move(a));
  }
  if (!r.done()) throw CorruptCheckpoint("trailing bytes after the last array");
  return f;
}

template <typename T>
void save_checkpoint(model::PcnnModel<T>& model, const train::OptimizerState<T>& state,
                     const config::RunConfig& config,
                     const std::filesystem::path& path) {
  // The config text carries one seed; loading assigns it to model and trainer.
  if (config.model.seed != config.seed || config.train.seed != config.seed) {
    throw InvalidConfig("model and training seeds must equal the run seed to be saved");
  }
  auto kv = config::to_key_values(config);
  kv["epoch"] = std::to_string(state.epoch);
  File f;
  f.config_text = config::format(kv);
  auto params = model.parameters();
  if (!state.velocity.empty() && state.velocity.size() != params.size()) {
    throw InvalidShape("optimizer state does not match the model parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    f.arrays.push_back({"param/" + p.name, p.value.shape(),
                        std::vector<float>(p.value.data().begin(), p.value.data().end())});
    std::vector<float> v(p.value.size(), 0.0f);
    if (!state.velocity.empty()) v.assign(state.velocity[k].begin(), state.velocity[k].end());
    f.arrays.push_back({"velocity/" + p.name, p.value.shape(), std::move(v)});
  }
  for (const auto& b : model.buffers()) {
    f.arrays.push_back({"buffer/" + b.name, Shape{b.values->size()},
                        std::vector<float>(b.values->begin(), b.values->end())});
  }
  write_file(path, f);
}

template <typename T>
Loaded<T> load_checkpoint(const std::filesystem::path& path) {
  File f = read_file(path);
  auto kv = config::parse(f.config_text, path.string());
  const auto epoch_it = kv.find("epoch");
  if (epoch_it == kv.end()) throw CorruptCheckpoint("config lacks the epoch counter");
  Loaded<T> out;
  try {
    out.state.epoch = std::stoull(epoch_it->second);
  } catch (const std::exception&) {
    throw CorruptCheckpoint("bad epoch counter '" + epoch_it->second + "'");
  }
  kv.erase(epoch_it);
  out.config = config::apply(kv);
  out.model = std::make_unique<model::PcnnModel<T>>(out.config.model);

  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : f.arrays) by_name[a.name] = &a;
  auto find = [&](const std::string& name, const Shape& shape) -> const NamedArray& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw CorruptCheckpoint("missing array " + name);
    if (it->second->shape != shape) {
      throw CorruptCheckpoint("array " + name + " has shape " +
                              to_string(it->second->shape) + ", expected " +
                              to_string(shape));
    }
    return *it->second;
  };
  for (auto& p : out.model->parameters()) {
    const auto& a = find("param/" + p.name, p.value.shape());
    std::copy(a.values.begin(), a.values.end(), p.value.mutable_data().begin());
    const auto& v = find("velocity/" + p.name, p.value.shape());
    out.state.velocity.emplace_back(v.values.begin(), v.values.end());
  }
  for (auto& b : out.model->buffers()) {
    const auto& a = find("buffer/" + b.name, Shape{b.values->size()});
    std::copy(a.values.begin(), a.values.end(), b.values->begin());
  }
  return out;
}

template void save_checkpoint(model::PcnnModel<float>&, const train::OptimizerState<float>&,
                              const config::RunConfig&, const std::filesystem::path&);
template void save_checkpoint(model::PcnnModel<double>&,
                              const train::OptimizerState<double>&,
                              const config::RunConfig&, const std::filesystem::path&);
template Loaded<float> load_checkpoint(const std::filesystem::path&);
template Loaded<double> load_checkpoint(const std::filesystem::path&);

}  // namespace pcnn::checkpoint
