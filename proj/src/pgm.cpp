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


#include "pcnn/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "pcnn/error.hpp"

namespace pcnn::pgm {

namespace {

// Next whitespace-separated token, skipping '#' comments.
std::string token(std::istream& in) {
  std::string t;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      if (!t.empty()) return t;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!t.empty()) return t;
      continue;
    }
    t.push_back(c);
  }
  return t;
}

std::size_t number(std::istream& in, const std::filesystem::path& path) {
  const std::string t = token(in);
  try {
    std::size_t pos = 0;
    const unsigned long v = std::stoul(t, &pos);
    if (pos != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw IoError("bad PGM header or value '" + t + "' in " + path.string());
  }
}

}  // namespace

void write_ascii(const std::filesystem::path& path, const Image& image) {
  if (image.values.size() != image.width * image.height) {
    throw InvalidShape("PGM value count does not match its extent");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P2\n" << image.width << ' ' << image.height << '\n' << image.maxval << '\n';
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    out << image.values[i];
    out << ((i + 1) % 16 == 0 || i + 1 == image.values.size() ? '\n' : ' ');
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Image read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = token(in);
  if (magic != "P2" && magic != "P5") {
    throw IoError(path.string() + " is not a PGM file");
  }
  Image img;
  img.width = number(in, path);
  img.height = number(in, path);
  img.maxval = static_cast<unsigned>(number(in, path));
  if (img.maxval == 0 || img.maxval > 65535) {
    throw IoError("bad PGM maxval in " + path.string());
  }
  img.values.resize(img.width * img.height);
  if (magic == "P2") {
    for (auto& v : img.values) {
      const std::size_t x = number(in, path);
      if (x > img.maxval) throw IoError("PGM value out of range in " + path.string());
      v = static_cast<std::uint16_t>(x);
    }
  } else {
    const std::size_t bytes = img.maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(img.values.size() * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
      throw IoError("truncated PGM " + path.string());
    }
    for (std::size_t i = 0; i < img.values.size(); ++i) {
      img.values[i] = bytes == 1 ? raw[i]
                                 : static_cast<std::uint16_t>(raw[2 * i] << 8 | raw[2 * i + 1]);
    }
  }
  return img;
}

Image from_floats(const std::vector<double>& values, std::size_t width,
                  std::size_t height, double lo, double hi, unsigned maxval) {
  if (values.size() != width * height) {
    throw InvalidShape("value count does not match the image extent");
  }
  Image img{width, height, maxval, std::vector<std::uint16_t>(values.size())};
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double t = std::clamp((values[i] - lo) / span, 0.0, 1.0);
    img.values[i] = static_cast<std::uint16_t>(std::lround(t * maxval));
  }
  return img;
}

}  // namespace pcnn::pgm
