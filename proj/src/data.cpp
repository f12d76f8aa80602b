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


#include "pcnn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "pcnn/error.hpp"
#include "pcnn/kernels.hpp"
#include "pcnn/pgm.hpp"

namespace pcnn::data {

namespace {

constexpr std::size_t kFerSide = 48;
constexpr std::size_t kMinSyntheticExtent = 16;
constexpr double kJitter = 0.15;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t index) {
  return splitmix(seed ^ splitmix(index));
}

void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw InvalidArgument(std::string(name) + " must lie in [0, 1]");
  }
}

void check_signed_unit(double v, const char* name) {
  if (!(v >= -1.0 && v <= 1.0)) {
    throw InvalidArgument(std::string(name) + " must lie in [-1, 1]");
  }
}

void check_label(int label) {
  if (label < 0 || label >= static_cast<int>(kNumClasses)) {
    throw InvalidLabel("label " + std::to_string(label) + " outside 0..6");
  }
}

std::string trim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  return s.substr(b);
}

Tensor<float> copy_pixels(const Tensor<float>& t) {
  return Tensor<float>(t.shape(), std::vector<float>(t.data().begin(), t.data().end()));
}

double distance_to_segment(double px, double py, double ax, double ay, double bx,
                           double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = px - (ax + t * dx), ey = py - (ay + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

// Face-space intensity at (u, v) in [0, 1]^2.
double face_intensity(const FaceParams& p, double u, double v, double face_level) {
  constexpr double kBackground = 0.1;
  constexpr double kInk = 0.05;
  const double hx = (u - 0.5) / 0.40, hy = (v - 0.52) / 0.46;
  if (hx * hx + hy * hy > 1.0) return kBackground;

  for (double cx : {0.34, 0.66}) {
    const double ry = 0.015 + 0.055 * p.eye_openness;
    const double ex = (u - cx) / 0.085, ey = (v - 0.40) / ry;
    if (ex * ex + ey * ey <= 1.0) return kInk;

    const double inward = cx < 0.5 ? 1.0 : -1.0;
    const double outer_u = cx - inward * 0.09, inner_u = cx + inward * 0.09;
    const double outer_v = 0.27 + 0.06 * p.eyebrow_angle;
    const double inner_v = 0.27 - 0.06 * p.eyebrow_angle;
    if (distance_to_segment(u, v, outer_u, outer_v, inner_u, inner_v) <= 0.018) {
      return kInk;
    }
  }

  constexpr double kHalfWidth = 0.17, kThick = 0.016;
  if (std::abs(u - 0.5) <= kHalfWidth) {
    const double t = (u - 0.5) / kHalfWidth;
    const double upper = 0.74 + 0.06 * p.mouth_curvature * (0.5 - t * t);
    const double lower = upper + 0.13 * p.mouth_openness * (1.0 - t * t);
    if (v >= upper - kThick && v <= lower + kThick) return kInk;
  }
  return face_level;
}

}  // namespace

const std::array<std::string, kNumClasses>& class_names() {
  static const std::array<std::string, kNumClasses> names{
      "angry", "disgust", "fear", "happy", "sad", "surprise", "neutral"};
  return names;
}

void FaceParams::validate() const {
  check_label(label);
  check_unit(eye_openness, "eye openness");
  check_signed_unit(eyebrow_angle, "eyebrow angle");
  check_signed_unit(mouth_curvature, "mouth curvature");
  check_unit(mouth_openness, "mouth openness");
}

std::string FaceParams::to_string() const {
  std::ostringstream os;
  os << std::setprecision(17) << "eye=" << eye_openness << ";brow=" << eyebrow_angle
     << ";kappa=" << mouth_curvature << ";open=" << mouth_openness
     << ";seed=" << jitter_seed;
  return os.str();
}

FaceParams FaceParams::parse(int label, const std::string& text) {
  FaceParams p;
  p.label = label;
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InvalidArgument("bad face parameter '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  try {
    p.eye_openness = std::stod(kv.at("eye"));
    p.eyebrow_angle = std::stod(kv.at("brow"));
    p.mouth_curvature = std::stod(kv.at("kappa"));
    p.mouth_openness = std::stod(kv.at("open"));
    p.jitter_seed = std::stoull(kv.at("seed"));
  } catch (const std::exception&) {
    throw InvalidArgument("incomplete face parameters '" + text + "'");
  }
  p.validate();
  return p;
}

FaceParams nominal_params(int label) {
  check_label(label);
  // eye openness, eyebrow angle, mouth curvature, mouth openness
  static constexpr double kTable[kNumClasses][4] = {
      {0.55, -0.80, -0.35, 0.05},  // angry
      {0.25, -0.35, -0.55, 0.30},  // disgust
      {0.95, 0.55, -0.25, 0.55},   // fear
      {0.45, 0.10, 0.80, 0.25},    // happy
      {0.35, 0.60, -0.80, 0.00},   // sad
      {1.00, 0.85, 0.00, 0.90},    // surprise
      {0.00, 0.00, 0.00, 0.00},    // neutral
  };
  const auto& row = kTable[label];
  FaceParams p;
  p.label = label;
  p.eye_openness = row[0];
  p.eyebrow_angle = row[1];
  p.mouth_curvature = row[2];
  p.mouth_openness = row[3];
  return p;
}

FaceParams jittered_params(int label, std::uint64_t seed) {
  FaceParams p = nominal_params(label);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> j(-kJitter, kJitter);
  p.eye_openness = std::clamp(p.eye_openness + j(rng), 0.0, 1.0);
  p.eyebrow_angle = std::clamp(p.eyebrow_angle + j(rng), -1.0, 1.0);
  p.mouth_curvature = std::clamp(p.mouth_curvature + j(rng), -1.0, 1.0);
  p.mouth_openness = std::clamp(p.mouth_openness + j(rng), 0.0, 1.0);
  p.jitter_seed = seed;
  return p;
}

Sample render_face(const FaceParams& params, std::size_t height, std::size_t width) {
  params.validate();
  if (height < kMinSyntheticExtent || width < kMinSyntheticExtent) {
    throw ImageTooSmall("synthetic faces need at least 16x16 pixels, got " +
                        std::to_string(height) + "x" + std::to_string(width));
  }
  // Placement and shading nuisance, also drawn from the jitter seed.
  std::mt19937_64 rng(splitmix(params.jitter_seed));
  std::uniform_real_distribution<double> shift(-0.03, 0.03), zoom(0.95, 1.05),
      shade(0.65, 0.8);
  const double dx = shift(rng), dy = shift(rng), scale = zoom(rng), level = shade(rng);

  constexpr std::size_t kSuper = 2;
  std::vector<float> pixels(height * width);
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      double acc = 0.0;
      for (std::size_t si = 0; si < kSuper; ++si) {
        for (std::size_t sj = 0; sj < kSuper; ++sj) {
          const double u = (static_cast<double>(j * kSuper + sj) + 0.5) / (width * kSuper);
          const double v = (static_cast<double>(i * kSuper + si) + 0.5) / (height * kSuper);
          acc += face_intensity(params, (u - 0.5 - dx) / scale + 0.5,
                                (v - 0.5 - dy) / scale + 0.5, level);
        }
      }
      pixels[i * width + j] = static_cast<float>(acc / (kSuper * kSuper));
    }
  }
  Sample s;
  s.pixels = Tensor<float>({1, height, width}, std::move(pixels));
  s.label = params.label;
  s.meta.source = "synthetic";
  s.meta.face = params;
  return s;
}

Dataset gen_synthetic_faces(std::size_t n, std::size_t height, std::size_t width,
                            std::uint64_t seed) {
  if (height < kMinSyntheticExtent || width < kMinSyntheticExtent) {
    throw ImageTooSmall("synthetic faces need at least 16x16 pixels");
  }
  Dataset ds;
  ds.height = height;
  ds.width = width;
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % kNumClasses);
    ds.samples.push_back(render_face(jittered_params(label, mix(seed, i)), height, width));
  }
  return ds;
}

std::array<std::size_t, kNumClasses> Dataset::class_counts() const {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& s : samples) ++counts[static_cast<std::size_t>(s.label)];
  return counts;
}

std::uint64_t Dataset::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& s : samples) {
    auto px = s.pixels.data();
    feed(px.data(), px.size_bytes());
    const std::int32_t label = s.label;
    feed(&label, sizeof label);
  }
  return h;
}

Usage parse_usage(const std::string& text) {
  if (text == "Training") return Usage::kTraining;
  if (text == "PublicTest") return Usage::kPublicTest;
  if (text == "PrivateTest") return Usage::kPrivateTest;
  if (text == "all") return Usage::kAll;
  throw InvalidArgument("unknown usage '" + text + "'");
}

Dataset load_fer2013_csv(const std::filesystem::path& path, Usage filter,
                         std::optional<std::size_t> limit) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "emotion,pixels,Usage") {
    throw MalformedRow(1, "expected header 'emotion,pixels,Usage'");
  }
  Dataset ds;
  ds.height = ds.width = kFerSide;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (limit && ds.size() >= *limit) break;
    line = trim(line);
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      throw MalformedRow(row, "expected three comma-separated fields");
    }
    int label = -1;
    const char* lb = line.data();
    auto [lp, lec] = std::from_chars(lb, lb + c1, label);
    if (lec != std::errc() || lp != lb + c1 || label < 0 || label >= 7) {
      throw MalformedRow(row, "label must be an integer in 0..6");
    }
    const std::string usage_text = line.substr(c2 + 1);
    Usage usage;
    try {
      usage = parse_usage(usage_text);
    } catch (const InvalidArgument&) {
      throw MalformedRow(row, "unknown usage '" + usage_text + "'");
    }
    if (usage == Usage::kAll) throw MalformedRow(row, "unknown usage 'all'");
    if (filter != Usage::kAll && usage != filter) continue;

    std::vector<float> pixels;
    pixels.reserve(kFerSide * kFerSide);
    const char* p = line.data() + c1 + 1;
    const char* end = line.data() + c2;
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      int v = -1;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || v < 0 || v > 255 || (next < end && *next != ' ')) {
        throw MalformedRow(row, "pixels must be integers in 0..255");
      }
      pixels.push_back(static_cast<float>(v) / 255.0f);
      p = next;
    }
    if (pixels.size() != kFerSide * kFerSide) {
      throw MalformedRow(row, "expected 2304 pixels, got " + std::to_string(pixels.size()));
    }
    Sample s;
    s.pixels = Tensor<float>({1, kFerSide, kFerSide}, std::move(pixels));
    s.label = label;
    s.meta.source = "fer2013:" + usage_text;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void AugSpec::validate() const {
  if (occlusion) {
    const auto& o = *occlusion;
    if (o.box) {
      const Box& b = *o.box;
      if (!(b.top >= 0 && b.left >= 0 && b.height >= 0 && b.width >= 0 &&
            b.top + b.height <= 1.0 + 1e-12 && b.left + b.width <= 1.0 + 1e-12)) {
        throw InvalidArgument("occlusion box must lie inside the unit square");
      }
      if (b.height * b.width > 0.5 + 1e-12) {
        throw InvalidArgument("occlusion may cover at most half of the image");
      }
    } else if (!(o.fraction >= 0.0 && o.fraction <= 0.5)) {
      throw InvalidArgument("occlusion fraction must lie in [0, 0.5]");
    }
  }
  if (pose) {
    if (!(std::abs(pose->rotation_degrees) <= 45.0)) {
      throw InvalidArgument("rotation must lie in [-45, 45] degrees");
    }
    if (!(std::abs(pose->shear) <= 1.0)) {
      throw InvalidArgument("shear must lie in [-1, 1]");
    }
  }
}

bool AugSpec::is_identity() const {
  const bool no_occ = !occlusion || (occlusion->box ? occlusion->box->height * occlusion->box->width == 0
                                                    : occlusion->fraction == 0.0);
  const bool no_pose = !pose || (pose->rotation_degrees == 0.0 && pose->shear == 0.0);
  return no_occ && no_pose;
}

std::string AugSpec::to_string() const {
  std::ostringstream os;
  os << std::setprecision(6);
  if (is_identity()) return "identity";
  std::string sep;
  if (pose && (pose->rotation_degrees != 0.0 || pose->shear != 0.0)) {
    os << "rotation=" << pose->rotation_degrees << ";shear=" << pose->shear;
    sep = ";";
  }
  if (occlusion) {
    const auto& o = *occlusion;
    os << sep << "occlusion=";
    if (o.box) {
      os << "box:" << o.box->top << ':' << o.box->left << ':' << o.box->height << ':'
         << o.box->width;
    } else {
      os << o.fraction;
    }
    os << ";fill=" << (o.fill == Fill::kZero ? "zero" : "mean");
  }
  os << ";seed=" << seed;
  return os.str();
}

std::array<double, 6> pose_theta(const Pose& pose, std::size_t height, std::size_t width) {
  const double a = pose.rotation_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a), k = pose.shear;
  // Forward map in pixel units: rotation after shear.
  const double f00 = c, f01 = c * k - s, f10 = s, f11 = s * k + c;
  const double det = f00 * f11 - f01 * f10;
  const double i00 = f11 / det, i01 = -f01 / det, i10 = -f10 / det, i11 = f00 / det;
  const double sx = width > 1 ? 0.5 * static_cast<double>(width - 1) : 1.0;
  const double sy = height > 1 ? 0.5 * static_cast<double>(height - 1) : 1.0;
  return {i00, i01 * sy / sx, 0.0, i10 * sx / sy, i11, 0.0};
}

Sample augment(const Sample& sample, const AugSpec& spec) {
  spec.validate();
  Sample out = sample;
  out.pixels = copy_pixels(sample.pixels);
  if (spec.is_identity()) return out;

  const std::size_t h = sample.pixels.dim(1), w = sample.pixels.dim(2);
  if (spec.pose && (spec.pose->rotation_degrees != 0.0 || spec.pose->shear != 0.0)) {
    const auto th = pose_theta(*spec.pose, h, w);
    Tensor<double> img({1, 1, h, w}, std::vector<double>(out.pixels.data().begin(),
                                                         out.pixels.data().end()));
    Tensor<double> theta({1, 2, 3}, std::vector<double>(th.begin(), th.end()));
    NoGradGuard no_grad;
    Tensor<double> warped = nn::grid_sample(img, nn::grid_generate(theta, h, w));
    auto dst = out.pixels.mutable_data();
    auto src = warped.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = static_cast<float>(std::clamp(src[i], 0.0, 1.0));
    }
  }

  if (spec.occlusion) {
    const Occlusion& o = *spec.occlusion;
    std::size_t r0 = 0, r1 = 0, c0 = 0, c1 = 0;
    auto cell = [](double frac, std::size_t extent) {
      return std::min(extent, static_cast<std::size_t>(std::lround(frac * extent)));
    };
    if (o.box) {
      r0 = cell(o.box->top, h);
      r1 = cell(o.box->top + o.box->height, h);
      c0 = cell(o.box->left, w);
      c1 = cell(o.box->left + o.box->width, w);
    } else if (o.fraction > 0.0) {
      std::mt19937_64 rng(spec.seed);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const double bw = o.fraction + (1.0 - o.fraction) * unit(rng);
      const double bh = o.fraction / bw;
      const double top = (1.0 - bh) * unit(rng), left = (1.0 - bw) * unit(rng);
      r0 = cell(top, h);
      r1 = cell(top + bh, h);
      c0 = cell(left, w);
      c1 = cell(left + bw, w);
    }
    auto px = out.pixels.mutable_data();
    float fill = 0.0f;
    if (o.fill == Fill::kMean) {
      double sum = 0.0;
      for (float v : px) sum += v;
      fill = static_cast<float>(sum / static_cast<double>(px.size()));
    }
    for (std::size_t i = r0; i < r1; ++i) {
      for (std::size_t j = c0; j < c1; ++j) px[i * w + j] = fill;
    }
  }
  out.meta.augmentations.push_back(spec.to_string());
  return out;
}

Dataset augment(const Dataset& dataset, const AugSpec& spec) {
  spec.validate();
  Dataset out;
  out.height = dataset.height;
  out.width = dataset.width;
  out.samples.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    AugSpec s = spec;
    s.seed = mix(spec.seed, i);
    out.samples.push_back(augment(dataset.samples[i], s));
  }
  return out;
}

std::vector<Batch> make_batches(const Dataset& dataset, std::size_t batch_size,
                                std::uint64_t shuffle_seed) {
  if (dataset.empty()) throw EmptyDataset("cannot batch an empty dataset");
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> batches;
  for (std::size_t b = 0; b < order.size(); b += batch_size) {
    const std::size_t e = std::min(order.size(), b + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                         order.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return batches;
}

template <typename T>
Tensor<T> batch_images(const Dataset& dataset, const Batch& batch) {
  if (batch.empty()) throw EmptyDataset("empty batch");
  const std::size_t hw = dataset.height * dataset.width;
  std::vector<T> data(batch.size() * hw);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Sample& s = dataset.samples.at(batch[b]);
    auto px = s.pixels.data();
    if (px.size() != hw) throw InvalidShape("sample extent differs from the dataset");
    std::copy(px.begin(), px.end(), data.begin() + static_cast<std::ptrdiff_t>(b * hw));
  }
  return Tensor<T>({batch.size(), 1, dataset.height, dataset.width}, std::move(data));
}

std::vector<int> batch_labels(const Dataset& dataset, const Batch& batch) {
  std::vector<int> labels;
  labels.reserve(batch.size());
  for (auto i : batch) labels.push_back(dataset.samples.at(i).label);
  return labels;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, std::size_t first) {
  if (first > dataset.size()) throw InvalidArgument("split point beyond dataset size");
  Dataset a{dataset.height, dataset.width, {}}, b{dataset.height, dataset.width, {}};
  a.samples.assign(dataset.samples.begin(),
                   dataset.samples.begin() + static_cast<std::ptrdiff_t>(first));
  b.samples.assign(dataset.samples.begin() + static_cast<std::ptrdiff_t>(first),
                   dataset.samples.end());
  return {std::move(a), std::move(b)};
}

void export_synthetic(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream labels(dir / "labels.txt");
  if (!labels) throw IoError("cannot write " + (dir / "labels.txt").string());
  labels << "index,label,params\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Sample& s = dataset.samples[i];
    std::vector<double> v(s.pixels.data().begin(), s.pixels.data().end());
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << i << ".pgm";
    pgm::write_ascii(dir / name.str(),
                     pgm::from_floats(v, s.pixels.dim(2), s.pixels.dim(1), 0.0, 1.0, 65535));
    labels << i << ',' << s.label << ',' << (s.meta.face ? s.meta.face->to_string() : "")
           << '\n';
  }
  if (!labels) throw IoError("failed writing labels.txt");
}

Dataset import_synthetic(const std::filesystem::path& dir) {
  std::ifstream labels(dir / "labels.txt");
  if (!labels) throw IoError("cannot open " + (dir / "labels.txt").string());
  std::string line;
  if (!std::getline(labels, line) || trim(line) != "index,label,params") {
    throw MalformedRow(1, "expected header 'index,label,params'");
  }
  Dataset ds;
  std::size_t row = 1;
  while (std::getline(labels, line)) {
    ++row;
    line = trim(line);
    if (line.empty()) continue;
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw MalformedRow(row, "expected index,label,params");
    }
    std::size_t index = 0;
    int label = 0;
    try {
      index = std::stoull(line.substr(0, c1));
      label = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
    } catch (const std::exception&) {
      throw MalformedRow(row, "bad index or label");
    }
    if (label < 0 || label >= 7) throw MalformedRow(row, "label outside 0..6");
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << index << ".pgm";
    const pgm::Image img = pgm::read(dir / name.str());
    if (ds.empty()) {
      ds.height = img.height;
      ds.width = img.width;
    } else if (img.height != ds.height || img.width != ds.width) {
      throw MalformedRow(row, "image extent differs from the first image");
    }
    std::vector<float> px(img.values.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      px[i] = static_cast<float>(static_cast<double>(img.values[i]) / img.maxval);
    }
    Sample s;
    s.pixels = Tensor<float>({1, img.height, img.width}, std::move(px));
    s.label = label;
    s.meta.source = "synthetic";
    const std::string params = line.substr(c2 + 1);
    if (!params.empty()) s.meta.face = FaceParams::parse(label, params);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

template Tensor<float> batch_images(const Dataset&, const Batch&);
template Tensor<double> batch_images(const Dataset&, const Batch&);

}  // namespace pcnn::data
