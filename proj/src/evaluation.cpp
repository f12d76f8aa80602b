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


#include "pcnn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "pcnn/error.hpp"
#include "pcnn/train.hpp"

namespace pcnn::eval {

namespace {

constexpr std::size_t K = data::kNumClasses;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
void run_variant(const config::RunConfig& base, const model::Variant& variant,
                 std::uint64_t seed, const data::Dataset& train_set,
                 const std::vector<NamedDataset>& datasets,
                 std::vector<AblationRow>& rows) {
  model::ModelConfig mc = base.model;
  mc.variant = variant;
  mc.seed = seed;
  train::TrainConfig tc = base.train;
  tc.seed = seed;
  model::PcnnModel<T> m(mc);
  train::train(m, train_set, nullptr, tc);
  for (const auto& [tag, ds] : datasets) {
    const auto r = evaluate(m, ds);
    rows.push_back({variant.name(), tag, std::to_string(seed), r.accuracy, r.mean_loss});
  }
}

}  // namespace

ConfusionMatrix ConfusionMatrix::from(std::span<const int> labels,
                                      std::span<const int> predicted) {
  if (labels.size() != predicted.size()) {
    throw InvalidShape(std::to_string(labels.size()) + " labels vs " +
                       std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= static_cast<int>(K) || predicted[i] < 0 ||
        predicted[i] >= static_cast<int>(K)) {
      throw InvalidLabel("class index out of range at sample " + std::to_string(i));
    }
    ++m.counts[labels[i]][predicted[i]];
  }
  return m;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t s = 0;
  for (const auto& row : counts)
    for (auto c : row) s += c;
  return s;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t s = 0;
  for (std::size_t i = 0; i < K; ++i) s += counts[i][i];
  return s;
}

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  if (n == 0) throw EmptyDataset("confusion matrix is empty");
  return static_cast<double>(trace()) / static_cast<double>(n);
}

std::array<double, K> ConfusionMatrix::per_class_accuracy() const {
  std::array<double, K> out{};
  for (std::size_t i = 0; i < K; ++i) {
    std::size_t row = 0;
    for (auto c : counts[i]) row += c;
    out[i] = row == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : static_cast<double>(counts[i][i]) / static_cast<double>(row);
  }
  return out;
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream os;
  os << "true\\predicted";
  for (const auto& n : data::class_names()) os << ',' << n;
  os << '\n';
  for (std::size_t i = 0; i < K; ++i) {
    os << data::class_names()[i];
    for (auto c : counts[i]) os << ',' << c;
    os << '\n';
  }
  return os.str();
}

pgm::Image ConfusionMatrix::heatmap(std::size_t cell) const {
  const std::size_t side = K * cell;
  std::vector<double> v(side * side, 0.0);
  for (std::size_t i = 0; i < K; ++i) {
    std::size_t row = 0;
    for (auto c : counts[i]) row += c;
    for (std::size_t j = 0; j < K; ++j) {
      const double f = row ? static_cast<double>(counts[i][j]) / static_cast<double>(row) : 0.0;
      for (std::size_t y = 0; y < cell; ++y)
        for (std::size_t x = 0; x < cell; ++x) v[(i * cell + y) * side + j * cell + x] = f;
    }
  }
  return pgm::from_floats(v, side, side, 0.0, 1.0);
}

template <typename T>
EvalResult evaluate(model::PcnnModel<T>& model, const data::Dataset& dataset,
                    std::size_t batch_size) {
  if (dataset.empty()) throw EmptyDataset("evaluation set is empty");
  if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
  std::vector<int> labels, predicted;
  double loss = 0.0;
  data::Batch batch;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    batch.clear();
    for (std::size_t i = start; i < std::min(dataset.size(), start + batch_size); ++i)
      batch.push_back(i);
    const auto y = data::batch_labels(dataset, batch);
    const auto r = model.forward(data::batch_images<T>(dataset, batch), y,
                                 model::Mode::kEval);
    loss += static_cast<double>(r.loss.item()) * static_cast<double>(y.size());
    const auto p = model::predict(r.global_logits);
    labels.insert(labels.end(), y.begin(), y.end());
    predicted.insert(predicted.end(), p.begin(), p.end());
  }
  EvalResult out;
  out.confusion = ConfusionMatrix::from(labels, predicted);
  out.accuracy = out.confusion.accuracy();
  out.mean_loss = loss / static_cast<double>(dataset.size());
  return out;
}

template <typename T>
std::vector<RobustnessRow> robustness_report(model::PcnnModel<T>& model,
                                             const data::Dataset& base,
                                             const std::vector<data::AugSpec>& specs) {
  for (const auto& s : specs) s.validate();
  std::vector<RobustnessRow> rows;
  for (const auto& s : specs) {
    const std::string name = s.is_identity() ? "identity" : s.to_string();
    rows.push_back({name, evaluate(model, data::augment(base, s)).accuracy});
  }
  return rows;
}

data::Dataset pose_occlusion_set(const data::Dataset& base, std::uint64_t seed,
                                 const PerturbationRange& range) {
  data::Dataset out{base.height, base.width, {}};
  out.samples.reserve(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::mt19937_64 rng(splitmix(seed ^ splitmix(i)));
    std::uniform_real_distribution<double> u(-1.0, 1.0), p(0.0, 1.0);
    data::AugSpec spec;
    spec.seed = rng();
    spec.pose = data::Pose{range.max_rotation_degrees * u(rng), range.max_shear * u(rng)};
    if (p(rng) < range.occlusion_probability) {
      data::Occlusion occ;
      occ.fraction = range.min_occlusion + (range.max_occlusion - range.min_occlusion) * p(rng);
      spec.occlusion = occ;
    }
    out.samples.push_back(data::augment(base.samples[i], spec));
  }
  return out;
}

std::vector<model::Variant> alpha_beta_grid() {
  return {model::Variant::custom(4, 16), model::Variant::custom(8, 12),
          model::Variant::custom(10, 10), model::Variant::custom(12, 8),
          model::Variant::custom(16, 4)};
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of nothing");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string AblationReport::to_csv() const {
  std::string out = "variant,dataset,seed,accuracy,mean_loss\n";
  for (const auto* rows : {&runs, &medians})
    for (const auto& r : *rows)
      out += r.variant + ',' + r.dataset + ',' + r.seed + ',' + num(r.accuracy) + ',' +
             num(r.mean_loss) + '\n';
  return out;
}

std::string AblationReport::to_table() const {
  std::size_t wv = 7, wd = 7;
  for (const auto& r : medians) {
    wv = std::max(wv, r.variant.size());
    wd = std::max(wd, r.dataset.size());
  }
  std::ostringstream os;
  os << std::left << std::setw(wv + 2) << "variant" << std::setw(wd + 2) << "dataset"
     << std::right << std::setw(10) << "accuracy" << std::setw(12) << "mean_loss" << '\n';
  for (const auto& r : medians) {
    os << std::left << std::setw(wv + 2) << r.variant << std::setw(wd + 2) << r.dataset
       << std::right << std::fixed << std::setprecision(4) << std::setw(10) << r.accuracy
       << std::setw(12) << r.mean_loss << '\n';
  }
  return os.str();
}

const AblationRow& AblationReport::median(const std::string& variant,
                                          const std::string& dataset) const {
  for (const auto& r : medians)
    if (r.variant == variant && r.dataset == dataset) return r;
  throw InvalidArgument("no row for " + variant + " on " + dataset);
}

AblationReport ablation_suite(const config::RunConfig& base,
                              const std::vector<model::Variant>& variants,
                              const data::Dataset& train_set,
                              const std::vector<NamedDataset>& datasets,
                              const std::vector<std::uint64_t>& seeds,
                              const std::function<void(const AblationRow&)>& progress) {
  if (seeds.empty()) throw InvalidArgument("ablation needs at least one seed");
  if (variants.empty() || datasets.empty())
    throw InvalidArgument("ablation needs variants and datasets");
  AblationReport report;
  for (const auto& v : variants) {
    for (const auto s : seeds) {
      const std::size_t before = report.runs.size();
      if (base.train.precision == train::Precision::kFloat) {
        run_variant<float>(base, v, s, train_set, datasets, report.runs);
      } else {
        run_variant<double>(base, v, s, train_set, datasets, report.runs);
      }
      if (progress)
        for (std::size_t i = before; i < report.runs.size(); ++i) progress(report.runs[i]);
    }
    for (const auto& [tag, ds] : datasets) {
      std::vector<double> acc, loss;
      for (const auto& r : report.runs) {
        if (r.variant == v.name() && r.dataset == tag) {
          acc.push_back(r.accuracy);
          loss.push_back(r.mean_loss);
        }
      }
      report.medians.push_back({v.name(), tag, "median", median(acc), median(loss)});
    }
  }
  return report;
}

template EvalResult evaluate(model::PcnnModel<float>&, const data::Dataset&, std::size_t);
template EvalResult evaluate(model::PcnnModel<double>&, const data::Dataset&, std::size_t);
template std::vector<RobustnessRow> robustness_report(model::PcnnModel<float>&,
                                                      const data::Dataset&,
                                                      const std::vector<data::AugSpec>&);
template std::vector<RobustnessRow> robustness_report(model::PcnnModel<double>&,
                                                      const data::Dataset&,
                                                      const std::vector<data::AugSpec>&);

}  // namespace pcnn::eval
