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


#ifndef PCNN_EVALUATION_HPP_
#define PCNN_EVALUATION_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pcnn/config.hpp"
#include "pcnn/data.hpp"
#include "pcnn/model.hpp"
#include "pcnn/pgm.hpp"

namespace pcnn::eval {

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, data::kNumClasses>, data::kNumClasses> counts{};

  static ConfusionMatrix from(std::span<const int> labels, std::span<const int> predicted);
  std::size_t total() const;
  std::size_t trace() const;
  double accuracy() const;
  // Recall per true class; NaN for classes without samples.
  std::array<double, data::kNumClasses> per_class_accuracy() const;

  std::string to_csv() const;
  // Row-normalized counts, `cell` pixels per entry.
  pgm::Image heatmap(std::size_t cell = 16) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  ConfusionMatrix confusion;
};

// Eval-mode prediction from the global head.
template <typename T>
EvalResult evaluate(model::PcnnModel<T>& model, const data::Dataset& dataset,
                    std::size_t batch_size = 64);

struct RobustnessRow {
  std::string spec;
  double accuracy = 0.0;
};

template <typename T>
std::vector<RobustnessRow> robustness_report(model::PcnnModel<T>& model,
                                             const data::Dataset& base,
                                             const std::vector<data::AugSpec>& specs);

// Every sample gets its own seeded rotation/shear, and half of them a random
// occlusion block.
struct PerturbationRange {
  double max_rotation_degrees = 20.0;
  double max_shear = 0.15;
  double occlusion_probability = 0.5;
  double min_occlusion = 0.05;
  double max_occlusion = 0.15;
};

data::Dataset pose_occlusion_set(const data::Dataset& base, std::uint64_t seed,
                                 const PerturbationRange& range = {});

struct AblationRow {
  std::string variant;
  std::string dataset;
  std::string seed;  // a number, or "median"
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> runs;
  std::vector<AblationRow> medians;  // one per (variant, dataset)

  // variant,dataset,seed,accuracy,mean_loss with per-seed rows then medians.
  std::string to_csv() const;
  std::string to_table() const;
  const AblationRow& median(const std::string& variant, const std::string& dataset) const;
};

using NamedDataset = std::pair<std::string, data::Dataset>;

// Sum-20 alpha/beta pairs.
std::vector<model::Variant> alpha_beta_grid();

double median(std::vector<double> values);

// Trains every variant once per seed on `train_set` and evaluates it on each
// named dataset. Model and shuffle seeds are the run seed.
AblationReport ablation_suite(const config::RunConfig& base,
                              const std::vector<model::Variant>& variants,
                              const data::Dataset& train_set,
                              const std::vector<NamedDataset>& datasets,
                              const std::vector<std::uint64_t>& seeds,
                              const std::function<void(const AblationRow&)>& progress = {});

}  // namespace pcnn::eval

#endif  // PCNN_EVALUATION_HPP_
