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


#ifndef PCNN_TRAIN_HPP_
#define PCNN_TRAIN_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcnn/data.hpp"
#include "pcnn/model.hpp"

namespace pcnn::train {

enum class Precision { kFloat, kDouble };
std::string to_string(Precision p);
Precision parse_precision(const std::string& text);

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  double alpha = 12.0;
  double beta = 8.0;
  std::uint64_t seed = 0;
  Precision precision = Precision::kFloat;
  // Step-size multiplier for the registration network parameters.
  double locnet_lr_scale = 0.01;
  // Rescales the batch gradient when the norm of the lr-scaled update
  // direction exceeds this value; 0 disables clipping.
  double clip_norm = 5.0;

  void validate() const;
};

// g' = grad + weight_decay * param; velocity = momentum * velocity + g';
// param -= lr * velocity.
template <typename T>
void sgd_momentum_step(std::span<T> param, std::span<const T> grad,
                       std::span<T> velocity, double lr, double momentum,
                       double weight_decay);

template <typename T>
struct OptimizerState {
  std::vector<std::vector<T>> velocity;  // parameter order of the model
  std::size_t epoch = 0;                 // epochs completed
};

struct EpochStats {
  double mean_loss = 0.0;
  double mean_ce_global = 0.0;
  double mean_ce_local = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> eval_accuracy;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  // epoch,mean_loss,mean_ce_global,mean_ce_local,train_accuracy,eval_accuracy
  std::string to_csv() const;
};

template <typename T>
using EpochCallback = std::function<void(std::size_t epoch, const EpochStats&,
                                         const OptimizerState<T>&)>;

// Runs epochs state.epoch .. config.epochs - 1. A default state starts from
// scratch; a restored one resumes.
template <typename T>
TrainHistory train(model::PcnnModel<T>& model, const data::Dataset& train_set,
                   const data::Dataset* eval_set, const TrainConfig& config,
                   OptimizerState<T>* state = nullptr,
                   const EpochCallback<T>& on_epoch = {});

// Eval-mode accuracy of the global head.
template <typename T>
double accuracy(model::PcnnModel<T>& model, const data::Dataset& dataset,
                std::size_t batch_size = 64);

}  // namespace pcnn::train

#endif  // PCNN_TRAIN_HPP_
