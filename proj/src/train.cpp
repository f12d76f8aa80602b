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


#include "pcnn/train.hpp"

#include <cmath>
#include <sstream>

#include "pcnn/error.hpp"

namespace pcnn::train {

std::string to_string(Precision p) {
  return p == Precision::kFloat ? "float" : "double";
}

Precision parse_precision(const std::string& text) {
  if (text == "float" || text == "f32") return Precision::kFloat;
  if (text == "double" || text == "f64") return Precision::kDouble;
  throw InvalidConfig("unknown precision '" + text + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidConfig("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw InvalidConfig("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw InvalidConfig("weight_decay must be >= 0");
  if (batch_size == 0) throw InvalidConfig("batch_size must be >= 1");
  if (epochs == 0) throw InvalidConfig("epochs must be >= 1");
  if (!(alpha >= 0.0) || !(beta >= 0.0))
    throw InvalidConfig("alpha and beta must be >= 0");
  if (!(locnet_lr_scale > 0.0)) throw InvalidConfig("locnet_lr_scale must be > 0");
  if (!(clip_norm >= 0.0)) throw InvalidConfig("clip_norm must be >= 0");
}

template <typename T>
void sgd_momentum_step(std::span<T> param, std::span<const T> grad,
                       std::span<T> velocity, double lr, double momentum,
                       double weight_decay) {
  if (param.size() != grad.size() || param.size() != velocity.size()) {
    throw InvalidShape("sgd step: param " + std::to_string(param.size()) +
                       ", grad " + std::to_string(grad.size()) + ", velocity " +
                       std::to_string(velocity.size()));
  }
  const T a = static_cast<T>(lr);
  const T m = static_cast<T>(momentum);
  const T wd = static_cast<T>(weight_decay);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i] + wd * param[i];
    velocity[i] = m * velocity[i] + g;
    param[i] -= a * velocity[i];
  }
}

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,mean_loss,mean_ce_global,mean_ce_local,train_accuracy,eval_accuracy\n";
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    const auto& s = epochs[e];
    os << e + 1 << ',' << s.mean_loss << ',' << s.mean_ce_global << ','
       << s.mean_ce_local << ',' << s.train_accuracy << ',';
    if (s.eval_accuracy) os << *s.eval_accuracy;
    os << '\n';
  }
  return os.str();
}

template <typename T>
double accuracy(model::PcnnModel<T>& model, const data::Dataset& dataset,
                std::size_t batch_size) {
  if (dataset.empty()) throw EmptyDataset("accuracy on an empty dataset");
  std::size_t correct = 0;
  data::Batch batch;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    batch.clear();
    for (std::size_t i = start; i < std::min(dataset.size(), start + batch_size); ++i)
      batch.push_back(i);
    const auto pred = model::predict(
        model.logits(data::batch_images<T>(dataset, batch), nn::Mode::kEval));
    for (std::size_t k = 0; k < batch.size(); ++k)
      correct += pred[k] == dataset.samples[batch[k]].label;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

template <typename T>
TrainHistory train(model::PcnnModel<T>& model, const data::Dataset& train_set,
                   const data::Dataset* eval_set, const TrainConfig& config,
                   OptimizerState<T>* state, const EpochCallback<T>& on_epoch) {
  config.validate();
  if (model.config().alpha != config.alpha || model.config().beta != config.beta) {
    throw InvalidConfig("model alpha/beta differ from the training config");
  }
  if (train_set.empty()) throw EmptyDataset("training set is empty");

  OptimizerState<T> local;
  OptimizerState<T>& st = state ? *state : local;
  auto params = model.parameters();
  if (st.velocity.empty()) {
    for (const auto& p : params) st.velocity.emplace_back(p.value.size(), T(0));
  }
  if (st.velocity.size() != params.size()) {
    throw InvalidShape("optimizer state has " + std::to_string(st.velocity.size()) +
                       " velocity arrays for " + std::to_string(params.size()) +
                       " parameters");
  }
  std::vector<double> lr(params.size(), config.lr);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].name.rfind("locnet.", 0) == 0) lr[k] *= config.locnet_lr_scale;
  }

  TrainHistory history;
  std::vector<T> scratch;
  for (std::size_t epoch = st.epoch; epoch < config.epochs; ++epoch) {
    const auto batches = data::make_batches(train_set, config.batch_size,
                                            config.seed + epoch);
    EpochStats stats;
    std::size_t seen = 0, correct = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto images = data::batch_images<T>(train_set, batches[b]);
      const auto labels = data::batch_labels(train_set, batches[b]);
      auto r = model.forward(images, labels, nn::Mode::kTrain);
      const double loss = static_cast<double>(r.loss.item());
      if (!std::isfinite(loss)) throw DivergenceDetected(epoch, b);
      backward(r.loss);
      double factor = 1.0;
      if (config.clip_norm > 0.0) {
        double sq = 0.0;
        for (std::size_t k = 0; k < params.size(); ++k) {
          const double s = lr[k] / config.lr;
          for (const T v : params[k].value.grad()) sq += s * s * double(v) * double(v);
        }
        const double norm = std::sqrt(sq);
        if (!std::isfinite(norm)) throw DivergenceDetected(epoch, b);
        if (norm > config.clip_norm) factor = config.clip_norm / norm;
      }
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        std::span<const T> g = p.value.grad();
        if (!p.value.has_grad()) {
          scratch.assign(p.value.size(), T(0));
          g = scratch;
        } else if (factor != 1.0) {
          scratch.assign(g.begin(), g.end());
          for (auto& v : scratch) v *= static_cast<T>(factor);
          g = scratch;
        }
        sgd_momentum_step<T>(p.value.mutable_data(), g, st.velocity[k], lr[k],
                             config.momentum, p.decay ? config.weight_decay : 0.0);
      }
      model.zero_grad();

      const double n = static_cast<double>(labels.size());
      stats.mean_loss += loss * n;
      stats.mean_ce_global += r.ce_global * n;
      stats.mean_ce_local += r.ce_local * n;
      const auto pred = model::predict(r.global_logits);
      for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
      seen += labels.size();
    }
    const double total = static_cast<double>(seen);
    stats.mean_loss /= total;
    stats.mean_ce_global /= total;
    stats.mean_ce_local /= total;
    stats.train_accuracy = static_cast<double>(correct) / total;
    if (eval_set && !eval_set->empty()) stats.eval_accuracy = accuracy(model, *eval_set);
    history.epochs.push_back(stats);
    st.epoch = epoch + 1;
    if (on_epoch) on_epoch(epoch, stats, st);
  }
  return history;
}

template void sgd_momentum_step<float>(std::span<float>, std::span<const float>,
                                       std::span<float>, double, double, double);
template void sgd_momentum_step<double>(std::span<double>, std::span<const double>,
                                        std::span<double>, double, double, double);
template double accuracy(model::PcnnModel<float>&, const data::Dataset&, std::size_t);
template double accuracy(model::PcnnModel<double>&, const data::Dataset&, std::size_t);
template TrainHistory train(model::PcnnModel<float>&, const data::Dataset&,
                            const data::Dataset*, const TrainConfig&,
                            OptimizerState<float>*, const EpochCallback<float>&);
template TrainHistory train(model::PcnnModel<double>&, const data::Dataset&,
                            const data::Dataset*, const TrainConfig&,
                            OptimizerState<double>*, const EpochCallback<double>&);

}  // namespace pcnn::train
