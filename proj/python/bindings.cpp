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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "pcnn/checkpoint.hpp"
#include "pcnn/cli.hpp"
#include "pcnn/config.hpp"
#include "pcnn/data.hpp"
#include "pcnn/error.hpp"
#include "pcnn/gradsuite.hpp"
#include "pcnn/kernels.hpp"
#include "pcnn/regions.hpp"
#include "pcnn/train.hpp"

namespace py = pybind11;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

template <typename T>
py::array_t<T> to_numpy(const pcnn::Tensor<T>& t) {
  py::array_t<T> out(t.shape());
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

template <typename T, typename A>
pcnn::Tensor<T> to_tensor(const A& a) {
  pcnn::Shape shape(a.shape(), a.shape() + a.ndim());
  return pcnn::Tensor<T>(std::move(shape), std::vector<T>(a.data(), a.data() + a.size()));
}

// Images are (N, H, W) or (N, 1, H, W), values in [0, 1].
pcnn::Tensor<float> image_batch(const FloatArray& images) {
  if (images.ndim() == 3) {
    return pcnn::Tensor<float>({static_cast<std::size_t>(images.shape(0)), 1,
                                static_cast<std::size_t>(images.shape(1)),
                                static_cast<std::size_t>(images.shape(2))},
                               std::vector<float>(images.data(), images.data() + images.size()));
  }
  if (images.ndim() == 4 && images.shape(1) == 1) return to_tensor<float>(images);
  throw pcnn::InvalidShape("images must be (N, H, W) or (N, 1, H, W)");
}

pcnn::data::Dataset to_dataset(const FloatArray& images, const IntArray& labels) {
  const auto batch = image_batch(images);
  const auto& s = batch.shape();
  if (labels.ndim() != 1 || static_cast<std::size_t>(labels.shape(0)) != s[0])
    throw pcnn::InvalidShape("labels must be a vector with one entry per image");
  pcnn::data::Dataset ds;
  ds.height = s[2];
  ds.width = s[3];
  const std::size_t plane = s[2] * s[3];
  for (std::size_t i = 0; i < s[0]; ++i) {
    const int label = labels.data()[i];
    if (label < 0 || label >= static_cast<int>(pcnn::data::kNumClasses))
      throw pcnn::InvalidLabel("label " + std::to_string(label) + " out of range");
    pcnn::data::Sample sample;
    const auto* p = batch.data().data() + i * plane;
    sample.pixels = pcnn::Tensor<float>({1, s[2], s[3]}, std::vector<float>(p, p + plane));
    sample.label = label;
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

pcnn::config::KeyValues to_kv(const py::dict& overrides) {
  pcnn::config::KeyValues kv;
  for (const auto& [k, v] : overrides) kv[py::str(k)] = py::str(v);
  return kv;
}

pcnn::regions::RegionSet face_set(std::size_t h, std::size_t w, double b1, double b2,
                                  double wsplit) {
  pcnn::regions::RegionSpec spec;
  spec.b1 = b1;
  spec.b2 = b2;
  spec.wsplit = wsplit;
  return pcnn::regions::RegionLayout::face(spec).resolve(h, w);
}

class Model {
 public:
  explicit Model(const py::dict& overrides)
      : config_(pcnn::config::apply(to_kv(overrides))) {
    config_.validate();
    model_ = std::make_unique<pcnn::model::PcnnModel<float>>(config_.model);
  }

  static Model load(const std::filesystem::path& path) {
    auto loaded = pcnn::checkpoint::load_checkpoint<float>(path);
    return Model(std::move(loaded));
  }

  void save(const std::filesystem::path& path) const {
    pcnn::checkpoint::save_checkpoint(*model_, state_, config_, path);
  }

  py::dict config() const {
    py::dict d;
    for (const auto& [k, v] : pcnn::config::to_key_values(config_)) d[py::str(k)] = v;
    return d;
  }

  std::size_t epoch() const { return state_.epoch; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto& p : model_->parameters()) n += pcnn::numel(p.value.shape());
    return n;
  }

  FloatArray logits(const FloatArray& images) {
    return to_numpy(model_->logits(image_batch(images), pcnn::nn::Mode::kEval));
  }

  IntArray predict(const FloatArray& images) {
    const auto ids = pcnn::model::predict(model_->logits(image_batch(images), pcnn::nn::Mode::kEval));
    IntArray out(static_cast<py::ssize_t>(ids.size()));
    std::copy(ids.begin(), ids.end(), out.mutable_data());
    return out;
  }

  double accuracy(const FloatArray& images, const IntArray& labels) {
    return pcnn::train::accuracy(*model_, to_dataset(images, labels));
  }

  // Trains up to the configured epoch count; a second call with a larger
  // "epochs" continues where the last one stopped.
  py::list fit(const FloatArray& images, const IntArray& labels, std::optional<std::size_t> epochs,
               std::optional<FloatArray> eval_images, std::optional<IntArray> eval_labels) {
    if (epochs) config_.train.epochs = *epochs;
    config_.validate();
    const auto train_set = to_dataset(images, labels);
    std::optional<pcnn::data::Dataset> eval_set;
    if (eval_images && eval_labels) eval_set = to_dataset(*eval_images, *eval_labels);
    else if (eval_images || eval_labels)
      throw pcnn::InvalidConfig("eval_images and eval_labels go together");
    pcnn::train::TrainHistory history;
    {
      py::gil_scoped_release release;
      history = pcnn::train::train(*model_, train_set, eval_set ? &*eval_set : nullptr,
                                   config_.train, &state_);
    }
    py::list rows;
    for (const auto& s : history.epochs) {
      py::dict row;
      row["mean_loss"] = s.mean_loss;
      row["mean_ce_global"] = s.mean_ce_global;
      row["mean_ce_local"] = s.mean_ce_local;
      row["train_accuracy"] = s.train_accuracy;
      row["eval_accuracy"] = s.eval_accuracy ? py::cast(*s.eval_accuracy) : py::none();
      rows.append(row);
    }
    return rows;
  }

 private:
  explicit Model(pcnn::checkpoint::Loaded<float> loaded)
      : config_(std::move(loaded.config)),
        model_(std::move(loaded.model)),
        state_(std::move(loaded.state)) {}

  pcnn::config::RunConfig config_;
  std::unique_ptr<pcnn::model::PcnnModel<float>> model_;
  pcnn::train::OptimizerState<float> state_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "PCNN facial expression recognition core";

  auto base = py::register_exception<pcnn::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<pcnn::InvalidConfig>(m, "InvalidConfig", base.ptr());
  py::register_exception<pcnn::InvalidShape>(m, "InvalidShape", base.ptr());
  py::register_exception<pcnn::InvalidLabel>(m, "InvalidLabel", base.ptr());

  m.attr("CLASS_NAMES") = pcnn::data::class_names();

  m.def(
      "resolve_config",
      [](const py::dict& overrides) {
        auto rc = pcnn::config::apply(to_kv(overrides));
        rc.validate();
        py::dict d;
        for (const auto& [k, v] : pcnn::config::to_key_values(rc)) d[py::str(k)] = v;
        return d;
      },
      py::arg("overrides") = py::dict(), "Apply overrides to the defaults and validate.");

  m.def(
      "synthetic_faces",
      [](std::size_t n, std::size_t height, std::size_t width, std::uint64_t seed) {
        const auto ds = pcnn::data::gen_synthetic_faces(n, height, width, seed);
        FloatArray images({n, height, width});
        IntArray labels(static_cast<py::ssize_t>(n));
        for (std::size_t i = 0; i < n; ++i) {
          const auto px = ds.samples[i].pixels.data();
          std::copy(px.begin(), px.end(), images.mutable_data() + i * height * width);
          labels.mutable_data()[i] = ds.samples[i].label;
        }
        return py::make_tuple(images, labels);
      },
      py::arg("n"), py::arg("height") = 32, py::arg("width") = 32, py::arg("seed") = 0,
      "Seeded class-balanced synthetic faces as (images, labels).");

  m.def(
      "face_regions",
      [](std::size_t h, std::size_t w, double b1, double b2, double wsplit) {
        static const char* names[] = {"left_eye", "right_eye", "left_cheek", "right_cheek",
                                      "mouth"};
        py::list out;
        const auto set = face_set(h, w, b1, b2, wsplit);
        for (std::size_t k = 0; k < set.rects.size(); ++k) {
          const auto& r = set.rects[k];
          out.append(py::make_tuple(names[k], r.row_begin, r.row_end, r.col_begin, r.col_end));
        }
        return out;
      },
      py::arg("height"), py::arg("width"), py::arg("b1") = 0.5, py::arg("b2") = 0.65,
      py::arg("wsplit") = 0.5, "Face regions as (name, row_begin, row_end, col_begin, col_end).");

  m.def(
      "region_index_map",
      [](std::size_t h, std::size_t w, double b1, double b2, double wsplit) {
        const auto map = pcnn::regions::region_index_map(face_set(h, w, b1, b2, wsplit));
        IntArray out({h, w});
        std::copy(map.begin(), map.end(), out.mutable_data());
        return out;
      },
      py::arg("height"), py::arg("width"), py::arg("b1") = 0.5, py::arg("b2") = 0.65,
      py::arg("wsplit") = 0.5, "1-based region index of every cell.");

  m.def(
      "grid_sample",
      [](const DoubleArray& input, const DoubleArray& theta) {
        if (input.ndim() != 4) throw pcnn::InvalidShape("input must be (N, C, H, W)");
        const auto x = to_tensor<double>(input);
        const auto grid = pcnn::nn::grid_generate(to_tensor<double>(theta), x.shape()[2], x.shape()[3]);
        return to_numpy(pcnn::nn::grid_sample(x, grid));
      },
      py::arg("input"), py::arg("theta"), "Affine bilinear resampling; theta is (N, 2, 3).");

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        py::list out;
        for (const auto& r : pcnn::gradsuite::run(seed)) {
          py::dict d;
          d["op"] = r.op_name;
          d["max_rel_error"] = r.max_rel_error;
          d["checked"] = r.checked;
          d["passed"] = r.max_rel_error <= pcnn::gradsuite::kTolerance;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 0, "Run the finite-difference gradient suite.");

  m.def(
      "main",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "pcnn");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        py::gil_scoped_release release;
        return pcnn::cli::run(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Run the command-line interface; returns the exit code.");

  py::class_<Model>(m, "Model")
      .def(py::init<const py::dict&>(), py::arg("overrides") = py::dict())
      .def_static("load", &Model::load, py::arg("path"))
      .def("save", &Model::save, py::arg("path"))
      .def_property_readonly("config", &Model::config)
      .def_property_readonly("epoch", &Model::epoch)
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def("logits", &Model::logits, py::arg("images"))
      .def("predict", &Model::predict, py::arg("images"))
      .def("accuracy", &Model::accuracy, py::arg("images"), py::arg("labels"))
      .def("fit", &Model::fit, py::arg("images"), py::arg("labels"), py::arg("epochs") = py::none(),
           py::arg("eval_images") = py::none(), py::arg("eval_labels") = py::none());
}
