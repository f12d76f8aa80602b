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

#ifndef PCNN_TENSOR_HPP_
#define PCNN_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pcnn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
class Tensor;

// One recorded operation. `backward` receives dLoss/dOutput and adds the
// contribution of that gradient into every input that requires grad.
template <typename T>
struct Node {
  std::string op;
  std::vector<Tensor<T>> inputs;
  std::function<void(std::span<const T>)> backward;
};

// Dense row-major array with an optional gradient and an optional link to
// the operation that produced it. Copies are shallow: two Tensor values may
// share one storage, the way a graph edge does.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, T fill);
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  // Mutation is reserved for optimizers, perturbation in gradient checks and
  // construction helpers; graph ops treat their inputs as immutable.
  std::span<T> mutable_data() { return impl_->data; }
  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  // Gradient storage, allocated zero-filled on first access.
  std::vector<T>& grad_buffer();
  void zero_grad();

  const std::shared_ptr<Node<T>>& node() const { return impl_->node; }
  bool is_leaf() const { return impl_->node == nullptr; }
  void release_node() { impl_->node.reset(); }

  // Identity of the underlying storage.
  const void* id() const { return impl_.get(); }

  // Wraps freshly computed values as the output of `op`. The node is only
  // recorded when some input requires grad and grad mode is enabled.
  static Tensor from_op(Shape shape, std::vector<T> data, std::string op,
                        std::vector<Tensor> inputs,
                        std::function<void(std::span<const T>)> backward);

  // Deep copy of the values, detached from any graph.
  Tensor detach() const;

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    std::shared_ptr<Node<T>> node;
  };
  std::shared_ptr<Impl> impl_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled();

 private:
  bool previous_;
};

enum class ElementwiseKind { kAdd, kMul, kRelu };

template <typename T>
Tensor<T> elementwise(ElementwiseKind kind, const Tensor<T>& a,
                      const Tensor<T>* b = nullptr);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);

// Multiplication by a constant.
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

// Sum of every element, shape [1].
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

// Same values under a new shape of equal element count.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

// Fills dLoss/dTensor for every reachable tensor requiring grad. Leaf
// gradients accumulate across calls; intermediate gradients are reset at the
// start of each call. The graph is released unless `retain_graph` is set.
template <typename T>
void backward(const Tensor<T>& loss, bool retain_graph = false);

struct GradReport {
  std::string op_name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;  // flat index over the concatenated inputs
  std::size_t checked = 0;      // coordinates compared
};

struct GradCheckOptions {
  double eps = 1e-6;
  // 0 checks every coordinate; otherwise a seeded sample of this many
  // coordinates per input.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
  // Estimate each coordinate from a ladder of steps around eps instead of
  // eps alone. The choice never looks at the analytic gradient.
  bool step_search = true;
};

using ForwardFn =
    std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// Central-difference gradient check of a scalar-valued `forward`.
GradReport grad_check(std::string op_name, const ForwardFn& forward,
                      std::vector<Tensor<double>> inputs,
                      const GradCheckOptions& options = {});

}  // namespace pcnn

#endif  // PCNN_TENSOR_HPP_
