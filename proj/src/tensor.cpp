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

#include "pcnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <unordered_set>

#include "pcnn/error.hpp"

namespace pcnn {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw InvalidShape("empty shape");
  for (auto e : shape) {
    if (e == 0) throw InvalidShape("zero extent in " + to_string(shape));
  }
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<Impl>()) {
  validate_shape(shape);
  impl_->data.assign(numel(shape), fill);
  impl_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : impl_(std::make_shared<Impl>()) {
  validate_shape(shape);
  if (data.size() != numel(shape)) {
    throw InvalidShape("shape " + to_string(shape) + " needs " +
                       std::to_string(numel(shape)) + " values, got " +
                       std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw InvalidShape("item() on " + to_string(shape()));
  return impl_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw InvalidShape("index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= impl_->shape[axis]) throw InvalidShape("index out of range");
    flat = flat * impl_->shape[axis] + i;
    ++axis;
  }
  return impl_->data[flat];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  if (!flag) impl_->grad.clear();
  return *this;
}

template <typename T>
std::vector<T>& Tensor<T>::grad_buffer() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::from_op(Shape shape, std::vector<T> data, std::string op,
                             std::vector<Tensor> inputs,
                             std::function<void(std::span<const T>)> backward) {
  Tensor out(std::move(shape), std::move(data));
  if (!g_grad_enabled) return out;
  bool needs = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  out.impl_->requires_grad = true;
  out.impl_->node = std::make_shared<Node<T>>(
      Node<T>{std::move(op), std::move(inputs), std::move(backward)});
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(impl_->shape, impl_->data);
}

template <typename T>
Tensor<T> elementwise(ElementwiseKind kind, const Tensor<T>& a,
                      const Tensor<T>* b) {
  const std::size_t n = a.size();
  if (kind == ElementwiseKind::kRelu) {
    if (b != nullptr) throw InvalidShape("relu is unary");
    std::vector<T> out(n);
    auto x = a.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    Tensor<T> in = a;
    return Tensor<T>::from_op(a.shape(), std::move(out), "relu", {a},
                              [in](std::span<const T> g) mutable {
                                auto x = in.data();
                                auto& gi = in.grad_buffer();
                                for (std::size_t i = 0; i < g.size(); ++i) {
                                  if (x[i] > T(0)) gi[i] += g[i];
                                }
                              });
  }
  if (b == nullptr) throw InvalidShape("binary op needs two operands");
  if (a.shape() != b->shape()) {
    throw InvalidShape("operand shapes " + to_string(a.shape()) + " and " +
                       to_string(b->shape()) + " differ");
  }
  Tensor<T> lhs = a;
  Tensor<T> rhs = *b;
  std::vector<T> out(n);
  auto x = a.data();
  auto y = b->data();
  if (kind == ElementwiseKind::kAdd) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
    return Tensor<T>::from_op(
        a.shape(), std::move(out), "add", {lhs, rhs},
        [lhs, rhs](std::span<const T> g) mutable {
          for (Tensor<T>* t : {&lhs, &rhs}) {
            if (!t->requires_grad()) continue;
            auto& gi = t->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
          }
        });
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
  return Tensor<T>::from_op(
      a.shape(), std::move(out), "mul", {lhs, rhs},
      [lhs, rhs](std::span<const T> g) mutable {
        if (lhs.requires_grad()) {
          auto& gi = lhs.grad_buffer();
          auto y = rhs.data();
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * y[i];
        }
        if (rhs.requires_grad()) {
          auto& gi = rhs.grad_buffer();
          auto x = lhs.data();
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * x[i];
        }
      });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(ElementwiseKind::kAdd, a, &b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(ElementwiseKind::kMul, a, &b);
}
template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return elementwise<T>(ElementwiseKind::kRelu, a, nullptr);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  Tensor<T> in = a;
  return Tensor<T>::from_op(a.shape(), std::move(out), "scale", {a},
                            [in, factor](std::span<const T> g) mutable {
                              auto& gi = in.grad_buffer();
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                gi[i] += factor * g[i];
                              }
                            });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  for (auto v : a.data()) total += v;
  Tensor<T> in = a;
  return Tensor<T>::from_op({1}, {total}, "sum", {a},
                            [in](std::span<const T> g) mutable {
                              auto& gi = in.grad_buffer();
                              for (auto& v : gi) v += g[0];
                            });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw InvalidShape("cannot reshape " + to_string(a.shape()) + " to " +
                       to_string(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  Tensor<T> in = a;
  return Tensor<T>::from_op(std::move(shape), std::move(out), "reshape", {a},
                            [in](std::span<const T> g) mutable {
                              auto& gi = in.grad_buffer();
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                gi[i] += g[i];
                              }
                            });
}

template <typename T>
void backward(const Tensor<T>& loss, bool retain_graph) {
  if (loss.size() != 1) {
    throw NonScalarLoss("loss has shape " + to_string(loss.shape()));
  }
  Tensor<T> root = loss;
  if (root.is_leaf()) {
    if (root.requires_grad()) root.grad_buffer()[0] += T(1);
    return;
  }

  // Iterative post-order DFS; reversed it is a topological order.
  std::vector<Tensor<T>> order;
  std::unordered_set<const void*> visited;
  std::vector<std::pair<Tensor<T>, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.id());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    const auto& node = t.node();
    if (node && next < node->inputs.size()) {
      const Tensor<T>& child = node->inputs[next++];
      if (!child.is_leaf() && visited.insert(child.id()).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(t);
    stack.pop_back();
  }

  for (auto& t : order) t.zero_grad();
  root.grad_buffer()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor<T>& t = *it;
    t.node()->backward(t.grad_buffer());
  }
  if (!retain_graph) {
    for (auto& t : order) t.release_node();
  }
}

GradReport grad_check(std::string op_name, const ForwardFn& forward,
                      std::vector<Tensor<double>> inputs,
                      const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw InvalidArgument("eps must be positive");
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  Tensor<double> first = forward(inputs);
  Tensor<double> second = forward(inputs);
  if (first.size() != 1 || second.size() != 1) {
    throw NonScalarLoss(op_name + " forward is not scalar");
  }
  if (first.item() != second.item()) {
    throw NonDeterministic(op_name + " baseline evaluations differ");
  }
  backward(second);
  first.release_node();

  GradReport report;
  report.op_name = std::move(op_name);
  std::mt19937_64 rng(options.seed);
  std::size_t offset = 0;
  NoGradGuard no_grad;
  for (auto& x : inputs) {
    const std::vector<double> analytic = x.has_grad()
        ? std::vector<double>(x.grad().begin(), x.grad().end())
        : std::vector<double>(x.size(), 0.0);
    std::vector<std::size_t> coords(x.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (options.max_coords_per_input > 0 &&
        options.max_coords_per_input < coords.size()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    auto values = x.mutable_data();
    for (auto i : coords) {
      const double saved = values[i];
      auto central = [&](double h) {
        values[i] = saved + h;
        const double up = forward(inputs).item();
        values[i] = saved - h;
        const double down = forward(inputs).item();
        values[i] = saved;
        return (up - down) / (2.0 * h);
      };
      double numeric = central(options.eps);
      if (options.step_search) {
        // Steps 100e .. e/100. Each adjacent pair is scored by its
        // disagreement plus the rounding noise of the smaller step; the
        // larger step of the best pair wins.
        const double f0 = std::abs(second.item());
        double h[5], d[5];
        for (int k = 0; k < 5; ++k) {
          h[k] = options.eps * std::pow(10.0, 2 - k);
          d[k] = k == 2 ? numeric : central(h[k]);
        }
        auto score = [&](int k) {
          return std::abs(d[k] - d[k + 1]) + f0 * 1e-15 / h[k + 1];
        };
        int best = 0;
        for (int k = 1; k < 4; ++k)
          if (score(k) < score(best)) best = k;
        numeric = d[best];
      }
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_index = offset + i;
      }
      ++report.checked;
    }
    offset += x.size();
  }
  return report;
}

#define PCNN_INSTANTIATE(T)                                                  \
  template class Tensor<T>;                                                  \
  template Tensor<T> elementwise(ElementwiseKind, const Tensor<T>&,          \
                                 const Tensor<T>*);                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> relu(const Tensor<T>&);                                 \
  template Tensor<T> scale(const Tensor<T>&, T);                             \
  template Tensor<T> sum(const Tensor<T>&);                                  \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                       \
  template void backward(const Tensor<T>&, bool);

PCNN_INSTANTIATE(float)
PCNN_INSTANTIATE(double)

#undef PCNN_INSTANTIATE

}  // namespace pcnn
