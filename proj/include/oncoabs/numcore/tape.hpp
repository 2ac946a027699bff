#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "oncoabs/common/error.hpp"
#include "oncoabs/numcore/tensor.hpp"

namespace oncoabs::num {

/// A trainable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Named parameters in insertion order. Element addresses are stable, so a
/// tape may refer to parameters by pointer for the lifetime of a forward pass.
template <typename T>
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor<T> value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    Tensor<T> grad(value.rows(), value.cols());
    index_.emplace(name, params_.size());
    params_.push_back({std::move(name), std::move(value), std::move(grad)});
    return params_.size() - 1;
  }

  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }

  Parameter<T>& at(std::string_view name) { return params_[index_of(name)]; }
  const Parameter<T>& at(std::string_view name) const { return params_[index_of(name)]; }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
    return it->second;
  }

  std::size_t size() const noexcept { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T{0});
  }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
class Tape;

/// Handle to a node on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, which is a
/// topological order, so backward is a single reverse sweep.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  /// With `grad_enabled` false, parameters bind as constants and no backward
  /// closures are kept; used for inference.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> v) { return push(std::move(v), false, {}, nullptr); }

  /// A differentiable input whose gradient can be read back after backward.
  Var<T> leaf(Tensor<T> v) { return push(std::move(v), true, {}, nullptr); }

  /// Binds a parameter; repeated binds of the same parameter share one node.
  Var<T> param(Parameter<T>& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return {this, it->second};
    Node n;
    n.param = &p;
    n.requires_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    bound_.emplace(&p, nodes_.size() - 1);
    return {this, nodes_.size() - 1};
  }

  /// Read-only bind for inference tapes.
  Var<T> param(const Parameter<T>& p) {
    if (grad_enabled_) throw std::logic_error("const parameter bound on a gradient tape");
    return param(const_cast<Parameter<T>&>(p));  // never written: no gradient flows on this tape
  }

  /// Records an op result. `inputs` decides whether the result needs a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<std::size_t> inputs, BackwardFn fn) {
    bool needs = false;
    for (auto i : inputs) needs = needs || nodes_[i].requires_grad;
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{}, nullptr);
  }
  Var<T> record(Tensor<T> value, const std::vector<std::size_t>& inputs, BackwardFn fn) {
    bool needs = false;
    for (auto i : inputs) needs = needs || nodes_[i].requires_grad;
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{}, nullptr);
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param ? n.param->value : n.value;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient accumulator for a node, allocated as zeros on first use.
  /// Parameter nodes accumulate straight into the parameter's grad.
  Tensor<T>& grad(std::size_t id) {
    Node& n = nodes_[id];
    n.grad_live = true;
    if (n.param) return n.param->grad;
    if (n.grad.size() != n.value.size() || !n.grad.same_shape(n.value))
      n.grad = Tensor<T>(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Gradient of a leaf after backward; zeros if the node was unreachable.
  Tensor<T> gradient_of(Var<T> v) const {
    const Node& n = nodes_[v.id];
    if (n.param) return n.param->grad;
    if (!n.grad_live) return Tensor<T>(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void backward(Var<T> loss) {
    const Tensor<T>& lv = value(loss.id);
    if (lv.size() != 1)
      throw DimensionError("backward requires a scalar loss, got shape " + lv.shape_string());
    if (!nodes_[loss.id].requires_grad) return;
    grad(loss.id)[0] += T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.grad_live || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool grad_enabled() const noexcept { return grad_enabled_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    bool grad_live = false;
  };

  Var<T> push(Tensor<T> v, bool requires_grad, BackwardFn fn, Parameter<T>* param) {
#ifndef NDEBUG
    if (!v.all_finite()) throw std::runtime_error("non-finite value produced on tape");
#endif
    Node n;
    n.value = std::move(v);
    n.backward = std::move(fn);
    n.param = param;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  bool grad_enabled_ = true;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> bound_;
};

}  // namespace oncoabs::num
