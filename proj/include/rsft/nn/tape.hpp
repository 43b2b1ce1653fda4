#ifndef RSFT_NN_TAPE_HPP_
#define RSFT_NN_TAPE_HPP_

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "rsft/nn/tensor.hpp"

namespace rsft::nn {

/// A named weight with its gradient accumulator. Non-trainable entries hold
/// state such as batch-norm running statistics.
struct Parameter {
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

/// Named parameters. Entries live in a node-based map, so references handed
/// out by add() stay valid for the lifetime of the set, including moves.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Shape shape, bool trainable = true) {
    Tensor value(shape);
    Tensor grad(std::move(shape));
    auto [it, inserted] = params_.emplace(name, Parameter{std::move(value), std::move(grad), trainable});
    if (!inserted) {
      throw std::invalid_argument("[rsft::nn::ParameterSet::add] error: duplicate parameter '" +
                                  name + "'");
    }
    return it->second;
  }

  Parameter& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) {
      throw std::out_of_range("[rsft::nn::ParameterSet::at] error: unknown parameter '" + name + "'");
    }
    return it->second;
  }
  const Parameter& at(const std::string& name) const {
    return const_cast<ParameterSet*>(this)->at(name);
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  void zero_grad() {
    for (auto& [name, p] : params_) p.grad.fill(0.0);
  }

  // Number of trainable scalars.
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) {
      if (p.trainable) n += p.value.size();
    }
    return n;
  }

  std::size_t entries() const { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::map<std::string, Tensor> snapshot() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, p] : params_) out.emplace(name, p.value);
    return out;
  }

  // Loads every entry of this set from `values` (keys prefixed by `prefix`).
  void restore(const std::map<std::string, Tensor>& values, const std::string& prefix = {}) {
    for (auto& [name, p] : params_) {
      auto it = values.find(prefix + name);
      if (it == values.end()) {
        throw std::invalid_argument("[rsft::nn::ParameterSet::restore] error: missing '" +
                                    prefix + name + "'");
      }
      if (it->second.shape() != p.value.shape()) {
        throw std::invalid_argument("[rsft::nn::ParameterSet::restore] error: shape mismatch for '" +
                                    prefix + name + "': " + shape_string(it->second.shape()) +
                                    " vs " + shape_string(p.value.shape()));
      }
      p.value = it->second;
    }
  }

 private:
  std::map<std::string, Parameter> params_;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  int dim(int axis) const { return value().dim(axis); }
  bool requires_grad() const;
  const Tensor& grad() const;

  Tape& tape() const {
    if (!tape_) throw std::logic_error("[rsft::nn::Var] error: empty handle");
    return *tape_;
  }
  int id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Records executed operations so that backward() can replay them in exact
/// reverse order. Parameters are referenced, not copied; their gradients
/// accumulate straight into Parameter::grad.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Tensor value) { return push(std::move(value), false, {}); }

  // Leaf that receives a gradient (used for gradient checks w.r.t. inputs).
  Var variable(Tensor value) { return push(std::move(value), grad_enabled_, {}); }

  Var parameter(Parameter& p) {
    if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var(this, it->second);
    Node node;
    node.external = &p.value;
    node.external_grad = &p.grad;
    node.requires_grad = grad_enabled_ && p.trainable;
    nodes_.push_back(std::move(node));
    int id = static_cast<int>(nodes_.size()) - 1;
    param_ids_.emplace(&p, id);
    return Var(this, id);
  }

  // Used by operations. `fn` is dropped when no gradient is required.
  Var record(Tensor value, bool requires_grad, BackwardFn fn) {
    requires_grad = requires_grad && grad_enabled_;
    return push(std::move(value), requires_grad, requires_grad ? std::move(fn) : BackwardFn{});
  }

  const Tensor& value(int id) const {
    const auto& n = nodes_.at(id);
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(int id) const { return nodes_.at(id).requires_grad; }

  bool has_grad(int id) const {
    const auto& n = nodes_.at(id);
    return n.external_grad ? true : !n.grad.empty();
  }

  // Gradient accumulator of node `id`, allocated as zeros on first access.
  Tensor& grad(int id) {
    auto& n = nodes_.at(id);
    if (n.external_grad) return *n.external_grad;
    if (n.grad.empty()) n.grad = Tensor(value(id).shape());
    return n.grad;
  }

  void backward(Var loss) {
    if (loss.tape_ != this) throw std::logic_error("[rsft::nn::Tape::backward] error: foreign Var");
    if (value(loss.id_).size() != 1) {
      throw std::logic_error("[rsft::nn::Tape::backward] error: loss must be a scalar");
    }
    if (!requires_grad(loss.id_)) return;
    grad(loss.id_)[0] += 1.0;
    for (int i = loss.id_; i >= 0; --i) {
      auto& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, i);
    }
  }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    Tensor* external_grad = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, BackwardFn fn) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_ids_;
};

inline const Tensor& Var::value() const { return tape().value(id_); }
inline bool Var::requires_grad() const { return tape().requires_grad(id_); }
inline const Tensor& Var::grad() const { return tape().grad(id_); }

}  // namespace rsft::nn

#endif  // RSFT_NN_TAPE_HPP_
