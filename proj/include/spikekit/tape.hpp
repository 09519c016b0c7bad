#pragma once

// Minimal reverse-mode autodiff over DenseArray.
//
// A Tape records nodes in creation order, which is a topological order of the
// graph; backward() walks it once in reverse. Nodes are immutable after they
// are recorded. A tape belongs to one thread.

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "spikekit/tensor.hpp"

namespace spikekit {

enum class OpKind {
  leaf,
  matmul,
  add,
  sub,
  mul,
  scale,
  clamp,
  round,
  heaviside,
  surrogate_step,
  quantize,
  sigmoid,
  sum,
  mean0,
  reshape,
  slice0,
  stack0,
  detach,
  cross_entropy,
  custom,
};

std::string_view op_name(OpKind kind);

struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const noexcept { return id != kNone; }
};

/// Gradients produced by one backward pass, indexed by node.
class Gradients {
 public:
  explicit Gradients(std::vector<std::optional<DenseArray>> grads) : grads_(std::move(grads)) {}
  bool has(Var v) const { return v.id < grads_.size() && grads_[v.id].has_value(); }
  /// Gradient of `v`; throws ContractError if none reached it.
  const DenseArray& of(Var v) const;

 private:
  std::vector<std::optional<DenseArray>> grads_;
};

class Tape {
 public:
  /// Receives the tape (for saved input/output values) and d(loss)/d(node output);
  /// returns one entry per input (nullopt = no grad).
  using BackwardFn = std::function<std::vector<std::optional<DenseArray>>(const Tape&,
                                                                          const DenseArray&)>;

  Var leaf(DenseArray value, bool requires_grad = false);
  Var constant(DenseArray value) { return leaf(std::move(value), false); }

  const DenseArray& value(Var v) const;
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const;
  OpKind kind(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// [M×K]·[K×P]. With `transpose_b`, b is [P×K] and the product is a·bᵀ.
  Var matmul(Var a, Var b, bool transpose_b = false);
  /// Same shape, or either side a scalar.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  /// Gradient passes where lo <= x <= hi.
  Var clamp(Var a, double lo, double hi);
  /// Forward-only primitives: the true derivative is zero almost everywhere.
  Var round_half_even(Var a);
  Var heaviside(Var a);
  /// Heaviside forward with rectangular surrogate 1{|v| <= half_width} backward.
  Var surrogate_step(Var v, double half_width);
  Var sigmoid(Var a);
  Var sum(Var a);
  /// Mean over axis 0: [T × rest...] -> [rest...].
  Var mean0(Var a);
  Var reshape(Var a, Shape shape);
  Var slice0(Var a, std::size_t index);
  Var stack0(std::span<const Var> parts);
  /// Same value, no gradient flows back.
  Var detach(Var a);
  /// Mean softmax cross-entropy of logits [B×C] against integer labels.
  Var cross_entropy(Var logits, std::span<const int> labels);

  /// Records a node with a caller-supplied backward rule (quantizers, surrogates).
  Var record(OpKind kind, std::vector<Var> inputs, DenseArray value, BackwardFn backward);

  /// Reverse pass from a scalar node.
  Gradients backward(Var loss) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<Var> inputs;
    DenseArray value;
    bool requires_grad;
    BackwardFn backward;
  };
  const Node& node(Var v) const;
  Var push(OpKind kind, std::vector<Var> inputs, DenseArray value, BackwardFn backward);
  Var binary(OpKind kind, Var a, Var b);

  std::vector<Node> nodes_;
};

}  // namespace spikekit
