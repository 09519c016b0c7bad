#include "spikekit/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spikekit/errors.hpp"
#include "spikekit/kernels.hpp"

namespace spikekit {
namespace k = kernels::parallel;

namespace {

std::vector<double> buffer(std::size_t n) { return std::vector<double>(n); }

DenseArray checked(Shape shape, std::vector<double> data, OpKind kind) {
  auto out = DenseArray::unchecked(std::move(shape), std::move(data));
  if (!out.all_finite()) {
    throw NonFiniteError(std::string("non-finite output from op '") + std::string(op_name(kind)) +
                         "'");
  }
  return out;
}

DenseArray sum_all(const DenseArray& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return DenseArray::scalar(s);
}

DenseArray ewise(kernels::Binary op, const DenseArray& a, const DenseArray& b) {
  auto out = buffer(a.numel());
  k::binary(op, a.data(), b.data(), out);
  return DenseArray::unchecked(a.shape(), std::move(out));
}

DenseArray scaled(const DenseArray& a, double factor) {
  auto out = buffer(a.numel());
  k::scale(a.data(), factor, out);
  return DenseArray::unchecked(a.shape(), std::move(out));
}

DenseArray broadcast_to(const DenseArray& scalar, const Shape& shape) {
  return DenseArray::full(shape, scalar.item());
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::clamp: return "clamp";
    case OpKind::round: return "round";
    case OpKind::heaviside: return "heaviside";
    case OpKind::surrogate_step: return "surrogate_step";
    case OpKind::quantize: return "quantize";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::sum: return "sum";
    case OpKind::mean0: return "mean0";
    case OpKind::reshape: return "reshape";
    case OpKind::slice0: return "slice0";
    case OpKind::stack0: return "stack0";
    case OpKind::detach: return "detach";
    case OpKind::cross_entropy: return "cross_entropy";
    case OpKind::custom: return "custom";
  }
  return "?";
}

const DenseArray& Gradients::of(Var v) const {
  if (!has(v)) throw ContractError("no gradient reached node " + std::to_string(v.id));
  return *grads_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
  return nodes_[v.id];
}

const DenseArray& Tape::value(Var v) const { return node(v).value; }
bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }
OpKind Tape::kind(Var v) const { return node(v).kind; }

Var Tape::push(OpKind kind, std::vector<Var> inputs, DenseArray value, BackwardFn backward) {
  bool rg = false;
  for (Var in : inputs) rg = rg || node(in).requires_grad;
  if (!value.all_finite()) {
    throw NonFiniteError(std::string("non-finite output from op '") + std::string(op_name(kind)) +
                         "'");
  }
  nodes_.push_back(Node{kind, std::move(inputs), std::move(value), rg,
                        rg ? std::move(backward) : BackwardFn{}});
  return Var{nodes_.size() - 1};
}

Var Tape::leaf(DenseArray value, bool requires_grad) {
  nodes_.push_back(Node{OpKind::leaf, {}, std::move(value), requires_grad, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::record(OpKind kind, std::vector<Var> inputs, DenseArray value, BackwardFn backward) {
  if (!backward) throw ContractError("record() needs a backward rule");
  return push(kind, std::move(inputs), std::move(value), std::move(backward));
}

Var Tape::matmul(Var a, Var b, bool transpose_b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.rank() != 2 || bv.rank() != 2) throw DimensionError("matmul needs rank-2 operands");
  const std::size_t m = av.dim(0), kk = av.dim(1);
  const std::size_t bk = transpose_b ? bv.dim(1) : bv.dim(0);
  const std::size_t p = transpose_b ? bv.dim(0) : bv.dim(1);
  if (kk != bk) {
    throw DimensionError("matmul inner dimensions differ: " + shape_str(av.shape()) + " · " +
                         shape_str(bv.shape()) + (transpose_b ? "ᵀ" : ""));
  }
  auto out = buffer(m * p);
  k::gemm(false, transpose_b, m, p, kk, av.data(), bv.data(), out);
  return push(OpKind::matmul, {a, b}, checked({m, p}, std::move(out), OpKind::matmul),
              [a, b, m, p, kk, transpose_b](const Tape& t, const DenseArray& g)
                  -> std::vector<std::optional<DenseArray>> {
                std::vector<std::optional<DenseArray>> res(2);
                const auto& A = t.value(a);
                const auto& B = t.value(b);
                if (t.requires_grad(a)) {
                  // dA = g · op(B)ᵀ
                  auto ga = buffer(m * kk);
                  k::gemm(false, !transpose_b, m, kk, p, g.data(), B.data(), ga);
                  res[0] = DenseArray::unchecked({m, kk}, std::move(ga));
                }
                if (t.requires_grad(b)) {
                  if (!transpose_b) {
                    // dB = Aᵀ · g
                    auto gb = buffer(kk * p);
                    k::gemm(true, false, kk, p, m, A.data(), g.data(), gb);
                    res[1] = DenseArray::unchecked({kk, p}, std::move(gb));
                  } else {
                    // B is [p×k]: dB = gᵀ · A
                    auto gb = buffer(p * kk);
                    k::gemm(true, false, p, kk, m, g.data(), A.data(), gb);
                    res[1] = DenseArray::unchecked({p, kk}, std::move(gb));
                  }
                }
                return res;
              });
}

Var Tape::binary(OpKind kind, Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  const auto op = kind == OpKind::add   ? kernels::Binary::add
                  : kind == OpKind::sub ? kernels::Binary::sub
                                        : kernels::Binary::mul;
  DenseArray out;
  if (av.shape() == bv.shape()) {
    out = ewise(op, av, bv);
  } else if (bv.is_scalar() && (!av.is_scalar() || av.shape().size() >= bv.shape().size())) {
    out = ewise(op, av, broadcast_to(bv, av.shape()));
  } else if (av.is_scalar()) {
    out = ewise(op, broadcast_to(av, bv.shape()), bv);
  } else {
    throw DimensionError(std::string(op_name(kind)) + ": incompatible shapes " +
                         shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  }
  if (!out.all_finite()) throw NonFiniteError(std::string("non-finite output from ") +
                                              std::string(op_name(kind)));
  return push(kind, {a, b}, std::move(out),
              [a, b, kind](const Tape& t, const DenseArray& g)
                  -> std::vector<std::optional<DenseArray>> {
                const auto& A = t.value(a);
                const auto& B = t.value(b);
                // Reduce a full-size gradient onto an operand that may have been broadcast.
                auto fit = [&g](const DenseArray& operand, DenseArray full) -> DenseArray {
                  if (operand.shape() == g.shape()) return full;
                  return sum_all(full).reshaped(operand.shape());
                };
                std::vector<std::optional<DenseArray>> res(2);
                if (t.requires_grad(a)) {
                  if (kind == OpKind::mul) {
                    const DenseArray other = B.shape() == g.shape() ? B : broadcast_to(B, g.shape());
                    res[0] = fit(A, ewise(kernels::Binary::mul, g, other));
                  } else {
                    res[0] = fit(A, g);
                  }
                }
                if (t.requires_grad(b)) {
                  if (kind == OpKind::mul) {
                    const DenseArray other = A.shape() == g.shape() ? A : broadcast_to(A, g.shape());
                    res[1] = fit(B, ewise(kernels::Binary::mul, g, other));
                  } else if (kind == OpKind::sub) {
                    res[1] = fit(B, scaled(g, -1.0));
                  } else {
                    res[1] = fit(B, g);
                  }
                }
                return res;
              });
}

Var Tape::add(Var a, Var b) { return binary(OpKind::add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(OpKind::sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(OpKind::mul, a, b); }

Var Tape::scale(Var a, double factor) {
  auto out = scaled(value(a), factor);
  return push(OpKind::scale, {a}, std::move(out),
              [factor](const Tape&, const DenseArray& g) -> std::vector<std::optional<DenseArray>> {
                return {scaled(g, factor)};
              });
}

Var Tape::clamp(Var a, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp with lo > hi");
  const auto& av = value(a);
  auto out = buffer(av.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(av[i], lo, hi);
  return push(OpKind::clamp, {a}, DenseArray::unchecked(av.shape(), std::move(out)),
              [a, lo, hi](const Tape& t, const DenseArray& g)
                  -> std::vector<std::optional<DenseArray>> {
                const auto& x = t.value(a);
                auto gx = buffer(x.numel());
                for (std::size_t i = 0; i < gx.size(); ++i) {
                  gx[i] = (x[i] >= lo && x[i] <= hi) ? g[i] : 0.0;
                }
                return {DenseArray::unchecked(x.shape(), std::move(gx))};
              });
}

Var Tape::round_half_even(Var a) {
  const auto& av = value(a);
  auto out = buffer(av.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = kernels::round_half_even(av[i]);
  return push(OpKind::round, {a}, DenseArray::unchecked(av.shape(), std::move(out)),
              [](const Tape&, const DenseArray& g) -> std::vector<std::optional<DenseArray>> {
                return {DenseArray::zeros(g.shape())};
              });
}

Var Tape::heaviside(Var a) {
  const auto& av = value(a);
  auto out = buffer(av.numel());
  k::heaviside(av.data(), out);
  return push(OpKind::heaviside, {a}, DenseArray::unchecked(av.shape(), std::move(out)),
              [](const Tape&, const DenseArray& g) -> std::vector<std::optional<DenseArray>> {
                return {DenseArray::zeros(g.shape())};
              });
}

Var Tape::surrogate_step(Var v, double half_width) {
  const auto& vv = value(v);
  auto out = buffer(vv.numel());
  k::heaviside(vv.data(), out);
  return push(OpKind::surrogate_step, {v}, DenseArray::unchecked(vv.shape(), std::move(out)),
              [v, half_width](const Tape& t, const DenseArray& g)
                  -> std::vector<std::optional<DenseArray>> {
                const auto& x = t.value(v);
                auto gx = buffer(x.numel());
                k::rect_surrogate(g.data(), x.data(), half_width, gx);
                return {DenseArray::unchecked(x.shape(), std::move(gx))};
              });
}

Var Tape::sigmoid(Var a) {
  const auto& av = value(a);
  auto out = buffer(av.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-av[i]));
  Var self{nodes_.size()};
  return push(OpKind::sigmoid, {a}, DenseArray::unchecked(av.shape(), std::move(out)),
              [self](const Tape& t, const DenseArray& g) -> std::vector<std::optional<DenseArray>> {
                const auto& y = t.value(self);
                auto gx = buffer(y.numel());
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = g[i] * y[i] * (1.0 - y[i]);
                return {DenseArray::unchecked(y.shape(), std::move(gx))};
              });
}

Var Tape::sum(Var a) {
  return push(OpKind::sum, {a}, sum_all(value(a)),
              [a](const Tape& t, const DenseArray& g) -> std::vector<std::optional<DenseArray>> {
                return {DenseArray::full(t.shape(a), g.item())};
              });
}

Var Tape::mean0(Var a) {
  const auto& av = value(a);
  if (av.rank() < 2) throw DimensionError("mean0 needs rank >= 2");
  const std::size_t steps = av.dim(0);
  Shape rest(av.shape().begin() + 1, av.shape().end());
  const std::size_t n = shape_numel(rest);
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < n; ++i) out[i] += av[t * n + i];
  }
  for (auto& v : out) v /= static_cast<double>(steps);
  return push(OpKind::mean0, {a}, DenseArray::unchecked(rest, std::move(out)),
              [steps, n, full = av.shape()](const Tape&, const DenseArray& g)
                  -> std::vector<std::optional<DenseArray>> {
                std::vector<double> gx(steps * n);
                const double inv = 1.0 / static_cast<double>(steps);
                for (std::size_t t = 0; t < steps; ++t) {
                  for (std::size_t i = 0; i < n; ++i) gx[t * n + i] = g[i] * inv;
                }
                return {DenseArray::unchecked(full, std::move(gx))};
              });
}

Var Tape::reshape(Var a, Shape shape) {
  auto out = value(a).reshaped(std::move(shape));
  return push(OpKind::reshape, {a}, std::move(out),
              [a](const Tape& t, const DenseArray& g) -> std::vector<std::optional<DenseArray>> {
                return {g.reshaped(t.shape(a))};
              });
}

Var Tape::slice0(Var a, std::size_t index) {
  auto out = value(a).slice0(index);
  return push(OpKind::slice0, {a}, std::move(out),
              [a, index](const Tape& t, const DenseArray& g)
                  -> std::vector<std::optional<DenseArray>> {
                const auto& full = t.shape(a);
                std::vector<double> gx(shape_numel(full), 0.0);
                std::copy(g.data().begin(), g.data().end(),
                          gx.begin() + static_cast<std::ptrdiff_t>(index * g.numel()));
                return {DenseArray::unchecked(full, std::move(gx))};
              });
}

Var Tape::stack0(std::span<const Var> parts) {
  std::vector<DenseArray> values;
  values.reserve(parts.size());
  for (Var p : parts) values.push_back(value(p));
  auto out = spikekit::stack0(values);
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(OpKind::stack0, inputs, std::move(out),
              [count = parts.size()](const Tape&, const DenseArray& g)
                  -> std::vector<std::optional<DenseArray>> {
                std::vector<std::optional<DenseArray>> res;
                res.reserve(count);
                for (std::size_t i = 0; i < count; ++i) res.emplace_back(g.slice0(i));
                return res;
              });
}

Var Tape::detach(Var a) {
  nodes_.push_back(Node{OpKind::detach, {a}, value(a), false, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::cross_entropy(Var logits, std::span<const int> labels) {
  const auto& z = value(logits);
  if (z.rank() != 2 || z.dim(0) != labels.size()) {
    throw DimensionError("cross_entropy: logits " + shape_str(z.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = z.dim(0), classes = z.dim(1);
  std::vector<double> probs(batch * classes);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ContractError("label out of range in cross_entropy");
    }
    const double* row = z.data().data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(row[c] - mx);
    for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] = std::exp(row[c] - mx) / denom;
    loss += std::log(denom) + mx - row[label];
  }
  loss /= static_cast<double>(batch);
  std::vector<int> saved(labels.begin(), labels.end());
  return push(OpKind::cross_entropy, {logits}, DenseArray::scalar(loss),
              [probs = std::move(probs), saved = std::move(saved), batch, classes](
                  const Tape&, const DenseArray& g) -> std::vector<std::optional<DenseArray>> {
                std::vector<double> gz = probs;
                const double s = g.item() / static_cast<double>(batch);
                for (std::size_t b = 0; b < batch; ++b) {
                  gz[b * classes + static_cast<std::size_t>(saved[b])] -= 1.0;
                  for (std::size_t c = 0; c < classes; ++c) gz[b * classes + c] *= s;
                }
                return {DenseArray::unchecked({batch, classes}, std::move(gz))};
              });
}

Gradients Tape::backward(Var loss) const {
  const auto& lv = value(loss);
  if (lv.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(lv.shape()));
  }
  std::vector<std::optional<DenseArray>> grads(nodes_.size());
  grads[loss.id] = DenseArray::ones(lv.shape());
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!grads[id] || !n.requires_grad || !n.backward) continue;
    auto upstream = n.backward(*this, *grads[id]);
    if (upstream.size() != n.inputs.size()) {
      throw ContractError("backward rule of '" + std::string(op_name(n.kind)) +
                          "' returned the wrong number of gradients");
    }
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      if (!upstream[i]) continue;
      const Var in = n.inputs[i];
      if (!nodes_[in.id].requires_grad) continue;
      auto& g = *upstream[i];
      if (g.shape() != nodes_[in.id].value.shape()) {
        throw DimensionError("gradient shape mismatch in backward of '" +
                             std::string(op_name(n.kind)) + "'");
      }
      if (!g.all_finite()) {
        throw NonFiniteError("non-finite gradient in backward of '" +
                             std::string(op_name(n.kind)) + "'");
      }
      if (grads[in.id]) {
        grads[in.id] = ewise(kernels::Binary::add, *grads[in.id], g);
      } else {
        grads[in.id] = std::move(g);
      }
    }
  }
  return Gradients(std::move(grads));
}

}  // namespace spikekit
