#include "spikekit/quantizer.hpp"

#include <cmath>
#include <string>

#include "spikekit/errors.hpp"
#include "spikekit/kernels.hpp"

namespace spikekit {
namespace k = kernels::parallel;

namespace {

kernels::QuantArgs args_for(const QuantizerSpec& spec, std::span<const double> alphas) {
  return {alphas, spec.steps, spec.normalizer, spec.bound_mode == BoundMode::integerized};
}

void check_channels(const DenseArray& u, std::span<const double> alphas) {
  if (alphas.empty()) throw ContractError("quantizer needs at least one alpha");
  if (alphas.size() == 1) return;
  if (u.rank() == 0 || u.shape().back() != alphas.size()) {
    throw DimensionError("per-channel alpha count " + std::to_string(alphas.size()) +
                         " does not match innermost extent of " + shape_str(u.shape()));
  }
}

void check_same(const DenseArray& a, const DenseArray& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("quantizer backward: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

}  // namespace

void QuantizerSpec::validate() const {
  if (steps < 1) throw ContractError("quantizer D must be >= 1");
  if (!(normalizer > 0.0) || !std::isfinite(normalizer)) throw ContractError("quantizer N must be > 0");
  if (!(grad_scale > 0.0) || !std::isfinite(grad_scale)) {
    throw ContractError("quantizer gradient scale must be > 0");
  }
  if (!std::isfinite(alpha)) throw ContractError("quantizer alpha must be finite");
}

double QuantizerSpec::forward_lo() const {
  return bound_mode == BoundMode::integerized ? std::ceil(alpha) : alpha;
}

DenseArray quantize_forward(const DenseArray& u, const QuantizerSpec& spec,
                            std::span<const double> alphas) {
  spec.validate();
  check_channels(u, alphas);
  std::vector<double> out(u.numel());
  k::quantize_forward(u.data(), args_for(spec, alphas), out);
  return DenseArray::unchecked(u.shape(), std::move(out));
}

DenseArray quantize_backward_x(const DenseArray& upstream, const DenseArray& u,
                               const QuantizerSpec& spec, std::span<const double> alphas) {
  spec.validate();
  check_same(upstream, u);
  check_channels(u, alphas);
  std::vector<double> out(u.numel());
  k::quantize_backward_x(upstream.data(), u.data(), args_for(spec, alphas), out);
  return DenseArray::unchecked(u.shape(), std::move(out));
}

std::vector<double> quantize_backward_alpha(const DenseArray& upstream, const DenseArray& u,
                                            const QuantizerSpec& spec,
                                            std::span<const double> alphas) {
  spec.validate();
  check_same(upstream, u);
  check_channels(u, alphas);
  std::vector<double> grad(alphas.size());
  k::quantize_backward_alpha(upstream.data(), u.data(), args_for(spec, alphas), spec.grad_scale,
                             grad);
  return grad;
}

DenseArray quantize_forward(const DenseArray& u, const QuantizerSpec& spec) {
  const double alpha = spec.alpha;
  return quantize_forward(u, spec, std::span<const double>(&alpha, 1));
}

DenseArray quantize_backward_x(const DenseArray& upstream, const DenseArray& u,
                               const QuantizerSpec& spec) {
  const double alpha = spec.alpha;
  return quantize_backward_x(upstream, u, spec, std::span<const double>(&alpha, 1));
}

double quantize_backward_alpha(const DenseArray& upstream, const DenseArray& u,
                               const QuantizerSpec& spec) {
  const double alpha = spec.alpha;
  return quantize_backward_alpha(upstream, u, spec, std::span<const double>(&alpha, 1)).front();
}

Var quantize(Tape& tape, Var u, Var alpha, const QuantizerSpec& spec) {
  const auto& uv = tape.value(u);
  const auto& av = tape.value(alpha);
  auto y = quantize_forward(uv, spec, av.data());
  return tape.record(
      OpKind::quantize, {u, alpha}, std::move(y),
      [u, alpha, spec](const Tape& t, const DenseArray& g) -> std::vector<std::optional<DenseArray>> {
        std::vector<std::optional<DenseArray>> res(2);
        const auto& x = t.value(u);
        const auto& a = t.value(alpha);
        if (t.requires_grad(u)) res[0] = quantize_backward_x(g, x, spec, a.data());
        if (t.requires_grad(alpha)) {
          res[1] = DenseArray::unchecked(a.shape(), quantize_backward_alpha(g, x, spec, a.data()));
        }
        return res;
      });
}

}  // namespace spikekit
