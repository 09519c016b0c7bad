#pragma once

// Clip-round quantizer shared by ILIF, NILIF, ASN and NASN.
//
//   forward   y = clamp(round(u), lo, hi) / N
//   dy/du     1/N inside [alpha, alpha + D], else 0
//   dL/dalpha a/N * sum_i upstream_i * 1{u_i outside [alpha, alpha + D]}
//
// (lo, hi) is [ceil(alpha), ceil(alpha) + D] in integerized mode and
// [alpha, alpha + D] in continuous mode. The gradient window always uses the
// continuous alpha. Boundary elements belong to the pass-through set.

#include <span>
#include <vector>

#include "spikekit/tape.hpp"
#include "spikekit/tensor.hpp"

namespace spikekit {

enum class BoundMode { continuous, integerized };

struct QuantizerSpec {
  double alpha = 0.0;
  int steps = 4;             // D, the virtual timestep count
  double normalizer = 1.0;   // N; 1 for ILIF/ASN
  double grad_scale = 1.0;   // a
  BoundMode bound_mode = BoundMode::integerized;

  /// Throws ContractError unless D >= 1, N > 0, a > 0.
  void validate() const;
  double forward_lo() const;
  double forward_hi() const { return forward_lo() + steps; }
  /// d_min / d_max of the gradient window.
  double window_lo() const { return alpha; }
  double window_hi() const { return alpha + steps; }
};

DenseArray quantize_forward(const DenseArray& u, const QuantizerSpec& spec);
DenseArray quantize_backward_x(const DenseArray& upstream, const DenseArray& u,
                               const QuantizerSpec& spec);
double quantize_backward_alpha(const DenseArray& upstream, const DenseArray& u,
                               const QuantizerSpec& spec);

/// Per-channel variants: `alphas` has one entry per innermost-axis channel and
/// overrides spec.alpha.
DenseArray quantize_forward(const DenseArray& u, const QuantizerSpec& spec,
                            std::span<const double> alphas);
DenseArray quantize_backward_x(const DenseArray& upstream, const DenseArray& u,
                               const QuantizerSpec& spec, std::span<const double> alphas);
std::vector<double> quantize_backward_alpha(const DenseArray& upstream, const DenseArray& u,
                                            const QuantizerSpec& spec,
                                            std::span<const double> alphas);

/// Tape node for the quantizer. `alpha` is a [1] (layer-wise) or [channels]
/// variable whose current value replaces spec.alpha; whether it learns is
/// decided by its requires_grad flag.
Var quantize(Tape& tape, Var u, Var alpha, const QuantizerSpec& spec);

}  // namespace spikekit
