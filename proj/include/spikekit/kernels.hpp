#pragma once

// Data-parallel inner loops used by the tape and the inference path.
//
// Two implementations share one signature set:
//   kernels::reference  plain serial loops, the oracle for kernel tests
//   kernels::parallel   OpenMP versions used everywhere else
//
// Maps and GEMM are bitwise identical between the two (each output element is
// produced by one thread with the same summation order). The alpha reduction in
// `parallel` sums fixed-size chunks and then the partials in order, so it is
// deterministic for any thread count but may differ from `reference` in the
// last bits for inputs larger than one chunk.

#include <cmath>
#include <cstddef>
#include <span>

namespace spikekit::kernels {

enum class Binary { add, sub, mul };

/// IEEE round-half-to-even (the default FE_TONEAREST mode).
inline double round_half_even(double x) noexcept { return std::nearbyint(x); }

/// Clip bounds of a quantizer window for one channel.
struct Window {
  double lo;
  double hi;
};

/// Parameters shared by the quantizer kernels. `alphas` has size 1 (layer-wise)
/// or equals the innermost extent (per-channel); element i uses
/// alphas[i % alphas.size()].
struct QuantArgs {
  std::span<const double> alphas;
  int steps = 4;           // D
  double normalizer = 1.0; // N
  bool integerized = true;
};

inline Window forward_window(double alpha, int steps, bool integerized) noexcept {
  const double lo = integerized ? std::ceil(alpha) : alpha;
  return {lo, lo + steps};
}

#define SPIKEKIT_KERNEL_DECLS                                                                     \
  /* C[m×n] = op(A)·op(B); op(A) is m×k, op(B) is k×n. C is overwritten. */                      \
  void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,              \
            std::span<const double> a, std::span<const double> b, std::span<double> c);           \
  void binary(Binary op, std::span<const double> a, std::span<const double> b,                    \
              std::span<double> out);                                                             \
  void scale(std::span<const double> a, double factor, std::span<double> out);                   \
  void quantize_forward(std::span<const double> u, const QuantArgs& q, std::span<double> out);   \
  void quantize_backward_x(std::span<const double> upstream, std::span<const double> u,          \
                           const QuantArgs& q, std::span<double> grad);                          \
  /* Accumulates a/N * sum(upstream * 1{u outside [alpha, alpha+D]}) per alpha slot. */          \
  void quantize_backward_alpha(std::span<const double> upstream, std::span<const double> u,      \
                               const QuantArgs& q, double grad_scale, std::span<double> grad);   \
  void heaviside(std::span<const double> v, std::span<double> out);                               \
  /* grad = upstream * 1{|v| <= half_width} (rectangular surrogate of the step at 0). */          \
  void rect_surrogate(std::span<const double> upstream, std::span<const double> v,               \
                      double half_width, std::span<double> grad);

namespace reference {
SPIKEKIT_KERNEL_DECLS
}  // namespace reference

namespace parallel {
SPIKEKIT_KERNEL_DECLS
}  // namespace parallel

#undef SPIKEKIT_KERNEL_DECLS

}  // namespace spikekit::kernels
