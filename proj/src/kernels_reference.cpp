#include <algorithm>

#include "spikekit/kernels.hpp"

namespace spikekit::kernels::reference {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] = acc;
    }
  }
}

void binary(Binary op, std::span<const double> a, std::span<const double> b,
            std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (op) {
      case Binary::add: out[i] = a[i] + b[i]; break;
      case Binary::sub: out[i] = a[i] - b[i]; break;
      case Binary::mul: out[i] = a[i] * b[i]; break;
    }
  }
}

void scale(std::span<const double> a, double factor, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
}

void quantize_forward(std::span<const double> u, const QuantArgs& q, std::span<double> out) {
  const std::size_t channels = q.alphas.size();
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Window w = forward_window(q.alphas[i % channels], q.steps, q.integerized);
    out[i] = std::clamp(round_half_even(u[i]), w.lo, w.hi) / q.normalizer;
  }
}

void quantize_backward_x(std::span<const double> upstream, std::span<const double> u,
                         const QuantArgs& q, std::span<double> grad) {
  const std::size_t channels = q.alphas.size();
  const double inv_n = 1.0 / q.normalizer;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double alpha = q.alphas[i % channels];
    const bool inside = u[i] >= alpha && u[i] <= alpha + q.steps;
    grad[i] = inside ? upstream[i] * inv_n : 0.0;
  }
}

void quantize_backward_alpha(std::span<const double> upstream, std::span<const double> u,
                             const QuantArgs& q, double grad_scale, std::span<double> grad) {
  const std::size_t channels = q.alphas.size();
  std::fill(grad.begin(), grad.end(), 0.0);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const std::size_t c = i % channels;
    const double alpha = q.alphas[c];
    if (u[i] < alpha || u[i] > alpha + q.steps) grad[c] += upstream[i];
  }
  const double factor = grad_scale / q.normalizer;
  for (auto& g : grad) g *= factor;
}

void heaviside(std::span<const double> v, std::span<double> out) {
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] >= 0.0 ? 1.0 : 0.0;
}

void rect_surrogate(std::span<const double> upstream, std::span<const double> v,
                    double half_width, std::span<double> grad) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    grad[i] = std::abs(v[i]) <= half_width ? upstream[i] : 0.0;
  }
}

}  // namespace spikekit::kernels::reference
