#include <algorithm>
#include <vector>

#include "spikekit/kernels.hpp"

namespace spikekit::kernels::parallel {
namespace {

// Below this many output elements a parallel region costs more than it saves.
constexpr std::ptrdiff_t kMinParallel = 1 << 14;
constexpr std::size_t kReduceChunk = 1 << 13;

std::ptrdiff_t ssize(std::size_t n) { return static_cast<std::ptrdiff_t>(n); }

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c) {
  const std::ptrdiff_t rows = ssize(m);
  // i-p-j order keeps the per-element summation order of the reference loop.
#pragma omp parallel for schedule(static) if (rows * ssize(n) * ssize(k) > kMinParallel)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = trans_a ? a[p * m + i] : a[i * k + p];
      if (!trans_b) {
        const double* brow = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
      }
    }
  }
}

void binary(Binary op, std::span<const double> a, std::span<const double> b,
            std::span<double> out) {
  const std::ptrdiff_t n = ssize(out.size());
  switch (op) {
    case Binary::add:
#pragma omp parallel for simd schedule(static) if (n > kMinParallel)
      for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
      break;
    case Binary::sub:
#pragma omp parallel for simd schedule(static) if (n > kMinParallel)
      for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
      break;
    case Binary::mul:
#pragma omp parallel for simd schedule(static) if (n > kMinParallel)
      for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
      break;
  }
}

void scale(std::span<const double> a, double factor, std::span<double> out) {
  const std::ptrdiff_t n = ssize(out.size());
#pragma omp parallel for simd schedule(static) if (n > kMinParallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = a[i] * factor;
}

void quantize_forward(std::span<const double> u, const QuantArgs& q, std::span<double> out) {
  const std::size_t channels = q.alphas.size();
  const std::ptrdiff_t n = ssize(u.size());
#pragma omp parallel for schedule(static) if (n > kMinParallel)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const Window w = forward_window(q.alphas[i % channels], q.steps, q.integerized);
    out[i] = std::clamp(round_half_even(u[i]), w.lo, w.hi) / q.normalizer;
  }
}

void quantize_backward_x(std::span<const double> upstream, std::span<const double> u,
                         const QuantArgs& q, std::span<double> grad) {
  const std::size_t channels = q.alphas.size();
  const double inv_n = 1.0 / q.normalizer;
  const std::ptrdiff_t n = ssize(u.size());
#pragma omp parallel for schedule(static) if (n > kMinParallel)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double alpha = q.alphas[i % channels];
    const bool inside = u[i] >= alpha && u[i] <= alpha + q.steps;
    grad[i] = inside ? upstream[i] * inv_n : 0.0;
  }
}

void quantize_backward_alpha(std::span<const double> upstream, std::span<const double> u,
                             const QuantArgs& q, double grad_scale, std::span<double> grad) {
  const std::size_t channels = q.alphas.size();
  const std::size_t chunks = std::max<std::size_t>(1, (u.size() + kReduceChunk - 1) / kReduceChunk);
  std::vector<double> partial(chunks * channels, 0.0);
#pragma omp parallel for schedule(static) if (chunks > 1)
  for (std::ptrdiff_t cc = 0; cc < ssize(chunks); ++cc) {
    const auto chunk = static_cast<std::size_t>(cc);
    const std::size_t begin = chunk * kReduceChunk;
    const std::size_t end = std::min(u.size(), begin + kReduceChunk);
    double* acc = partial.data() + chunk * channels;
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t c = i % channels;
      const double alpha = q.alphas[c];
      if (u[i] < alpha || u[i] > alpha + q.steps) acc[c] += upstream[i];
    }
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  for (std::size_t chunk = 0; chunk < chunks; ++chunk) {
    for (std::size_t c = 0; c < channels; ++c) grad[c] += partial[chunk * channels + c];
  }
  const double factor = grad_scale / q.normalizer;
  for (auto& g : grad) g *= factor;
}

void heaviside(std::span<const double> v, std::span<double> out) {
  const std::ptrdiff_t n = ssize(v.size());
#pragma omp parallel for simd schedule(static) if (n > kMinParallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = v[i] >= 0.0 ? 1.0 : 0.0;
}

void rect_surrogate(std::span<const double> upstream, std::span<const double> v,
                    double half_width, std::span<double> grad) {
  const std::ptrdiff_t n = ssize(v.size());
#pragma omp parallel for simd schedule(static) if (n > kMinParallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    grad[i] = std::abs(v[i]) <= half_width ? upstream[i] : 0.0;
  }
}

}  // namespace spikekit::kernels::parallel
