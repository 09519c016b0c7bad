#pragma once

// Test-only reference computations. Nothing here calls into the tape or the
// kernels; each oracle is a direct scalar loop over the defining equations.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "spikekit/tensor.hpp"

namespace oracle {

inline spikekit::DenseArray random_array(spikekit::Shape shape, std::mt19937_64& rng,
                                         double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(spikekit::shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return spikekit::DenseArray(std::move(shape), std::move(v));
}

/// Central difference of f at params[i].
inline double central_diff(const std::function<double(const std::vector<double>&)>& f,
                           std::vector<double> params, std::size_t i, double eps) {
  const double x0 = params[i];
  params[i] = x0 + eps;
  const double up = f(params);
  params[i] = x0 - eps;
  const double down = f(params);
  return (up - down) / (2.0 * eps);
}

inline double round_even(double x) {
  // Independent of std::nearbyint: explicit tie handling.
  const double fl = std::floor(x);
  const double diff = x - fl;
  if (diff < 0.5) return fl;
  if (diff > 0.5) return fl + 1.0;
  return std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
}

inline double clip_round(double u, double alpha, int steps, double n, bool integerized) {
  const double lo = integerized ? std::ceil(alpha) : alpha;
  return std::min(std::max(round_even(u), lo), lo + steps) / n;
}

struct ScalarTrace {
  std::vector<double> u, s, h;
};

/// U = H + X; S = clip(round(U), .)/N; H = beta (U - S N).
inline ScalarTrace asn_scalar(const std::vector<double>& x, double beta, double alpha, int steps,
                              double n = 1.0, bool integerized = true, double h0 = 0.0) {
  ScalarTrace tr;
  double h = h0;
  for (double xt : x) {
    const double u = h + xt;
    const double s = clip_round(u, alpha, steps, n, integerized);
    h = beta * (u - s * n);
    tr.u.push_back(u);
    tr.s.push_back(s);
    tr.h.push_back(h);
  }
  return tr;
}

/// U = H + X; S = Theta(U - V_th); H = beta (U - S).
inline ScalarTrace lif_scalar(const std::vector<double>& x, double beta, double v_th) {
  ScalarTrace tr;
  double h = 0.0;
  for (double xt : x) {
    const double u = h + xt;
    const double s = u - v_th >= 0.0 ? 1.0 : 0.0;
    h = beta * (u - s);
    tr.u.push_back(u);
    tr.s.push_back(s);
    tr.h.push_back(h);
  }
  return tr;
}

/// The two straight-through indicator rules, one element at a time. The
/// factors are applied as upstream * (1/N) and sum * (a/N).
inline double ste_grad_x(double upstream, double u, double alpha, int steps, double n) {
  return (alpha <= u && u <= alpha + steps) ? upstream * (1.0 / n) : 0.0;
}

inline double ste_grad_alpha(const std::vector<double>& upstream, const std::vector<double>& u,
                             double alpha, int steps, double n, double a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] < alpha || u[i] > alpha + steps) acc += upstream[i];
  }
  return acc * (a / n);
}

/// H = W X over time for one channel, S = Theta(H - B).
inline std::vector<double> psn_scalar(const std::vector<double>& w, const std::vector<double>& b,
                                      const std::vector<double>& x) {
  const std::size_t T = x.size();
  std::vector<double> s(T);
  for (std::size_t t = 0; t < T; ++t) {
    double h = 0.0;
    for (std::size_t k = 0; k < T; ++k) h += w[t * T + k] * x[k];
    s[t] = h - b[t] >= 0.0 ? 1.0 : 0.0;
  }
  return s;
}

/// Scalar-loop spiking MLP with clip-round neurons:
///   X_l = W_l S_{l-1};  U = H + X;  S = clip_round(U)/N;  H = beta (U - S N)
///   logits = Wc · mean_t(S_last) + bc
/// With `frozen` the quantizer is replaced by S = U/N + c, c read from `offsets`
/// (recorded by an earlier unfrozen call), which is the network's smooth path.
struct ScalarNet {
  std::vector<std::size_t> widths;       // {in, h1, ...}
  std::vector<std::vector<double>> w;    // per layer, row-major [out × in]
  std::vector<double> alpha;             // per layer
  int steps = 4;
  double n = 1.0;
  double beta = 0.5;
  std::vector<double> wc, bc;            // [classes × last], [classes]
  std::size_t classes = 2;
};

inline std::vector<double> scalar_net_logits(const ScalarNet& net, const std::vector<double>& x,
                                             std::size_t T, std::size_t B,
                                             std::vector<double>* offsets = nullptr,
                                             bool frozen = false,
                                             std::vector<double>* potentials = nullptr) {
  std::vector<double> cur = x;  // [T × B × width]
  std::size_t off_i = 0;
  if (offsets && !frozen) offsets->clear();
  if (potentials) potentials->clear();
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
    const std::size_t in = net.widths[l], out = net.widths[l + 1];
    std::vector<double> pre(T * B * out, 0.0), s(T * B * out);
    for (std::size_t tb = 0; tb < T * B; ++tb)
      for (std::size_t o = 0; o < out; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < in; ++i) acc += net.w[l][o * in + i] * cur[tb * in + i];
        pre[tb * out + o] = acc;
      }
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < out; ++o) {
        double h = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t idx = (t * B + b) * out + o;
          const double u = h + pre[idx];
          if (potentials) potentials->push_back(u);
          double sv;
          if (frozen) {
            sv = u / net.n + (*offsets)[off_i++];
          } else {
            sv = clip_round(u, net.alpha[l], net.steps, net.n, true);
            if (offsets) offsets->push_back(sv - u / net.n);
          }
          s[idx] = sv;
          h = net.beta * (u - sv * net.n);
        }
      }
    cur = std::move(s);
  }
  const std::size_t last = net.widths.back();
  std::vector<double> logits(B * net.classes);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < net.classes; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < last; ++j) {
        double r = 0.0;
        for (std::size_t t = 0; t < T; ++t) r += cur[(t * B + b) * last + j];
        acc += net.wc[c * last + j] * (r / static_cast<double>(T));
      }
      logits[b * net.classes + c] = acc + net.bc[c];
    }
  return logits;
}

}  // namespace oracle
