#pragma once

// Random network builders shared by the folding, energy and acceptance tests.

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "spikekit/network.hpp"

namespace netgen {

struct Spec {
  std::vector<std::size_t> widths;  // {in, h1, ...}
  std::size_t classes = 3;
  spikekit::NeuronKind kind = spikekit::NeuronKind::asn;
  int steps = 4;
  std::vector<double> alphas;  // one per layer
  double beta = 0.5;
  bool integer_weights = false;
};

inline spikekit::NeuronParams neuron_for(const Spec& s, double alpha) {
  using spikekit::NeuronKind;
  using spikekit::NeuronParams;
  switch (s.kind) {
    case NeuronKind::asn: return NeuronParams::asn(s.steps, alpha, s.beta);
    case NeuronKind::nasn: return NeuronParams::nasn(s.steps, alpha, s.beta);
    case NeuronKind::ilif: return NeuronParams::ilif(s.steps, s.beta);
    default: return NeuronParams::nilif(s.steps, s.beta);
  }
}

inline spikekit::DenseArray weights(std::size_t out, std::size_t in, std::mt19937_64& rng, bool integer,
                                    double gain = 1.5) {
  std::vector<double> w(out * in);
  if (integer) {
    std::uniform_int_distribution<int> d(-2, 2);
    for (auto& v : w) v = d(rng);
  } else {
    std::normal_distribution<double> d(0.0, gain / std::sqrt(static_cast<double>(in)));
    for (auto& v : w) v = d(rng);
  }
  return spikekit::DenseArray({out, in}, std::move(w));
}

inline spikekit::SpikingMLP build(const Spec& s, std::mt19937_64& rng) {
  spikekit::SpikingMLP net;
  for (std::size_t l = 1; l < s.widths.size(); ++l) {
    const double alpha = l - 1 < s.alphas.size() ? s.alphas[l - 1] : 0.0;
    net.layers.push_back({weights(s.widths[l], s.widths[l - 1], rng, s.integer_weights), neuron_for(s, alpha), false});
  }
  net.classifier_weight = weights(s.classes, s.widths.back(), rng, s.integer_weights);
  std::vector<double> b(s.classes);
  std::uniform_real_distribution<double> bd(-1, 1);
  for (auto& v : b) v = s.integer_weights ? std::round(4 * bd(rng)) : bd(rng);
  net.classifier_bias = spikekit::DenseArray({s.classes}, std::move(b));
  net.validate();
  return net;
}

/// Depth 1-3, widths <= max_width, D in {1,2,4,8}, alpha in [-3, 3].
inline Spec random_spec(std::mt19937_64& rng, spikekit::NeuronKind kind, std::size_t max_width = 64,
                        bool integer = false) {
  static constexpr int kSteps[] = {1, 2, 4, 8};
  std::uniform_int_distribution<int> depth(1, 3), di(0, 3);
  std::uniform_int_distribution<std::size_t> width(1, max_width), classes(2, 6);
  std::uniform_real_distribution<double> alpha(-3.0, 3.0), beta(0.1, 1.0);
  Spec s;
  s.kind = kind;
  s.steps = kSteps[di(rng)];
  s.classes = classes(rng);
  s.integer_weights = integer;
  s.beta = integer ? 0.5 : beta(rng);
  s.widths.push_back(width(rng));
  const int d = depth(rng);
  for (int l = 0; l < d; ++l) {
    s.widths.push_back(width(rng));
    s.alphas.push_back(integer ? std::round(alpha(rng)) : alpha(rng));
  }
  return s;
}

/// Inputs [T×B×in] spanning the windows: U(-2, D+4) reals, or integers in that range.
inline spikekit::DenseArray inputs(std::size_t T, std::size_t B, std::size_t in, int steps, std::mt19937_64& rng,
                                   bool integer = false) {
  std::uniform_real_distribution<double> d(-2.0, steps + 4.0);
  std::vector<double> x(T * B * in);
  for (auto& v : x) v = integer ? std::round(d(rng)) : d(rng);
  return spikekit::DenseArray({T, B, in}, std::move(x));
}

/// Same network as plain vectors for the scalar oracle; assumes one neuron setting for all layers.
inline oracle::ScalarNet to_scalar(const spikekit::SpikingMLP& net) {
  oracle::ScalarNet s;
  s.widths.push_back(net.input_width());
  for (const auto& l : net.layers) {
    s.widths.push_back(l.out_width());
    s.w.push_back(l.weight.values());
    s.alpha.push_back(l.neuron.quantizer.alpha);
  }
  const auto& p = net.layers.front().neuron;
  s.steps = p.quantizer.steps;
  s.n = p.quantizer.normalizer;
  s.beta = p.beta;
  s.wc = net.classifier_weight.values();
  s.bc = net.classifier_bias.values();
  s.classes = net.classes();
  return s;
}

}  // namespace netgen
