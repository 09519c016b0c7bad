#pragma once

// Synaptic operation counts and an AC/MAC energy estimate for one inference pass.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spikekit/folding.hpp"

namespace spikekit {

/// Per-operation costs in joules. Defaults are placeholder constants, overridable by config.
struct EnergyCosts {
  double e_ac = 0.9e-12;
  double e_mac = 4.6e-12;
};

/// Counts charged to one spiking layer: its own spikes, the accumulates they trigger
/// in the consumer (next layer or readout), and the consumer's constant adds.
struct LayerOps {
  std::string name;                   // "layer1", ...
  std::uint64_t mac_count = 0;        // dense multiply-accumulates on the real-valued input (layer 1)
  std::uint64_t ac_count = 0;         // spikes × fan_out
  std::uint64_t constant_adds = 0;    // one per (timestep, sample) when the folded constant is nonzero
  std::uint64_t spikes = 0;           // events emitted by this layer's neurons
  std::uint64_t slots = 0;            // T·D·B·N of this layer's output train
  std::uint64_t fan_out = 0;          // width of the consumer
  std::optional<double> firing_rate;  // spikes / slots
  double energy_joules = 0.0;
};

struct OpCountReport {
  std::vector<LayerOps> layers;
  LayerOps totals;
  EnergyCosts costs;
  double energy_joules = 0.0;
  /// Keys: mac_count, ac_count, constant_adds, firing_rate, energy_joules (per layer and total).
  std::string json() const;
};

/// Layer 1 additionally counts one MAC per nonzero input element per output unit.
OpCountReport count_ops(const FoldedNet& folded, const DenseArray& x, const InferenceResult& run,
                        const EnergyCosts& costs = {});
/// Runs spike_inference and counts it.
OpCountReport measure_energy(const FoldedNet& folded, const DenseArray& x, const EnergyCosts& costs = {});

}  // namespace spikekit
