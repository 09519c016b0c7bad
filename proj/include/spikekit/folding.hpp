#pragma once

// Spike-driven inference for integer-trained networks.
//
// A quantized neuron emitting s = q/N (q an integer in [ceil(alpha), ceil(alpha)+D])
// is replayed as S1 = q - ceil(alpha) binary spikes spread over D sub-steps. The
// next layer then sees
//
//   X[t] = W s[t] = (W/N) S1[t] + (W/N) ceil(alpha) · 1 = W' S1[t] + C
//
// so its synaptic work is one weight-column accumulate per spike plus a single
// constant add per integer timestep.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spikekit/network.hpp"

namespace spikekit {

/// Binary events [(T·D) × B × N], stored as bytes.
struct SpikeTrain {
  std::size_t timesteps = 0;  // T
  int steps = 1;              // D
  std::size_t batch = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  std::size_t substeps() const { return timesteps * static_cast<std::size_t>(steps); }
  std::uint8_t at(std::size_t t, int d, std::size_t b, std::size_t n) const {
    return data[((t * static_cast<std::size_t>(steps) + static_cast<std::size_t>(d)) * batch + b) * width + n];
  }
  /// Sum over the D sub-steps of step t.
  int block_sum(std::size_t t, std::size_t b, std::size_t n) const;
  std::size_t spike_count() const;
  /// Throws EquivalenceError on non-binary entries or a size mismatch.
  void validate() const;
};

enum class Placement {
  ones_first,  // S1 ones, then D - S1 zeros
  shuffled,    // a seeded random permutation of the same block
};

/// S1 = s·N - ceil(alpha_c) per element; throws FoldingError unless S1 is an integer in [0, D].
/// `alpha_ceil` has one entry (layer-wise) or one per innermost channel.
SpikeTrain unfold(const DenseArray& s, std::span<const double> alpha_ceil, int steps,
                  double normalizer = 1.0, Placement placement = Placement::ones_first,
                  std::uint64_t seed = 0);
SpikeTrain unfold(const DenseArray& s, long long alpha_ceil, int steps, double normalizer = 1.0);

/// Integer counts per (t, b, n) as doubles, [T×B×N].
DenseArray block_sums(const SpikeTrain& train);

struct FoldedLayer {
  DenseArray weight;    // [out × in], W / N of the source neuron
  DenseArray constant;  // [out], (W / N) · ceil(alpha)
};

/// Folds W against the neuron that produces its input. `source` must be ILIF, NILIF, ASN or NASN.
FoldedLayer fold_layer(const DenseArray& weight, const NeuronParams& source);

/// Inference form of a SpikingMLP whose neurons are all quantized.
struct FoldedNet {
  DenseArray input_weight;            // layer 1 acts on the real-valued input
  bool input_weight_frozen = false;
  std::vector<NeuronParams> neurons;  // one per spiking layer
  std::vector<FoldedLayer> stages;    // stage l consumes spikes of neuron l; the last is the readout
  DenseArray classifier_bias;

  std::size_t depth() const { return neurons.size(); }
  /// Throws on inconsistent shapes or non-quantized neurons.
  void validate() const;
};

/// Throws ContractError for non-quantized neurons or continuous bound mode.
FoldedNet fold_net(const SpikingMLP& net);
/// Multiplies the folds back by N; the constants are discarded.
SpikingMLP unfold_net(const FoldedNet& folded);

struct InferenceOptions {
  Placement placement = Placement::ones_first;
  std::uint64_t seed = 0;
};

struct InferenceResult {
  std::vector<DenseArray> pre;     // reconstructed X_l, [T×B×out_l]; pre[0] is the dense input layer
  std::vector<SpikeTrain> trains;  // emitted by each neuron
  DenseArray logits;               // [B×classes]
};

/// Event-driven execution of `folded` on x [T×B×in].
InferenceResult spike_inference(const FoldedNet& folded, const DenseArray& x,
                                const InferenceOptions& options = {});

struct LayerDeviation {
  std::string name;  // "layer1", ..., "readout"
  double max_abs_diff = 0.0;
  bool pass = false;
};

struct EquivalenceReport {
  std::vector<LayerDeviation> layers;
  double tolerance = 0.0;
  bool pass = false;
  /// Name of the first failing layer, empty on pass.
  std::string first_failure() const;
};

/// Runs the training-mode forward of `net` and spike inference of `folded` side by side.
/// Refuses (ContractError) any continuous bound mode.
EquivalenceReport verify_equivalence(const SpikingMLP& net, const FoldedNet& folded, const DenseArray& x,
                                     double tolerance, const InferenceOptions& options = {});
EquivalenceReport verify_equivalence(const SpikingMLP& net, const DenseArray& x, double tolerance);

// ---------------------------------------------------------------------------
// SPKF container (layout in docs/spkf.md)

inline constexpr std::uint32_t kSpkfVersion = 1;

std::vector<std::uint8_t> encode_spkf(const FoldedNet& folded);
/// Throws FormatError with the byte offset of the first bad field.
FoldedNet decode_spkf(std::span<const std::uint8_t> bytes);
void save_spkf(const FoldedNet& folded, const std::filesystem::path& path);
FoldedNet load_spkf(const std::filesystem::path& path);

}  // namespace spikekit
