#pragma once

// Bias-free spiking MLP with a rate-decoded linear classifier, and its trainer.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spikekit/data.hpp"
#include "spikekit/errors.hpp"
#include "spikekit/neurons.hpp"
#include "spikekit/tape.hpp"

namespace spikekit {

struct SpikingLayer {
  DenseArray weight;  // [out × in]
  NeuronParams neuron;
  /// Kept fixed by the trainer (used for an identity input-encoding layer).
  bool frozen_weight = false;

  std::size_t in_width() const { return weight.dim(1); }
  std::size_t out_width() const { return weight.dim(0); }
};

/// x [T×B×in] -> (W_l, neuron_l)* -> mean over T -> logits = W_c · r + b_c.
struct SpikingMLP {
  std::vector<SpikingLayer> layers;
  DenseArray classifier_weight;  // [classes × last width]
  DenseArray classifier_bias;    // [classes]

  std::size_t input_width() const { return layers.front().in_width(); }
  std::size_t classes() const { return classifier_weight.dim(0); }
  /// Throws DimensionError / ContractError if the shapes do not chain.
  void validate() const;
};

struct NetInit {
  /// {in, h1, ..., hk}: k spiking layers with W_l of shape [h_l × h_{l-1}].
  std::vector<std::size_t> widths;
  std::size_t classes = 2;
  NeuronParams neuron = NeuronParams::asn(4);
  /// Prepends a frozen identity layer so the first neuron sees the encoded input directly.
  bool identity_input = false;
  /// W_l ~ N(0, gain² / fan_in).
  double weight_gain = 1.0;
  double classifier_gain = 1.0;
  std::uint64_t seed = 0;
};

SpikingMLP make_mlp(const NetInit& init);

/// Tape leaves for one pass.
struct NetVars {
  std::vector<Var> weights;
  std::vector<NeuronVars> neurons;
  Var classifier_weight;
  Var classifier_bias;
};

/// `train` marks trainable leaves; alpha is excluded when `freeze_alpha`.
NetVars bind_net(Tape& tape, const SpikingMLP& net, bool train, bool freeze_alpha = false);

struct NetForward {
  std::vector<Var> pre;          // X_l = W_l · S_{l-1}, [T×B×out_l]
  std::vector<Var> activations;  // S_l, [T×B×out_l]
  Var readout;                   // mean_t S_last, [B×last]
  Var logits;                    // [B×classes]
};

/// A non-finite value inside one spiking layer (1-based; 0 = classifier/loss).
class NonFiniteLayerError : public NonFiniteError {
 public:
  NonFiniteLayerError(const std::string& what, int layer) : NonFiniteError(what), layer_(layer) {}
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

/// Rethrows tape NonFiniteErrors as NonFiniteLayerError.
NetForward forward_net(Tape& tape, const SpikingMLP& net, const NetVars& vars, Var x);

/// Eager values of one forward pass.
struct NetEval {
  std::vector<DenseArray> pre;
  std::vector<DenseArray> activations;
  DenseArray readout;
  DenseArray logits;
};
NetEval evaluate_net(const SpikingMLP& net, const DenseArray& x);
DenseArray forward_logits(const SpikingMLP& net, const DenseArray& x);

/// Fraction of rows whose argmax logit (first index on ties) equals the label.
double accuracy(const SpikingMLP& net, const Dataset& data, std::size_t timesteps,
                std::size_t chunk = 256);

// ---------------------------------------------------------------------------
// Training

enum class OptimizerKind { sgd_momentum, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double momentum = 0.9;  // SGD
  double beta1 = 0.9;     // Adam
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One parameter tensor's optimizer state.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}
  /// Registers a slot and returns its index.
  std::size_t add_slot(std::size_t numel);
  /// One update of `param` (in place) with gradient `grad`.
  void step(std::size_t slot, std::vector<double>& param, std::span<const double> grad);
  const OptimizerConfig& config() const noexcept { return cfg_; }

 private:
  struct Slot {
    std::vector<double> m, v;
    long long t = 0;
  };
  OptimizerConfig cfg_;
  std::vector<Slot> slots_;
};

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 1e-3;
  /// Learning rate of the alpha optimizer slot; 0 means "same as lr".
  double alpha_lr = 0.0;
  double momentum = 0.9;
  int epochs = 10;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  /// a in the alpha gradient; applied to every quantized layer.
  double grad_scale = 1.0;
  bool freeze_alpha = false;
  std::size_t timesteps = 2;

  /// Throws ContractError unless lr > 0, batch >= 1, epochs >= 0, T >= 1, a > 0.
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;       // mean minibatch loss over the epoch
  double train_acc = 0.0;  // full-pass accuracy after the epoch
  std::vector<std::optional<double>> alpha;  // per layer; mean over channels; empty for non-quantized
};

struct TrainCurve {
  std::vector<EpochRecord> epochs;
  /// `epoch,loss,train_acc,alpha_l1,...`; epoch 0 is the initial state.
  std::string csv() const;
};

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, int epoch, int layer)
      : std::runtime_error(what), epoch_(epoch), layer_(layer) {}
  int epoch() const noexcept { return epoch_; }
  /// 1-based spiking layer, 0 for the classifier / loss, -1 when unknown.
  int layer() const noexcept { return layer_; }

 private:
  int epoch_;
  int layer_;
};

/// Cross-entropy on the logits, BPTT over T, updates `net` in place.
TrainCurve train(SpikingMLP& net, const Dataset& data, const TrainConfig& cfg);

/// Current layer alpha (channel mean) or nullopt for non-quantized kinds.
std::optional<double> layer_alpha(const SpikingLayer& layer);

// ---------------------------------------------------------------------------
// Training-efficiency benchmark: integer net over T steps vs LIF net over T·D.

struct EfficiencyConfig {
  std::vector<std::size_t> widths = {256, 256, 256};
  std::size_t classes = 10;
  int steps = 4;  // D
  std::size_t timesteps = 4;
  std::size_t batch = 32;
  std::size_t batches_per_epoch = 4;
  int trials = 5;
  std::uint64_t seed = 0;
};

struct EfficiencyReport {
  std::vector<double> integer_seconds;  // per trial, one epoch each
  std::vector<double> binary_seconds;
  double integer_median = 0.0;
  double binary_median = 0.0;
  double ratio = 0.0;  // binary / integer
};

EfficiencyReport benchmark_training_efficiency(const EfficiencyConfig& cfg);

}  // namespace spikekit
