#pragma once

// Neuron zoo over time-major inputs [T×B×N].
//
// Recurrent kinds step U[t] = H[t-1] + X[t], emit S[t], then reset-then-decay
// H[t] = beta * (U[t] - S[t]*N):
//   LIF / PLIF   S = Heaviside(U - V_th), rectangular surrogate |U - V_th| <= 0.5
//   ILIF / ASN   S = clamp(round(U), ceil(alpha), ceil(alpha) + D)          (N = 1)
//   NILIF / NASN S = clamp(round(U), ceil(alpha), ceil(alpha) + D) / N
// PSN has no recurrence: H = W·X over the time axis, S = Heaviside(H - B).
//
// ILIF and NILIF are the ASN / NASN code path with alpha fixed at 0 and not
// trainable.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spikekit/quantizer.hpp"
#include "spikekit/tape.hpp"
#include "spikekit/tensor.hpp"

namespace spikekit {

enum class NeuronKind { lif, plif, psn, ilif, nilif, asn, nasn };

std::string_view to_string(NeuronKind kind);
std::optional<NeuronKind> parse_neuron_kind(std::string_view name);

struct NeuronParams {
  NeuronKind kind = NeuronKind::asn;
  double beta = 0.5;
  double v_th = 1.0;              // LIF / PLIF
  QuantizerSpec quantizer;        // ILIF / NILIF / ASN / NASN
  double plif_raw = 0.0;          // PLIF: beta = sigmoid(plif_raw)
  DenseArray psn_weight;          // PSN: [T×T]
  DenseArray psn_threshold;       // PSN: [T]
  bool detach_reset = false;
  /// Optional per-channel alpha (ASN / NASN); empty means layer-wise quantizer.alpha.
  std::vector<double> channel_alphas;

  static NeuronParams lif(double beta = 0.5, double v_th = 1.0);
  static NeuronParams plif(double raw = 0.0, double v_th = 1.0);
  /// W = identity, B = 0.5.
  static NeuronParams psn(std::size_t timesteps);
  static NeuronParams ilif(int steps, double beta = 0.5);
  static NeuronParams nilif(int steps, double beta = 0.5);
  static NeuronParams asn(int steps, double alpha = 0.0, double beta = 0.5);
  /// N defaults to D.
  static NeuronParams nasn(int steps, double alpha = 0.0, double beta = 0.5, double normalizer = 0.0);

  bool quantized() const;
  bool normalized() const { return kind == NeuronKind::nilif || kind == NeuronKind::nasn; }
  bool alpha_learnable() const { return kind == NeuronKind::asn || kind == NeuronKind::nasn; }
  double normalizer() const { return quantized() ? quantizer.normalizer : 1.0; }
  /// PLIF reads beta through its sigmoid; everyone else uses `beta`.
  double effective_beta() const;
  /// [1] layer-wise or [channels] per-channel alpha values.
  DenseArray alpha_values() const;

  /// Throws ContractError on any inconsistent field for the declared kind.
  void validate() const;
};

struct MembraneState {
  DenseArray h;  // [B×N]

  static MembraneState zeros(std::size_t batch, std::size_t width);
  /// H := 0, shape kept.
  void reset();
};

/// Tape leaves holding a neuron's learnable quantities for one forward pass.
struct NeuronVars {
  Var alpha;
  Var plif_raw;
  Var psn_weight;
  Var psn_threshold;
};

/// Creates the leaves for `p`. Learnable ones get requires_grad when `train`.
NeuronVars bind_neuron(Tape& tape, const NeuronParams& p, bool train);

/// Per-step U, S, H nodes (recurrent kinds only).
struct NeuronTrace {
  std::vector<Var> u, s, h;
};

struct NeuronOutput {
  Var activations;  // [T×B×N]
  Var final_h;      // [B×N]; invalid for PSN
};

NeuronOutput lif_forward(Tape& tape, Var x, const NeuronParams& p, const NeuronVars& vars, Var h0,
                         NeuronTrace* trace = nullptr);
NeuronOutput asn_forward(Tape& tape, Var x, const NeuronParams& p, const NeuronVars& vars, Var h0,
                         NeuronTrace* trace = nullptr);
NeuronOutput psn_forward(Tape& tape, Var x, const NeuronParams& p, const NeuronVars& vars);
/// Dispatches on p.kind.
NeuronOutput neuron_forward(Tape& tape, Var x, const NeuronParams& p, const NeuronVars& vars,
                            Var h0, NeuronTrace* trace = nullptr);

/// Eager evaluation result with the per-step membrane record.
struct NeuronRun {
  DenseArray activations;     // [T×B×N]
  std::vector<DenseArray> u;  // per step [B×N]; empty for PSN
  std::vector<DenseArray> h;
};

/// A neuron layer that owns its membrane state across calls.
class NeuronCell {
 public:
  explicit NeuronCell(NeuronParams params);

  const NeuronParams& params() const noexcept { return params_; }
  const MembraneState& state() const noexcept { return state_; }
  /// Runs x [T×B×N] starting from the carried state and stores the final H.
  NeuronRun run(const DenseArray& x);
  void reset() { state_.reset(); }

 private:
  NeuronParams params_;
  MembraneState state_;
};

/// Stateless convenience: fresh zero state.
NeuronRun run_neuron(const DenseArray& x, const NeuronParams& p);

}  // namespace spikekit
