#include "spikekit/neurons.hpp"

#include <cmath>

#include "spikekit/errors.hpp"

namespace spikekit {

namespace {

constexpr double kSurrogateHalfWidth = 0.5;

void require_time_major(const Tape& tape, Var x) {
  if (tape.value(x).rank() != 3) {
    throw DimensionError("neuron input must be [T×B×N], got " + shape_str(tape.shape(x)));
  }
}

Var initial_state(Tape& tape, Var x, Var h0) {
  const auto& shape = tape.shape(x);
  if (!h0.valid()) return tape.constant(DenseArray::zeros({shape[1], shape[2]}));
  if (tape.shape(h0) != Shape{shape[1], shape[2]}) {
    throw DimensionError("membrane state " + shape_str(tape.shape(h0)) + " does not fit input " +
                         shape_str(shape));
  }
  return h0;
}

}  // namespace

std::string_view to_string(NeuronKind kind) {
  switch (kind) {
    case NeuronKind::lif: return "lif";
    case NeuronKind::plif: return "plif";
    case NeuronKind::psn: return "psn";
    case NeuronKind::ilif: return "ilif";
    case NeuronKind::nilif: return "nilif";
    case NeuronKind::asn: return "asn";
    case NeuronKind::nasn: return "nasn";
  }
  return "?";
}

std::optional<NeuronKind> parse_neuron_kind(std::string_view name) {
  for (auto k : {NeuronKind::lif, NeuronKind::plif, NeuronKind::psn, NeuronKind::ilif,
                 NeuronKind::nilif, NeuronKind::asn, NeuronKind::nasn}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

NeuronParams NeuronParams::lif(double beta, double v_th) {
  NeuronParams p;
  p.kind = NeuronKind::lif;
  p.beta = beta;
  p.v_th = v_th;
  return p;
}

NeuronParams NeuronParams::plif(double raw, double v_th) {
  NeuronParams p;
  p.kind = NeuronKind::plif;
  p.plif_raw = raw;
  p.v_th = v_th;
  return p;
}

NeuronParams NeuronParams::psn(std::size_t timesteps) {
  NeuronParams p;
  p.kind = NeuronKind::psn;
  std::vector<double> w(timesteps * timesteps, 0.0);
  for (std::size_t i = 0; i < timesteps; ++i) w[i * timesteps + i] = 1.0;
  p.psn_weight = DenseArray({timesteps, timesteps}, std::move(w));
  p.psn_threshold = DenseArray::full({timesteps}, 0.5);
  return p;
}

NeuronParams NeuronParams::ilif(int steps, double beta) {
  auto p = asn(steps, 0.0, beta);
  p.kind = NeuronKind::ilif;
  return p;
}

NeuronParams NeuronParams::nilif(int steps, double beta) {
  auto p = nasn(steps, 0.0, beta);
  p.kind = NeuronKind::nilif;
  return p;
}

NeuronParams NeuronParams::asn(int steps, double alpha, double beta) {
  NeuronParams p;
  p.kind = NeuronKind::asn;
  p.beta = beta;
  p.quantizer.alpha = alpha;
  p.quantizer.steps = steps;
  p.quantizer.normalizer = 1.0;
  return p;
}

NeuronParams NeuronParams::nasn(int steps, double alpha, double beta, double normalizer) {
  auto p = asn(steps, alpha, beta);
  p.kind = NeuronKind::nasn;
  p.quantizer.normalizer = normalizer > 0.0 ? normalizer : static_cast<double>(steps);
  return p;
}

bool NeuronParams::quantized() const {
  return kind == NeuronKind::ilif || kind == NeuronKind::nilif || kind == NeuronKind::asn ||
         kind == NeuronKind::nasn;
}

double NeuronParams::effective_beta() const {
  return kind == NeuronKind::plif ? 1.0 / (1.0 + std::exp(-plif_raw)) : beta;
}

DenseArray NeuronParams::alpha_values() const {
  if (channel_alphas.empty()) return DenseArray::scalar(quantizer.alpha);
  return DenseArray({channel_alphas.size()}, channel_alphas);
}

void NeuronParams::validate() const {
  const std::string name(to_string(kind));
  if (kind != NeuronKind::psn && kind != NeuronKind::plif && !(beta > 0.0 && beta <= 1.0)) {
    throw ContractError(name + ": beta must lie in (0, 1]");
  }
  if (quantized()) {
    quantizer.validate();
    if (!alpha_learnable()) {
      if (quantizer.alpha != 0.0) throw ContractError(name + ": alpha is fixed at 0");
      if (!channel_alphas.empty()) throw ContractError(name + ": no per-channel alpha");
    }
    if (!normalized() && quantizer.normalizer != 1.0) {
      throw ContractError(name + ": un-normalized neuron requires N = 1");
    }
    for (double a : channel_alphas) {
      if (!std::isfinite(a)) throw ContractError(name + ": non-finite alpha");
    }
  } else if (!channel_alphas.empty()) {
    throw ContractError(name + ": alpha only applies to quantized neurons");
  }
  if (kind == NeuronKind::psn) {
    const auto& w = psn_weight;
    if (w.rank() != 2 || w.dim(0) != w.dim(1) || w.dim(0) == 0) {
      throw DimensionError("psn: weight must be T×T, got " + shape_str(w.shape()));
    }
    if (psn_threshold.shape() != Shape{w.dim(0)}) {
      throw DimensionError("psn: threshold must have length T");
    }
  }
  if (!std::isfinite(v_th) || !std::isfinite(plif_raw)) throw ContractError(name + ": non-finite parameter");
}

MembraneState MembraneState::zeros(std::size_t batch, std::size_t width) {
  return {DenseArray::zeros({batch, width})};
}

void MembraneState::reset() { h = DenseArray::zeros(h.shape()); }

NeuronVars bind_neuron(Tape& tape, const NeuronParams& p, bool train) {
  NeuronVars v;
  if (p.quantized()) v.alpha = tape.leaf(p.alpha_values(), train && p.alpha_learnable());
  if (p.kind == NeuronKind::plif) v.plif_raw = tape.leaf(DenseArray::scalar(p.plif_raw), train);
  if (p.kind == NeuronKind::psn) {
    v.psn_weight = tape.leaf(p.psn_weight, train);
    v.psn_threshold = tape.leaf(p.psn_threshold, train);
  }
  return v;
}

NeuronOutput lif_forward(Tape& tape, Var x, const NeuronParams& p, const NeuronVars& vars, Var h0,
                         NeuronTrace* trace) {
  if (p.kind != NeuronKind::lif && p.kind != NeuronKind::plif) {
    throw ContractError("lif_forward on a " + std::string(to_string(p.kind)) + " neuron");
  }
  p.validate();
  require_time_major(tape, x);
  const std::size_t steps = tape.shape(x)[0];
  Var h = initial_state(tape, x, h0);
  Var vth = tape.constant(DenseArray::scalar(p.v_th));
  Var beta;
  if (p.kind == NeuronKind::plif) {
    beta = tape.sigmoid(vars.plif_raw.valid() ? vars.plif_raw
                                              : tape.constant(DenseArray::scalar(p.plif_raw)));
  }
  std::vector<Var> spikes;
  spikes.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Var u = tape.add(h, tape.slice0(x, t));
    Var s = tape.surrogate_step(tape.sub(u, vth), kSurrogateHalfWidth);
    Var reset = p.detach_reset ? tape.detach(s) : s;
    Var residual = tape.sub(u, reset);
    h = p.kind == NeuronKind::plif ? tape.mul(beta, residual) : tape.scale(residual, p.beta);
    spikes.push_back(s);
    if (trace) {
      trace->u.push_back(u);
      trace->s.push_back(s);
      trace->h.push_back(h);
    }
  }
  return {tape.stack0(spikes), h};
}

NeuronOutput asn_forward(Tape& tape, Var x, const NeuronParams& p, const NeuronVars& vars, Var h0,
                         NeuronTrace* trace) {
  if (!p.quantized()) {
    throw ContractError("asn_forward on a " + std::string(to_string(p.kind)) + " neuron");
  }
  p.validate();
  require_time_major(tape, x);
  const std::size_t steps = tape.shape(x)[0];
  const double n = p.quantizer.normalizer;
  Var h = initial_state(tape, x, h0);
  Var alpha = vars.alpha.valid() ? vars.alpha : tape.constant(p.alpha_values());
  std::vector<Var> outs;
  outs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Var u = tape.add(h, tape.slice0(x, t));
    Var s = quantize(tape, u, alpha, p.quantizer);
    Var emitted = n == 1.0 ? s : tape.scale(s, n);
    if (p.detach_reset) emitted = tape.detach(emitted);
    h = tape.scale(tape.sub(u, emitted), p.beta);
    outs.push_back(s);
    if (trace) {
      trace->u.push_back(u);
      trace->s.push_back(s);
      trace->h.push_back(h);
    }
  }
  return {tape.stack0(outs), h};
}

NeuronOutput psn_forward(Tape& tape, Var x, const NeuronParams& p, const NeuronVars& vars) {
  if (p.kind != NeuronKind::psn) throw ContractError("psn_forward on a non-PSN neuron");
  p.validate();
  require_time_major(tape, x);
  const auto shape = tape.shape(x);
  const std::size_t steps = shape[0], cols = shape[1] * shape[2];
  if (p.psn_weight.dim(0) != steps) {
    throw DimensionError("psn: weight is " + shape_str(p.psn_weight.shape()) + " but input has T=" +
                         std::to_string(steps));
  }
  Var w = vars.psn_weight.valid() ? vars.psn_weight : tape.constant(p.psn_weight);
  Var b = vars.psn_threshold.valid() ? vars.psn_threshold : tape.constant(p.psn_threshold);
  Var flat = tape.reshape(x, {steps, cols});
  Var hidden = tape.matmul(w, flat);
  // Threshold broadcast over batch×features, spelled out as B·1ᵀ.
  Var thresholds = tape.matmul(tape.reshape(b, {steps, 1}),
                               tape.constant(DenseArray::ones({1, cols})));
  Var s = tape.surrogate_step(tape.sub(hidden, thresholds), kSurrogateHalfWidth);
  return {tape.reshape(s, shape), Var{}};
}

NeuronOutput neuron_forward(Tape& tape, Var x, const NeuronParams& p, const NeuronVars& vars,
                            Var h0, NeuronTrace* trace) {
  switch (p.kind) {
    case NeuronKind::lif:
    case NeuronKind::plif: return lif_forward(tape, x, p, vars, h0, trace);
    case NeuronKind::psn: return psn_forward(tape, x, p, vars);
    default: return asn_forward(tape, x, p, vars, h0, trace);
  }
}

namespace {

NeuronRun run_from(const DenseArray& x, const NeuronParams& p, MembraneState* state) {
  if (x.rank() != 3) throw DimensionError("neuron input must be [T×B×N], got " + shape_str(x.shape()));
  Tape tape;
  Var xv = tape.constant(x);
  Var h0;
  if (state && state->h.numel() > 0) h0 = tape.constant(state->h);
  NeuronTrace trace;
  auto vars = bind_neuron(tape, p, false);
  auto out = neuron_forward(tape, xv, p, vars, h0, &trace);
  NeuronRun run{tape.value(out.activations), {}, {}};
  for (Var u : trace.u) run.u.push_back(tape.value(u));
  for (Var h : trace.h) run.h.push_back(tape.value(h));
  if (state && out.final_h.valid()) state->h = tape.value(out.final_h);
  return run;
}

}  // namespace

NeuronCell::NeuronCell(NeuronParams params) : params_(std::move(params)) { params_.validate(); }

NeuronRun NeuronCell::run(const DenseArray& x) {
  if (x.rank() == 3 && state_.h.numel() > 0 && state_.h.shape() != Shape{x.dim(1), x.dim(2)}) {
    throw DimensionError("carried membrane state " + shape_str(state_.h.shape()) +
                         " does not fit input " + shape_str(x.shape()));
  }
  return run_from(x, params_, &state_);
}

NeuronRun run_neuron(const DenseArray& x, const NeuronParams& p) { return run_from(x, p, nullptr); }

}  // namespace spikekit
