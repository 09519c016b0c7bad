#include "spikekit/folding.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "spikekit/errors.hpp"
#include "spikekit/kernels.hpp"

namespace spikekit {

namespace k = kernels::parallel;

int SpikeTrain::block_sum(std::size_t t, std::size_t b, std::size_t n) const {
  int s = 0;
  for (int d = 0; d < steps; ++d) s += at(t, d, b, n);
  return s;
}

std::size_t SpikeTrain::spike_count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

void SpikeTrain::validate() const {
  if (steps < 1) throw EquivalenceError("spike train with D < 1");
  if (data.size() != substeps() * batch * width) throw EquivalenceError("spike train size mismatch");
  for (auto v : data) {
    if (v > 1) throw EquivalenceError("spike train holds a non-binary value");
  }
}

SpikeTrain unfold(const DenseArray& s, std::span<const double> alpha_ceil, int steps, double normalizer,
                  Placement placement, std::uint64_t seed) {
  if (s.rank() != 3) throw DimensionError("unfold expects [T×B×N], got " + shape_str(s.shape()));
  if (steps < 1) throw FoldingError("unfold needs D >= 1");
  const std::size_t width = s.dim(2);
  if (alpha_ceil.size() != 1 && alpha_ceil.size() != width) {
    throw DimensionError("unfold: alpha ceilings must be layer-wise or one per channel");
  }
  SpikeTrain train{s.dim(0), steps, s.dim(1), width, {}};
  const auto D = static_cast<std::size_t>(steps);
  train.data.assign(train.substeps() * train.batch * width, 0);
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> block(D);
  for (std::size_t t = 0; t < train.timesteps; ++t) {
    for (std::size_t b = 0; b < train.batch; ++b) {
      for (std::size_t n = 0; n < width; ++n) {
        const double c = alpha_ceil[alpha_ceil.size() == 1 ? 0 : n];
        const double raw = s.at(t, b, n) * normalizer - c;
        const double count = std::nearbyint(raw);
        if (std::abs(raw - count) > 1e-9 || count < 0.0 || count > steps) {
          throw FoldingError("activation " + std::to_string(s.at(t, b, n)) + " at (t=" + std::to_string(t) +
                             ", b=" + std::to_string(b) + ", n=" + std::to_string(n) +
                             ") gives S1 = " + std::to_string(raw) + ", not an integer in [0, " +
                             std::to_string(steps) + "]; integerized bounds are required");
        }
        const auto ones = static_cast<std::size_t>(count);
        std::fill(block.begin(), block.end(), std::uint8_t{0});
        std::fill(block.begin(), block.begin() + static_cast<std::ptrdiff_t>(ones), std::uint8_t{1});
        if (placement == Placement::shuffled) std::shuffle(block.begin(), block.end(), rng);
        for (std::size_t d = 0; d < D; ++d) {
          train.data[((t * D + d) * train.batch + b) * width + n] = block[d];
        }
      }
    }
  }
  return train;
}

SpikeTrain unfold(const DenseArray& s, long long alpha_ceil, int steps, double normalizer) {
  const double c = static_cast<double>(alpha_ceil);
  return unfold(s, std::span<const double>(&c, 1), steps, normalizer);
}

DenseArray block_sums(const SpikeTrain& train) {
  std::vector<double> out(train.timesteps * train.batch * train.width);
  for (std::size_t t = 0; t < train.timesteps; ++t)
    for (std::size_t b = 0; b < train.batch; ++b)
      for (std::size_t n = 0; n < train.width; ++n)
        out[(t * train.batch + b) * train.width + n] = train.block_sum(t, b, n);
  return DenseArray({train.timesteps, train.batch, train.width}, std::move(out));
}

namespace {

std::vector<double> alpha_ceilings(const NeuronParams& p) {
  const auto a = p.alpha_values();
  std::vector<double> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::ceil(a[i]);
  return c;
}

void require_foldable(const NeuronParams& p, const std::string& where) {
  if (!p.quantized()) {
    throw ContractError(where + ": " + std::string(to_string(p.kind)) +
                        " neurons emit binary spikes and have nothing to fold");
  }
  if (p.quantizer.bound_mode == BoundMode::continuous) {
    throw ContractError(where + ": continuous bound mode emits non-integer activations, so the network "
                        "has no exact spike-driven form; retrain with integerized bounds");
  }
}

}  // namespace

FoldedLayer fold_layer(const DenseArray& weight, const NeuronParams& source) {
  if (!source.quantized()) {
    throw ContractError("fold_layer: source neuron must be ILIF, NILIF, ASN or NASN");
  }
  source.validate();
  if (weight.rank() != 2) throw DimensionError("fold_layer: weight must be [out × in]");
  const std::size_t out = weight.dim(0), in = weight.dim(1);
  const auto ceil = alpha_ceilings(source);
  if (ceil.size() != 1 && ceil.size() != in) {
    throw DimensionError("fold_layer: per-channel alpha count does not match the weight's input width");
  }
  const double n = source.normalizer();
  std::vector<double> w(weight.values());
  if (n != 1.0) {
    for (auto& v : w) v /= n;
  }
  std::vector<double> c(out, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    double acc = 0.0;
    for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * ceil[ceil.size() == 1 ? 0 : i];
    c[o] = acc;
  }
  return {DenseArray({out, in}, std::move(w)), DenseArray({out}, std::move(c))};
}

void FoldedNet::validate() const {
  if (neurons.empty()) throw ContractError("folded network has no layers");
  if (stages.size() != neurons.size()) throw ContractError("folded network needs one stage per neuron");
  if (input_weight.rank() != 2) throw DimensionError("input weight must be [out × in]");
  std::size_t width = input_weight.dim(0);
  for (std::size_t l = 0; l < neurons.size(); ++l) {
    require_foldable(neurons[l], "layer " + std::to_string(l + 1));
    neurons[l].validate();
    const auto& ca = neurons[l].channel_alphas;
    if (!ca.empty() && ca.size() != width) throw DimensionError("channel alpha count mismatch");
    const auto& st = stages[l];
    if (st.weight.rank() != 2 || st.weight.dim(1) != width) {
      throw DimensionError("stage " + std::to_string(l + 1) + " weight does not chain");
    }
    if (st.constant.shape() != Shape{st.weight.dim(0)}) {
      throw DimensionError("stage " + std::to_string(l + 1) + " constant must have one entry per row");
    }
    width = st.weight.dim(0);
  }
  if (classifier_bias.shape() != Shape{width}) throw DimensionError("classifier bias size mismatch");
}

FoldedNet fold_net(const SpikingMLP& net) {
  net.validate();
  FoldedNet f;
  f.input_weight = net.layers.front().weight;
  f.input_weight_frozen = net.layers.front().frozen_weight;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& p = net.layers[l].neuron;
    require_foldable(p, "layer " + std::to_string(l + 1));
    f.neurons.push_back(p);
    const DenseArray& consumer =
        l + 1 < net.layers.size() ? net.layers[l + 1].weight : net.classifier_weight;
    f.stages.push_back(fold_layer(consumer, p));
  }
  f.classifier_bias = net.classifier_bias;
  return f;
}

SpikingMLP unfold_net(const FoldedNet& folded) {
  folded.validate();
  SpikingMLP net;
  net.layers.push_back({folded.input_weight, folded.neurons[0], folded.input_weight_frozen});
  auto restore = [](const FoldedLayer& st, const NeuronParams& source) {
    std::vector<double> w(st.weight.values());
    const double n = source.normalizer();
    if (n != 1.0) {
      for (auto& v : w) v *= n;
    }
    return DenseArray(st.weight.shape(), std::move(w));
  };
  for (std::size_t l = 0; l + 1 < folded.depth(); ++l) {
    net.layers.push_back({restore(folded.stages[l], folded.neurons[l]), folded.neurons[l + 1], false});
  }
  net.classifier_weight = restore(folded.stages.back(), folded.neurons.back());
  net.classifier_bias = folded.classifier_bias;
  net.validate();
  return net;
}

namespace {

/// Integer-mode neuron over reconstructed inputs, same arithmetic as the training path.
DenseArray run_quantized(const NeuronParams& p, const DenseArray& x) {
  const std::size_t steps = x.dim(0), slice = x.dim(1) * x.dim(2);
  const auto alphas = p.alpha_values();
  kernels::QuantArgs q{alphas.data(), p.quantizer.steps, p.quantizer.normalizer, true};
  const double n = p.quantizer.normalizer;
  std::vector<double> h(slice, 0.0), u(slice), s(slice), e(slice), out;
  out.reserve(steps * slice);
  for (std::size_t t = 0; t < steps; ++t) {
    std::span<const double> xt(x.values().data() + t * slice, slice);
    k::binary(kernels::Binary::add, h, xt, u);
    k::quantize_forward(u, q, s);
    if (n == 1.0) e = s;
    else k::scale(s, n, e);
    k::binary(kernels::Binary::sub, u, e, h);
    k::scale(h, p.beta, h);
    out.insert(out.end(), s.begin(), s.end());
  }
  return DenseArray({x.dim(0), x.dim(1), x.dim(2)}, std::move(out));
}

/// X[t] = W' · (spikes of step t) + C, one column accumulate per event.
DenseArray accumulate_events(const SpikeTrain& train, const FoldedLayer& stage) {
  const std::size_t out = stage.weight.dim(0), in = stage.weight.dim(1);
  // Column-major copy so each event reads one contiguous column.
  std::vector<double> cols(in * out);
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i) cols[i * out + o] = stage.weight[o * in + i];
  const auto& c = stage.constant.values();
  const std::size_t T = train.timesteps, B = train.batch;
  std::vector<double> x(T * B * out, 0.0);
  const auto rows = static_cast<std::ptrdiff_t>(T * B);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const auto t = static_cast<std::size_t>(r) / B, b = static_cast<std::size_t>(r) % B;
    double* acc = x.data() + static_cast<std::size_t>(r) * out;
    for (int d = 0; d < train.steps; ++d) {
      for (std::size_t n = 0; n < in; ++n) {
        if (!train.at(t, d, b, n)) continue;
        const double* col = cols.data() + n * out;
        for (std::size_t o = 0; o < out; ++o) acc[o] += col[o];
      }
    }
    for (std::size_t o = 0; o < out; ++o) acc[o] += c[o];
  }
  return DenseArray({T, B, out}, std::move(x));
}

}  // namespace

InferenceResult spike_inference(const FoldedNet& folded, const DenseArray& x, const InferenceOptions& options) {
  folded.validate();
  if (x.rank() != 3 || x.dim(2) != folded.input_weight.dim(1)) {
    throw DimensionError("spike_inference input must be [T×B×" + std::to_string(folded.input_weight.dim(1)) +
                         "], got " + shape_str(x.shape()));
  }
  const std::size_t T = x.dim(0), B = x.dim(1), in = x.dim(2), out0 = folded.input_weight.dim(0);
  InferenceResult r;
  {
    std::vector<double> pre(T * B * out0);
    k::gemm(false, true, T * B, out0, in, x.data(), folded.input_weight.data(), pre);
    r.pre.push_back(DenseArray({T, B, out0}, std::move(pre)));
  }
  DenseArray readout_x;
  for (std::size_t l = 0; l < folded.depth(); ++l) {
    const auto& p = folded.neurons[l];
    const auto s = run_quantized(p, r.pre.back());
    const auto ceil = alpha_ceilings(p);
    try {
      r.trains.push_back(unfold(s, ceil, p.quantizer.steps, p.normalizer(), options.placement,
                                options.seed + l));
      r.trains.back().validate();
    } catch (const FoldingError& e) {
      throw EquivalenceError("layer " + std::to_string(l + 1) + " produced an invalid spike train: " + e.what());
    }
    auto next = accumulate_events(r.trains.back(), folded.stages[l]);
    if (l + 1 < folded.depth()) r.pre.push_back(std::move(next));
    else readout_x = std::move(next);
  }
  const std::size_t classes = readout_x.dim(2);
  std::vector<double> logits(B * classes, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < B * classes; ++i) logits[i] += readout_x[t * B * classes + i];
  for (std::size_t i = 0; i < B * classes; ++i) {
    logits[i] = logits[i] / static_cast<double>(T) + folded.classifier_bias[i % classes];
  }
  r.logits = DenseArray({B, classes}, std::move(logits));
  return r;
}

std::string EquivalenceReport::first_failure() const {
  for (const auto& l : layers) {
    if (!l.pass) return l.name;
  }
  return {};
}

EquivalenceReport verify_equivalence(const SpikingMLP& net, const FoldedNet& folded, const DenseArray& x,
                                     double tolerance, const InferenceOptions& options) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) require_foldable(net.layers[l].neuron, "verify layer " + std::to_string(l + 1));
  for (std::size_t l = 0; l < folded.depth(); ++l) require_foldable(folded.neurons[l], "verify layer " + std::to_string(l + 1));
  if (folded.depth() != net.layers.size()) throw ContractError("verify: network and fold differ in depth");
  if (!(tolerance >= 0.0)) throw ContractError("verify: tolerance must be >= 0");
  const auto train = evaluate_net(net, x);
  const auto infer = spike_inference(folded, x, options);
  EquivalenceReport rep;
  rep.tolerance = tolerance;
  for (std::size_t l = 0; l < folded.depth(); ++l) {
    const auto& p = folded.neurons[l];
    // Emitted activation as seen by training: (S1 + ceil(alpha)) / N.
    const auto counts = block_sums(infer.trains[l]);
    const auto ceil = alpha_ceilings(p);
    std::vector<double> act(counts.numel());
    for (std::size_t i = 0; i < act.size(); ++i) {
      act[i] = (counts[i] + ceil[ceil.size() == 1 ? 0 : i % counts.dim(2)]) / p.normalizer();
    }
    const double dx = max_abs_diff(train.pre[l], infer.pre[l]);
    const double ds = max_abs_diff(train.activations[l], DenseArray(counts.shape(), std::move(act)));
    const double dev = std::max(dx, ds);
    rep.layers.push_back({"layer" + std::to_string(l + 1), dev, dev <= tolerance});
  }
  const double dl = max_abs_diff(train.logits, infer.logits);
  rep.layers.push_back({"readout", dl, dl <= tolerance});
  rep.pass = std::all_of(rep.layers.begin(), rep.layers.end(), [](const auto& l) { return l.pass; });
  return rep;
}

EquivalenceReport verify_equivalence(const SpikingMLP& net, const DenseArray& x, double tolerance) {
  return verify_equivalence(net, fold_net(net), x, tolerance);
}

// ---------------------------------------------------------------------------
// SPKF

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void block(const DenseArray& a) {
    for (double v : a.values()) f64(v);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes(b) {}
  std::size_t pos = 0;
  std::span<const std::uint8_t> bytes;

  void need(std::size_t n, const char* what) const {
    if (bytes.size() - pos < n) {
      throw FormatError(std::string("SPKF truncated while reading ") + what, static_cast<long long>(pos));
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes[pos++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes[pos + static_cast<std::size_t>(i)]} << (8 * i);
    pos += 4;
    return v;
  }
  std::int32_t i32(const char* what) { return static_cast<std::int32_t>(u32(what)); }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t{bytes[pos + static_cast<std::size_t>(i)]} << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    if (!std::isfinite(v)) throw FormatError(std::string("SPKF non-finite ") + what, static_cast<long long>(pos));
    pos += 8;
    return v;
  }
  std::vector<double> f64s(std::size_t n, const char* what) {
    if (n > (bytes.size() - pos) / 8) {
      throw FormatError(std::string("SPKF truncated while reading ") + what, static_cast<long long>(pos));
    }
    std::vector<double> v(n);
    for (auto& x : v) x = f64(what);
    return v;
  }
};

constexpr NeuronKind kKindCodes[] = {NeuronKind::lif, NeuronKind::plif, NeuronKind::psn, NeuronKind::ilif,
                                     NeuronKind::nilif, NeuronKind::asn, NeuronKind::nasn};

std::uint8_t kind_code(NeuronKind k) {
  for (std::uint8_t i = 0; i < std::size(kKindCodes); ++i) {
    if (kKindCodes[i] == k) return i;
  }
  return 0xff;
}

void write_neuron(Writer& w, const NeuronParams& p) {
  w.u8(kind_code(p.kind));
  w.u8(p.quantizer.bound_mode == BoundMode::integerized ? 1 : 0);
  w.u8(p.detach_reset ? 1 : 0);
  w.u8(0);
  w.i32(p.quantizer.steps);
  w.f64(p.quantizer.alpha);
  w.f64(p.quantizer.normalizer);
  w.f64(p.quantizer.grad_scale);
  w.f64(p.beta);
  w.f64(p.v_th);
  w.f64(p.plif_raw);
  w.u32(static_cast<std::uint32_t>(p.channel_alphas.size()));
  for (double a : p.channel_alphas) w.f64(a);
  const std::uint32_t psn_t = p.kind == NeuronKind::psn ? static_cast<std::uint32_t>(p.psn_weight.dim(0)) : 0;
  w.u32(psn_t);
  if (psn_t) {
    w.block(p.psn_weight);
    w.block(p.psn_threshold);
  }
}

NeuronParams read_neuron(Reader& r) {
  NeuronParams p;
  const std::size_t kind_at = r.pos;
  const auto code = r.u8("neuron kind");
  if (code >= std::size(kKindCodes)) throw FormatError("SPKF unknown neuron kind " + std::to_string(code), static_cast<long long>(kind_at));
  p.kind = kKindCodes[code];
  const std::size_t mode_at = r.pos;
  const auto mode = r.u8("bound mode");
  if (mode > 1) throw FormatError("SPKF bad bound mode", static_cast<long long>(mode_at));
  p.quantizer.bound_mode = mode ? BoundMode::integerized : BoundMode::continuous;
  const std::size_t detach_at = r.pos;
  const auto detach = r.u8("detach flag");
  if (detach > 1) throw FormatError("SPKF bad detach flag", static_cast<long long>(detach_at));
  p.detach_reset = detach == 1;
  const std::size_t pad_at = r.pos;
  if (r.u8("reserved byte") != 0) throw FormatError("SPKF reserved byte must be 0", static_cast<long long>(pad_at));
  p.quantizer.steps = r.i32("steps");
  p.quantizer.alpha = r.f64("alpha");
  p.quantizer.normalizer = r.f64("normalizer");
  p.quantizer.grad_scale = r.f64("grad scale");
  p.beta = r.f64("beta");
  p.v_th = r.f64("v_th");
  p.plif_raw = r.f64("plif raw");
  const auto na = r.u32("channel alpha count");
  p.channel_alphas = r.f64s(na, "channel alphas");
  const auto psn_t = r.u32("psn size");
  if (psn_t) {
    const std::size_t t = psn_t;
    p.psn_weight = DenseArray({t, t}, r.f64s(t * t, "psn weight"));
    p.psn_threshold = DenseArray({t}, r.f64s(t, "psn threshold"));
  }
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_spkf(const FoldedNet& folded) {
  folded.validate();
  Writer w;
  for (char c : std::string_view("SPKF")) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kSpkfVersion);
  w.u32(static_cast<std::uint32_t>(folded.depth()));
  for (std::size_t l = 0; l < folded.depth(); ++l) {
    const DenseArray& weight = l == 0 ? folded.input_weight : folded.stages[l - 1].weight;
    const DenseArray constant = l == 0 ? DenseArray::zeros({weight.dim(0)}) : folded.stages[l - 1].constant;
    w.u32(static_cast<std::uint32_t>(weight.dim(0)));
    w.u32(static_cast<std::uint32_t>(weight.dim(1)));
    w.u32(l == 0 && folded.input_weight_frozen ? 1u : 0u);
    w.block(weight);
    w.block(constant);
    write_neuron(w, folded.neurons[l]);
  }
  const auto& ro = folded.stages.back();
  w.u32(static_cast<std::uint32_t>(ro.weight.dim(0)));
  w.u32(static_cast<std::uint32_t>(ro.weight.dim(1)));
  w.block(ro.weight);
  w.block(ro.constant);
  w.block(folded.classifier_bias);
  return w.out;
}

FoldedNet decode_spkf(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), "SPKF", 4) != 0) throw FormatError("not an SPKF file (bad magic)", 0);
  r.pos = 4;
  const auto version = r.u32("version");
  if (version != kSpkfVersion) {
    throw FormatError("unsupported SPKF version " + std::to_string(version), 4);
  }
  const std::size_t count_at = r.pos;
  const auto layers = r.u32("layer count");
  if (layers == 0) throw FormatError("SPKF with zero layers", static_cast<long long>(count_at));
  FoldedNet f;
  for (std::uint32_t l = 0; l < layers; ++l) {
    const std::size_t rows = r.u32("rows"), cols = r.u32("cols");
    const std::size_t flags_at = r.pos;
    const auto flags = r.u32("layer flags");
    if (flags > 1 || (flags == 1 && l != 0)) throw FormatError("SPKF bad layer flags", static_cast<long long>(flags_at));
    DenseArray weight({rows, cols}, r.f64s(rows * cols, "weights"));
    const std::size_t const_at = r.pos;
    DenseArray constant({rows}, r.f64s(rows, "constants"));
    if (l == 0) {
      f.input_weight = std::move(weight);
      f.input_weight_frozen = flags == 1;
      if (constant != DenseArray::zeros({rows})) {
        throw FormatError("SPKF first layer constants must be zero", static_cast<long long>(const_at));
      }
    } else {
      f.stages.push_back({std::move(weight), std::move(constant)});
    }
    f.neurons.push_back(read_neuron(r));
  }
  const std::size_t rows = r.u32("readout rows"), cols = r.u32("readout cols");
  DenseArray weight({rows, cols}, r.f64s(rows * cols, "readout weights"));
  DenseArray constant({rows}, r.f64s(rows, "readout constants"));
  f.stages.push_back({std::move(weight), std::move(constant)});
  f.classifier_bias = DenseArray({rows}, r.f64s(rows, "classifier bias"));
  if (r.pos != bytes.size()) throw FormatError("trailing bytes after SPKF payload", static_cast<long long>(r.pos));
  try {
    f.validate();
  } catch (const std::exception& e) {
    throw FormatError(std::string("SPKF content is inconsistent: ") + e.what());
  }
  return f;
}

void save_spkf(const FoldedNet& folded, const std::filesystem::path& path) {
  write_file(path, encode_spkf(folded));
}

FoldedNet load_spkf(const std::filesystem::path& path) { return decode_spkf(read_file(path)); }

}  // namespace spikekit
