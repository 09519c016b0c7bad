#include "spikekit/network.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <charconv>
#include <numeric>
#include <random>

namespace spikekit {

namespace {

DenseArray gaussian(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = stddev * dist(rng);
  return DenseArray(std::move(shape), std::move(v));
}

DenseArray identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return DenseArray({n, n}, std::move(v));
}

/// [T×B×in] · Wᵀ -> [T×B×out].
Var time_linear(Tape& tape, Var x, Var w) {
  const auto shape = tape.shape(x);
  const std::size_t out = tape.shape(w)[0];
  Var flat = tape.reshape(x, {shape[0] * shape[1], shape[2]});
  return tape.reshape(tape.matmul(flat, w, true), {shape[0], shape[1], out});
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void SpikingMLP::validate() const {
  if (layers.empty()) throw ContractError("network has no spiking layers");
  std::size_t width = layers.front().weight.rank() == 2 ? layers.front().in_width() : 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weight.rank() != 2) {
      throw DimensionError("layer " + std::to_string(l + 1) + " weight must be [out × in]");
    }
    if (layer.in_width() != width) {
      throw DimensionError("layer " + std::to_string(l + 1) + " expects " +
                           std::to_string(layer.in_width()) + " inputs but receives " +
                           std::to_string(width));
    }
    layer.neuron.validate();
    const auto& ca = layer.neuron.channel_alphas;
    if (!ca.empty() && ca.size() != layer.out_width()) {
      throw DimensionError("layer " + std::to_string(l + 1) + " has " + std::to_string(ca.size()) +
                           " channel alphas for " + std::to_string(layer.out_width()) + " units");
    }
    width = layer.out_width();
  }
  if (classifier_weight.rank() != 2 || classifier_weight.dim(1) != width) {
    throw DimensionError("classifier weight must be [classes × " + std::to_string(width) + "]");
  }
  if (classifier_bias.shape() != Shape{classifier_weight.dim(0)}) {
    throw DimensionError("classifier bias must have one entry per class");
  }
}

SpikingMLP make_mlp(const NetInit& init) {
  if (init.widths.size() < 2) throw ContractError("NetInit.widths needs {in, h1, ...}");
  if (init.classes < 2) throw ContractError("a classifier needs at least two classes");
  std::mt19937_64 rng(init.seed);
  SpikingMLP net;
  if (init.identity_input) {
    net.layers.push_back({identity(init.widths[0]), init.neuron, true});
  }
  for (std::size_t l = 1; l < init.widths.size(); ++l) {
    const double fan_in = static_cast<double>(init.widths[l - 1]);
    net.layers.push_back(
        {gaussian({init.widths[l], init.widths[l - 1]}, init.weight_gain / std::sqrt(fan_in), rng),
         init.neuron, false});
  }
  const double last = static_cast<double>(init.widths.back());
  net.classifier_weight = gaussian({init.classes, init.widths.back()},
                                   init.classifier_gain / std::sqrt(last), rng);
  net.classifier_bias = DenseArray::zeros({init.classes});
  net.validate();
  return net;
}

NetVars bind_net(Tape& tape, const SpikingMLP& net, bool train, bool freeze_alpha) {
  NetVars v;
  for (const auto& layer : net.layers) {
    v.weights.push_back(tape.leaf(layer.weight, train && !layer.frozen_weight));
    auto nv = bind_neuron(tape, layer.neuron, train);
    if (freeze_alpha && nv.alpha.valid()) nv.alpha = tape.constant(layer.neuron.alpha_values());
    v.neurons.push_back(nv);
  }
  v.classifier_weight = tape.leaf(net.classifier_weight, train);
  v.classifier_bias = tape.leaf(net.classifier_bias.reshaped({1, net.classes()}), train);
  return v;
}

NetForward forward_net(Tape& tape, const SpikingMLP& net, const NetVars& vars, Var x) {
  const auto& xs = tape.shape(x);
  if (xs.size() != 3 || xs[2] != net.input_width()) {
    throw DimensionError("network input must be [T×B×" + std::to_string(net.input_width()) +
                         "], got " + shape_str(xs));
  }
  NetForward f;
  Var cur = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    try {
      Var pre = time_linear(tape, cur, vars.weights[l]);
      auto out = neuron_forward(tape, pre, net.layers[l].neuron, vars.neurons[l], Var{});
      f.pre.push_back(pre);
      f.activations.push_back(out.activations);
      cur = out.activations;
    } catch (const NonFiniteError& e) {
      throw NonFiniteLayerError("layer " + std::to_string(l + 1) + ": " + e.what(),
                                static_cast<int>(l + 1));
    }
  }
  try {
    f.readout = tape.mean0(cur);
    const std::size_t batch = tape.shape(f.readout)[0];
    Var bias = tape.matmul(tape.constant(DenseArray::ones({batch, 1})), vars.classifier_bias);
    f.logits = tape.add(tape.matmul(f.readout, vars.classifier_weight, true), bias);
  } catch (const NonFiniteError& e) {
    throw NonFiniteLayerError(std::string("classifier: ") + e.what(), 0);
  }
  return f;
}

NetEval evaluate_net(const SpikingMLP& net, const DenseArray& x) {
  Tape tape;
  auto vars = bind_net(tape, net, false);
  auto f = forward_net(tape, net, vars, tape.constant(x));
  NetEval e;
  for (Var v : f.pre) e.pre.push_back(tape.value(v));
  for (Var v : f.activations) e.activations.push_back(tape.value(v));
  e.readout = tape.value(f.readout);
  e.logits = tape.value(f.logits);
  return e;
}

DenseArray forward_logits(const SpikingMLP& net, const DenseArray& x) {
  Tape tape;
  auto vars = bind_net(tape, net, false);
  return tape.value(forward_net(tape, net, vars, tape.constant(x)).logits);
}

namespace {

std::size_t argmax_row(const DenseArray& logits, std::size_t row) {
  const std::size_t c = logits.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j) {
    if (logits[row * c + j] > logits[row * c + best]) best = j;
  }
  return best;
}

/// Mean loss and accuracy over the full dataset without updates.
std::pair<double, double> full_pass(const SpikingMLP& net, const Dataset& data, std::size_t timesteps,
                                    std::size_t chunk) {
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Tape tape;
    auto vars = bind_net(tape, net, false);
    auto f = forward_net(tape, net, vars, tape.constant(encode_temporal(data.rows(idx), timesteps)));
    std::vector<int> labels(data.labels.begin() + static_cast<std::ptrdiff_t>(start),
                            data.labels.begin() + static_cast<std::ptrdiff_t>(end));
    loss_sum += tape.value(tape.cross_entropy(f.logits, labels)).item() * static_cast<double>(idx.size());
    const auto& logits = tape.value(f.logits);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      correct += static_cast<int>(argmax_row(logits, i)) == labels[i];
    }
  }
  const double n = static_cast<double>(data.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

}  // namespace

double accuracy(const SpikingMLP& net, const Dataset& data, std::size_t timesteps, std::size_t chunk) {
  if (data.size() == 0) throw ContractError("accuracy of an empty dataset");
  return full_pass(net, data, timesteps, chunk).second;
}

// ---------------------------------------------------------------------------
// Optimizers

std::size_t Optimizer::add_slot(std::size_t numel) {
  slots_.push_back({std::vector<double>(numel, 0.0), std::vector<double>(numel, 0.0), 0});
  return slots_.size() - 1;
}

void Optimizer::step(std::size_t slot, std::vector<double>& param, std::span<const double> grad) {
  auto& s = slots_.at(slot);
  if (param.size() != s.m.size() || grad.size() != s.m.size()) {
    throw DimensionError("optimizer slot size mismatch");
  }
  ++s.t;
  if (cfg_.kind == OptimizerKind::sgd_momentum) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      s.m[i] = cfg_.momentum * s.m[i] + grad[i];
      param[i] -= cfg_.lr * s.m[i];
    }
    return;
  }
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * grad[i];
    s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double mhat = s.m[i] / c1;
    const double vhat = s.v[i] / c2;
    param[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ContractError("train: lr must be > 0");
  if (!(alpha_lr >= 0.0) || !std::isfinite(alpha_lr)) throw ContractError("train: alpha_lr must be >= 0");
  if (batch < 1) throw ContractError("train: batch must be >= 1");
  if (epochs < 0) throw ContractError("train: epochs must be >= 0");
  if (timesteps < 1) throw ContractError("train: timesteps must be >= 1");
  if (!(grad_scale > 0.0)) throw ContractError("train: grad_scale must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("train: momentum must lie in [0, 1)");
}

std::optional<double> layer_alpha(const SpikingLayer& layer) {
  const auto& p = layer.neuron;
  if (!p.quantized()) return std::nullopt;
  if (p.channel_alphas.empty()) return p.quantizer.alpha;
  return std::accumulate(p.channel_alphas.begin(), p.channel_alphas.end(), 0.0) /
         static_cast<double>(p.channel_alphas.size());
}

std::string TrainCurve::csv() const {
  std::size_t layers = 0;
  for (const auto& e : epochs) layers = std::max(layers, e.alpha.size());
  std::string out = "epoch,loss,train_acc";
  for (std::size_t l = 0; l < layers; ++l) out += ",alpha_l" + std::to_string(l + 1);
  out += '\n';
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch);
    out += ',';
    append_double(out, e.loss);
    out += ',';
    append_double(out, e.train_acc);
    for (std::size_t l = 0; l < layers; ++l) {
      out += ',';
      if (l < e.alpha.size() && e.alpha[l]) append_double(out, *e.alpha[l]);
    }
    out += '\n';
  }
  return out;
}

namespace {

struct ParamSlot {
  enum Target { weight, alpha, plif_raw, psn_weight, psn_threshold, classifier_weight, classifier_bias };
  Target target;
  std::size_t layer;  // spiking layer index (unused for the classifier)
  Var var;
  bool is_alpha;
  std::size_t slot;
};

void write_back(SpikingMLP& net, const ParamSlot& p, std::vector<double> values, const Shape& shape) {
  DenseArray updated(shape, std::move(values));  // finiteness checked here
  switch (p.target) {
    case ParamSlot::weight: net.layers[p.layer].weight = std::move(updated); break;
    case ParamSlot::alpha: {
      auto& n = net.layers[p.layer].neuron;
      if (n.channel_alphas.empty()) n.quantizer.alpha = updated.item();
      else n.channel_alphas = updated.values();
      break;
    }
    case ParamSlot::plif_raw: net.layers[p.layer].neuron.plif_raw = updated.item(); break;
    case ParamSlot::psn_weight: net.layers[p.layer].neuron.psn_weight = std::move(updated); break;
    case ParamSlot::psn_threshold: net.layers[p.layer].neuron.psn_threshold = std::move(updated); break;
    case ParamSlot::classifier_weight: net.classifier_weight = std::move(updated); break;
    case ParamSlot::classifier_bias: net.classifier_bias = updated.reshaped({net.classes()}); break;
  }
}

EpochRecord snapshot(const SpikingMLP& net, int epoch, double loss, double acc) {
  EpochRecord r{epoch, loss, acc, {}};
  for (const auto& layer : net.layers) r.alpha.push_back(layer_alpha(layer));
  return r;
}

}  // namespace

namespace {

/// With `evaluate` false no full-dataset passes run and the curve only records losses.
TrainCurve train_impl(SpikingMLP& net, const Dataset& data, const TrainConfig& cfg, bool evaluate) {
  cfg.validate();
  net.validate();
  data.validate();
  if (data.size() == 0) throw ContractError("train: empty dataset");
  if (data.meta.features != net.input_width()) {
    throw DimensionError("train: dataset has " + std::to_string(data.meta.features) +
                         " features, network expects " + std::to_string(net.input_width()));
  }
  for (int y : data.labels) {
    if (static_cast<std::size_t>(y) >= net.classes()) throw ContractError("train: label exceeds classifier size");
  }
  for (auto& layer : net.layers) {
    if (layer.neuron.quantized()) layer.neuron.quantizer.grad_scale = cfg.grad_scale;
  }

  OptimizerConfig wcfg;
  wcfg.kind = cfg.optimizer;
  wcfg.lr = cfg.lr;
  wcfg.momentum = cfg.momentum;
  OptimizerConfig acfg = wcfg;
  acfg.lr = cfg.alpha_lr > 0.0 ? cfg.alpha_lr : cfg.lr;
  Optimizer weight_opt(wcfg), alpha_opt(acfg);

  // Slot layout is fixed once; each tape rebinds the same order.
  std::vector<ParamSlot> slots;
  auto add = [&](ParamSlot::Target target, std::size_t layer, std::size_t numel, bool is_alpha) {
    auto& opt = is_alpha ? alpha_opt : weight_opt;
    slots.push_back({target, layer, Var{}, is_alpha, opt.add_slot(numel)});
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    if (!layer.frozen_weight) add(ParamSlot::weight, l, layer.weight.numel(), false);
    const auto& n = layer.neuron;
    if (n.alpha_learnable() && !cfg.freeze_alpha) add(ParamSlot::alpha, l, n.alpha_values().numel(), true);
    if (n.kind == NeuronKind::plif) add(ParamSlot::plif_raw, l, 1, false);
    if (n.kind == NeuronKind::psn) {
      add(ParamSlot::psn_weight, l, n.psn_weight.numel(), false);
      add(ParamSlot::psn_threshold, l, n.psn_threshold.numel(), false);
    }
  }
  add(ParamSlot::classifier_weight, 0, net.classifier_weight.numel(), false);
  add(ParamSlot::classifier_bias, 0, net.classifier_bias.numel(), false);

  TrainCurve curve;
  const std::size_t eval_chunk = 256;
  auto checked_pass = [&](int epoch) {
    try {
      return full_pass(net, data, cfg.timesteps, eval_chunk);
    } catch (const NonFiniteLayerError& e) {
      throw TrainingAborted("training aborted at epoch " + std::to_string(epoch) +
                                " (evaluation): non-finite value in " + e.what(),
                            epoch, e.layer());
    } catch (const NonFiniteError& e) {
      throw TrainingAborted("training aborted at epoch " + std::to_string(epoch) +
                                " (evaluation): non-finite loss (" + e.what() + ")",
                            epoch, 0);
    }
  };
  if (evaluate) {
    auto [loss, acc] = checked_pass(0);
    curve.epochs.push_back(snapshot(net, 0, loss, acc));
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<int> labels;
      labels.reserve(idx.size());
      for (auto i : idx) labels.push_back(data.labels[i]);

      Tape tape;
      auto vars = bind_net(tape, net, true, cfg.freeze_alpha);
      double loss_value = 0.0;
      Var loss;
      try {
        auto f = forward_net(tape, net, vars, tape.constant(encode_temporal(data.rows(idx), cfg.timesteps)));
        loss = tape.cross_entropy(f.logits, labels);
        loss_value = tape.value(loss).item();
      } catch (const NonFiniteLayerError& e) {
        throw TrainingAborted("training aborted at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batches) + ": non-finite value in " +
                                  e.what(),
                              epoch, e.layer());
      } catch (const NonFiniteError& e) {
        throw TrainingAborted("training aborted at epoch " + std::to_string(epoch) +
                                  ": non-finite loss (" + e.what() + ")",
                              epoch, 0);
      }
      const auto grads = tape.backward(loss);

      for (auto& p : slots) {
        Var v;
        switch (p.target) {
          case ParamSlot::weight: v = vars.weights[p.layer]; break;
          case ParamSlot::alpha: v = vars.neurons[p.layer].alpha; break;
          case ParamSlot::plif_raw: v = vars.neurons[p.layer].plif_raw; break;
          case ParamSlot::psn_weight: v = vars.neurons[p.layer].psn_weight; break;
          case ParamSlot::psn_threshold: v = vars.neurons[p.layer].psn_threshold; break;
          case ParamSlot::classifier_weight: v = vars.classifier_weight; break;
          case ParamSlot::classifier_bias: v = vars.classifier_bias; break;
        }
        const DenseArray& value = tape.value(v);
        std::vector<double> params = value.values();
        if (grads.has(v)) {
          const auto& g = grads.of(v);
          (p.is_alpha ? alpha_opt : weight_opt).step(p.slot, params, g.data());
        } else {
          const std::vector<double> zero(params.size(), 0.0);
          (p.is_alpha ? alpha_opt : weight_opt).step(p.slot, params, zero);
        }
        try {
          write_back(net, p, std::move(params), value.shape());
        } catch (const NonFiniteError&) {
          const int layer = p.target == ParamSlot::classifier_weight || p.target == ParamSlot::classifier_bias
                                ? 0
                                : static_cast<int>(p.layer + 1);
          throw TrainingAborted("training aborted at epoch " + std::to_string(epoch) +
                                    ": parameter update produced a non-finite value in " +
                                    (layer ? "layer " + std::to_string(layer) : std::string("the classifier")),
                                epoch, layer);
        }
      }
      loss_sum += loss_value;
      ++batches;
    }
    const double acc = evaluate ? checked_pass(epoch).second : 0.0;
    curve.epochs.push_back(snapshot(net, epoch, loss_sum / static_cast<double>(batches), acc));
  }
  return curve;
}

}  // namespace

TrainCurve train(SpikingMLP& net, const Dataset& data, const TrainConfig& cfg) {
  return train_impl(net, data, cfg, true);
}

// ---------------------------------------------------------------------------
// Efficiency benchmark

EfficiencyReport benchmark_training_efficiency(const EfficiencyConfig& cfg) {
  if (cfg.trials < 1) throw ContractError("benchmark needs at least one trial");
  if (cfg.steps < 1) throw ContractError("benchmark needs D >= 1");
  const std::size_t samples = cfg.batch * cfg.batches_per_epoch;
  auto data = gen_shifted_task(cfg.seed, samples, cfg.widths.front(), cfg.classes, 0.0);

  NetInit a;
  a.widths = cfg.widths;
  a.classes = cfg.classes;
  a.neuron = NeuronParams::ilif(cfg.steps);
  a.seed = cfg.seed;
  NetInit b = a;
  b.neuron = NeuronParams::lif(0.5, 1.0);

  TrainConfig ta;
  ta.epochs = 1;
  ta.batch = cfg.batch;
  ta.seed = cfg.seed;
  ta.timesteps = cfg.timesteps;
  TrainConfig tb = ta;
  tb.timesteps = cfg.timesteps * static_cast<std::size_t>(cfg.steps);

  auto time_epoch = [&](const NetInit& init, const TrainConfig& tc) {
    auto net = make_mlp(init);
    const auto t0 = std::chrono::steady_clock::now();
    train_impl(net, data, tc, false);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  EfficiencyReport r;
  for (int trial = 0; trial < cfg.trials; ++trial) {
    r.integer_seconds.push_back(time_epoch(a, ta));
    r.binary_seconds.push_back(time_epoch(b, tb));
  }
  r.integer_median = median(r.integer_seconds);
  r.binary_median = median(r.binary_seconds);
  r.ratio = r.binary_median / r.integer_median;
  return r;
}

}  // namespace spikekit
