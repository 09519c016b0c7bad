#include "config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "spikekit/errors.hpp"

namespace spikekit::cli {

namespace {

using nlohmann::json;

/// Strict view of one JSON object: every key must be consumed before finish().
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  Obj child(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError("missing required key '" + sub(key) + "'");
    return Obj(j_.at(key), sub(key));
  }

  double real(const std::string& key, double def) {
    if (!take(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(sub(key) + " must be a number");
    return v.get<double>();
  }

  std::uint64_t count(const std::string& key, std::uint64_t def) {
    if (!take(key)) return def;
    return as_count(j_.at(key), sub(key));
  }

  bool flag(const std::string& key, bool def) {
    if (!take(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(sub(key) + " must be true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::optional<std::string>& def = std::nullopt) {
    if (!take(key)) {
      if (def) return *def;
      throw ConfigError("missing required key '" + sub(key) + "'");
    }
    const auto& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(sub(key) + " must be a string");
    return v.get<std::string>();
  }

  std::vector<std::size_t> counts(const std::string& key, const std::optional<std::vector<std::size_t>>& def) {
    if (!take(key)) {
      if (def) return *def;
      throw ConfigError("missing required key '" + sub(key) + "'");
    }
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(sub(key) + " must be an array");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(static_cast<std::size_t>(as_count(v[i], sub(key) + "[" + std::to_string(i) + "]")));
    }
    return out;
  }

  std::vector<std::string> texts(const std::string& key) {
    if (!take(key)) throw ConfigError("missing required key '" + sub(key) + "'");
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(sub(key) + " must be an array");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) throw ConfigError(sub(key) + " must hold strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key '" + sub(key) + "'");
    }
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  bool take(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  static std::uint64_t as_count(const json& v, const std::string& name) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
      if (v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    throw ConfigError(name + " must be a non-negative integer");
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

NeuronKind kind_from(const std::string& name, const std::string& key) {
  const auto k = parse_neuron_kind(name);
  if (!k) throw ConfigError(key + ": unknown neuron kind '" + name + "'");
  return *k;
}

int as_int(std::uint64_t v, const std::string& key) {
  if (v > 1'000'000) throw ConfigError(key + " is out of range");
  return static_cast<int>(v);
}

NeuronBlock parse_neuron(Obj o) {
  NeuronBlock b;
  b.kind = kind_from(o.text("kind"), o.sub("kind"));
  b.steps = as_int(o.count("steps", 4), o.sub("steps"));
  b.alpha = o.real("alpha", 0.0);
  b.beta = o.real("beta", 0.5);
  b.v_th = o.real("v_th", 1.0);
  b.normalizer = o.real("normalizer", 0.0);
  const auto mode = o.text("bound_mode", std::string("integerized"));
  if (mode == "integerized") b.bound_mode = BoundMode::integerized;
  else if (mode == "continuous") b.bound_mode = BoundMode::continuous;
  else throw ConfigError(o.sub("bound_mode") + " must be 'integerized' or 'continuous'");
  b.detach_reset = o.flag("detach_reset", false);
  b.plif_raw = o.real("plif_raw", 0.0);
  b.per_channel_alpha = o.flag("per_channel_alpha", false);
  o.finish();
  return b;
}

NetBlock parse_net(Obj o) {
  NetBlock b;
  b.widths = o.counts("widths", std::nullopt);
  if (b.widths.empty()) throw ConfigError("net.widths needs at least one hidden layer");
  for (auto w : b.widths) {
    if (w == 0) throw ConfigError("net.widths entries must be >= 1");
  }
  b.identity_input = o.flag("identity_input", false);
  b.weight_gain = o.real("weight_gain", 1.0);
  b.classifier_gain = o.real("classifier_gain", 1.0);
  b.seed = o.count("seed", 0);
  o.finish();
  return b;
}

DataBlock parse_data(Obj o) {
  DataBlock b;
  const auto kind = o.text("kind");
  if (kind == "shifted") {
    b.kind = DataBlock::Kind::shifted;
    b.samples = o.count("samples", b.samples);
    b.features = o.count("features", b.features);
    b.classes = o.count("classes", b.classes);
    b.shift = o.real("shift", b.shift);
    b.noise = o.real("noise", b.noise);
    b.mean_spread = o.real("mean_spread", b.mean_spread);
    b.seed = o.count("seed", 0);
  } else if (kind == "idx") {
    b.kind = DataBlock::Kind::idx;
    b.images = o.text("images");
    b.labels = o.text("labels");
    b.limit = o.count("limit", 0);
    b.scale = o.real("scale", 1.0);
  } else {
    throw ConfigError("data.kind must be 'shifted' or 'idx'");
  }
  o.finish();
  return b;
}

TrainConfig parse_train(Obj o) {
  TrainConfig c;
  const auto opt = o.text("optimizer", std::string("adam"));
  if (opt == "adam") c.optimizer = OptimizerKind::adam;
  else if (opt == "sgd") c.optimizer = OptimizerKind::sgd_momentum;
  else throw ConfigError("train.optimizer must be 'adam' or 'sgd'");
  c.lr = o.real("lr", c.lr);
  c.alpha_lr = o.real("alpha_lr", c.alpha_lr);
  c.momentum = o.real("momentum", c.momentum);
  c.epochs = as_int(o.count("epochs", 10), "train.epochs");
  c.batch = o.count("batch", c.batch);
  c.seed = o.count("seed", 0);
  c.grad_scale = o.real("grad_scale", c.grad_scale);
  c.freeze_alpha = o.flag("freeze_alpha", false);
  c.timesteps = o.count("timesteps", c.timesteps);
  o.finish();
  return c;
}

AblationBlock parse_ablation(Obj o) {
  AblationBlock b;
  for (const auto& k : o.texts("kinds")) b.kinds.push_back(kind_from(k, "ablation.kinds"));
  if (b.kinds.empty()) throw ConfigError("ablation.kinds must not be empty");
  b.seeds = as_int(o.count("seeds", 10), "ablation.seeds");
  if (b.seeds < 1) throw ConfigError("ablation.seeds must be >= 1");
  o.finish();
  return b;
}

EfficiencyConfig parse_bench(Obj o) {
  EfficiencyConfig c;
  c.widths = o.counts("widths", c.widths);
  c.classes = o.count("classes", c.classes);
  c.steps = as_int(o.count("steps", 4), "bench.steps");
  c.timesteps = o.count("timesteps", c.timesteps);
  c.batch = o.count("batch", c.batch);
  c.batches_per_epoch = o.count("batches_per_epoch", c.batches_per_epoch);
  c.trials = as_int(o.count("trials", 5), "bench.trials");
  c.seed = o.count("seed", 0);
  o.finish();
  if (c.widths.size() < 2 || c.trials < 1 || c.steps < 1 || c.timesteps < 1 || c.batch < 1 ||
      c.batches_per_epoch < 1 || c.classes < 1) {
    throw ConfigError("bench: widths needs >= 2 entries and all counts must be >= 1");
  }
  return c;
}

VerifyBlock parse_verify(Obj o) {
  VerifyBlock b;
  b.batch = o.count("batch", b.batch);
  if (b.batch == 0) throw ConfigError("verify.batch must be >= 1");
  const auto p = o.text("placement", std::string("ones_first"));
  if (p == "ones_first") b.placement = Placement::ones_first;
  else if (p == "shuffled") b.placement = Placement::shuffled;
  else throw ConfigError("verify.placement must be 'ones_first' or 'shuffled'");
  b.seed = o.count("seed", 0);
  o.finish();
  return b;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  Obj root(doc, "");
  cfg.neuron = parse_neuron(root.child("neuron"));
  cfg.net = parse_net(root.child("net"));
  cfg.data = parse_data(root.child("data"));
  if (root.has("train")) cfg.train = parse_train(root.child("train"));
  if (root.has("ablation")) cfg.ablation = parse_ablation(root.child("ablation"));
  if (root.has("bench")) cfg.bench = parse_bench(root.child("bench"));
  if (root.has("verify")) cfg.verify = parse_verify(root.child("verify"));
  if (root.has("energy")) {
    Obj e = root.child("energy");
    cfg.e_ac = e.real("e_ac_joules", cfg.e_ac);
    cfg.e_mac = e.real("e_mac_joules", cfg.e_mac);
    e.finish();
    if (!(cfg.e_ac >= 0.0) || !(cfg.e_mac >= 0.0)) throw ConfigError("energy costs must be >= 0");
  }
  cfg.output_dir = root.text("output_dir");
  root.finish();

  try {
    cfg.train.validate();
    make_neuron(cfg.neuron, cfg.neuron.kind, cfg.train.timesteps);
    if (cfg.ablation) {
      for (auto k : cfg.ablation->kinds) make_neuron(cfg.neuron, k, cfg.train.timesteps);
    }
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  if (cfg.data.kind == DataBlock::Kind::shifted && (cfg.data.samples == 0 || cfg.data.features == 0 ||
                                                    cfg.data.classes < 2)) {
    throw ConfigError("data: samples and features must be >= 1 and classes >= 2");
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

NeuronParams make_neuron(const NeuronBlock& b, NeuronKind kind, std::size_t timesteps) {
  NeuronParams p;
  const bool scaled = kind == NeuronKind::nilif || kind == NeuronKind::nasn;
  if (!scaled && b.normalizer != 0.0 && b.normalizer != 1.0) {
    throw ContractError("neuron.normalizer applies to NILIF and NASN only");
  }
  switch (kind) {
    case NeuronKind::lif: p = NeuronParams::lif(b.beta, b.v_th); break;
    case NeuronKind::plif: p = NeuronParams::plif(b.plif_raw, b.v_th); break;
    case NeuronKind::psn: p = NeuronParams::psn(timesteps); break;
    case NeuronKind::ilif: p = NeuronParams::ilif(b.steps, b.beta); break;
    case NeuronKind::nilif:
      p = NeuronParams::nilif(b.steps, b.beta);
      if (b.normalizer > 0.0) p.quantizer.normalizer = b.normalizer;
      break;
    case NeuronKind::asn: p = NeuronParams::asn(b.steps, b.alpha, b.beta); break;
    case NeuronKind::nasn: p = NeuronParams::nasn(b.steps, b.alpha, b.beta, b.normalizer); break;
  }
  p.quantizer.bound_mode = b.bound_mode;
  p.detach_reset = b.detach_reset;
  p.validate();
  return p;
}

Dataset load_data(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  if (d.kind == DataBlock::Kind::shifted) {
    ShiftedTaskOptions opt;
    opt.noise = d.noise;
    opt.mean_spread = d.mean_spread;
    return gen_shifted_task(d.seed, d.samples, d.features, d.classes, d.shift, opt);
  }
  auto data = load_idx(cfg.base_dir / d.images, cfg.base_dir / d.labels);
  if (d.limit > 0 && d.limit < data.size()) {
    std::vector<std::size_t> idx(d.limit);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    data = data.subset(idx);
  }
  if (d.scale != 1.0) {
    auto v = data.inputs.values();
    for (auto& x : v) x *= d.scale;
    data.inputs = DenseArray(data.inputs.shape(), std::move(v));
  }
  return data;
}

SpikingMLP build_net(const ExperimentConfig& cfg, const Dataset& data, NeuronKind kind, std::uint64_t seed) {
  NetInit init;
  init.widths.push_back(data.meta.features);
  init.widths.insert(init.widths.end(), cfg.net.widths.begin(), cfg.net.widths.end());
  init.classes = data.meta.classes;
  init.neuron = make_neuron(cfg.neuron, kind, cfg.train.timesteps);
  init.identity_input = cfg.net.identity_input;
  init.weight_gain = cfg.net.weight_gain;
  init.classifier_gain = cfg.net.classifier_gain;
  init.seed = seed;
  auto net = make_mlp(init);
  if (cfg.neuron.per_channel_alpha) {
    for (auto& l : net.layers) {
      if (l.neuron.alpha_learnable()) l.neuron.channel_alphas.assign(l.out_width(), l.neuron.quantizer.alpha);
    }
  }
  return net;
}

}  // namespace spikekit::cli
