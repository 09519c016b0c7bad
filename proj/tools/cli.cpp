#include "cli.hpp"

#include <omp.h>
#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "spikekit/energy.hpp"
#include "spikekit/errors.hpp"
#include "spikekit/quantizer.hpp"

namespace spikekit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr int kManifestVersion = 1;
constexpr int kConfigSchemaVersion = 1;

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Files of one command invocation plus the manifest that describes them.
class OutputDir {
 public:
  OutputDir(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir_.string() + "': " + ec.message());
  }

  const fs::path& path() const { return dir_; }

  void config_file(const fs::path& src) {
    const auto text = read_text(src);
    config_name_ = "config.json";
    config_hash_ = sha256_hex(text);
    put(config_name_, text);
  }

  void invocation(const std::vector<std::string>& args) {
    const auto text = json{{"command", command_}, {"args", args}}.dump(2) + "\n";
    config_name_ = "invocation.json";
    config_hash_ = sha256_hex(text);
    put(config_name_, text);
  }

  void seeds(json s) { seeds_ = std::move(s); }

  void write(const std::string& rel, std::string_view content, bool wall_clock = false) {
    put(rel, content);
    artifacts_.push_back({{"path", rel}, {"sha256", sha256_hex(content)}, {"wall_clock", wall_clock}});
  }

  void finish() {
    json m;
    m["manifest_version"] = kManifestVersion;
    m["command"] = command_;
    m["config_file"] = config_name_;
    m["config_sha256"] = config_hash_;
    m["seed"] = seeds_.contains("train") ? seeds_["train"] : json(nullptr);
    m["seeds"] = seeds_.is_null() ? json::object() : seeds_;
    m["versions"] = {
        {"spikekit", kVersion},
        {"spkf", kSpkfVersion},
        {"config_schema", kConfigSchemaVersion},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
        {"cli11", CLI11_VERSION},
        {"openssl", OPENSSL_VERSION_TEXT},
    };
    m["artifacts"] = artifacts_;
    put("manifest.json", m.dump(2) + "\n");
  }

 private:
  void put(const std::string& rel, std::string_view content) {
    const auto p = dir_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream o(p, std::ios::binary);
    o.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!o) throw std::runtime_error("failed to write '" + p.string() + "'");
  }

  fs::path dir_;
  std::string command_;
  std::string config_name_;
  std::string config_hash_;
  json seeds_;
  json artifacts_ = json::array();
};

std::vector<double> parse_numbers(std::string_view text, bool allow_header) {
  std::vector<double> out;
  bool first_line = true;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    std::vector<double> row;
    bool ok = true;
    std::size_t f = 0;
    while (f <= line.size()) {
      auto c = line.find(',', f);
      if (c == std::string_view::npos) c = line.size();
      auto tok = line.substr(f, c - f);
      while (!tok.empty() && std::isspace(static_cast<unsigned char>(tok.front()))) tok.remove_prefix(1);
      while (!tok.empty() && std::isspace(static_cast<unsigned char>(tok.back()))) tok.remove_suffix(1);
      if (!tok.empty()) {
        double v = 0.0;
        const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (r.ec != std::errc() || r.ptr != tok.data() + tok.size() || !std::isfinite(v)) ok = false;
        else row.push_back(v);
      }
      f = c + 1;
    }
    if (!ok) {
      if (!(allow_header && first_line)) {
        throw ConfigError("input value is not a finite number: '" + std::string(line) + "'");
      }
    } else {
      out.insert(out.end(), row.begin(), row.end());
    }
    if (!line.empty()) first_line = false;
    pos = nl + 1;
  }
  return out;
}

std::string kind_name(NeuronKind k) { return std::string(to_string(k)); }

json seeds_json(const ExperimentConfig& cfg) {
  json s{{"net", cfg.net.seed}, {"train", cfg.train.seed}};
  if (cfg.data.kind == DataBlock::Kind::shifted) s["data"] = cfg.data.seed;
  return s;
}

fs::path output_dir_for(const ExperimentConfig& cfg, const std::string& override_dir) {
  if (!override_dir.empty()) return override_dir;
  const fs::path d = cfg.output_dir;
  return d.is_absolute() ? d : cfg.base_dir / d;
}

// ---------------------------------------------------------------------------
// trace

struct TraceArgs {
  std::string neuron;
  NeuronBlock block;
  std::string bound_mode = "integerized";
  std::string inline_values;
  std::string input_csv;
  std::string output_dir = "spikekit-out/trace";
  bool has_inline = false;
  bool has_csv = false;
};

int cmd_trace(const TraceArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  const auto kind = parse_neuron_kind(a.neuron);
  if (!kind) {
    err << "trace: unknown neuron kind '" << a.neuron << "'\n";
    return kUsage;
  }
  if (a.has_inline == a.has_csv) {
    err << "trace: give exactly one of --inline or --input-csv\n";
    return kUsage;
  }
  std::vector<double> xs;
  try {
    xs = a.has_inline ? parse_numbers(a.inline_values, false) : parse_numbers(read_text(a.input_csv), true);
  } catch (const ConfigError& e) {
    err << "trace: " << e.what() << "\n";
    return kUsage;
  }
  if (xs.empty()) {
    err << "trace: the input sequence is empty\n";
    return kUsage;
  }
  NeuronBlock block = a.block;
  if (a.bound_mode == "continuous") block.bound_mode = BoundMode::continuous;
  else if (a.bound_mode != "integerized") {
    err << "trace: --bound-mode must be integerized or continuous\n";
    return kUsage;
  }
  NeuronParams p;
  try {
    p = make_neuron(block, *kind, xs.size());
  } catch (const ContractError& e) {
    err << "trace: invalid neuron parameters: " << e.what() << "\n";
    return kUsage;
  }
  const auto run = run_neuron(DenseArray({xs.size(), 1, 1}, xs), p);
  const bool recurrent = !run.u.empty();

  std::string csv = "t,x,u,s,h\n";
  constexpr int kCol = 24;
  out << std::left << std::setw(4) << "t" << std::setw(kCol) << "X" << std::setw(kCol) << "U" << std::setw(kCol)
      << "S" << "H\n";
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const std::string u = recurrent ? fmt(run.u[t][0]) : "-";
    const std::string h = recurrent ? fmt(run.h[t][0]) : "-";
    const std::string s = fmt(run.activations[t]);
    out << std::setw(4) << t << std::setw(kCol) << fmt(xs[t]) << std::setw(kCol) << u << std::setw(kCol) << s << h
        << "\n";
    csv += std::to_string(t) + "," + fmt(xs[t]) + "," + (recurrent ? u : "") + "," + s + "," +
           (recurrent ? h : "") + "\n";
  }
  OutputDir dir(a.output_dir, "trace");
  dir.invocation(argv);
  dir.write("trace.csv", csv);
  dir.finish();
  return kOk;
}

// ---------------------------------------------------------------------------
// gradcheck

/// Scalar smooth-path network: S = U/N + c with c frozen at the base point.
struct SmoothNet {
  std::vector<std::size_t> widths;
  std::vector<std::vector<double>> w;
  int steps = 8;
  double n = 1.0, beta = 0.5;
  std::vector<double> wc, bc;
  std::size_t classes = 2;
};

/// Mean cross-entropy. When `record` the quantized outputs are used and the offsets stored;
/// otherwise the recorded offsets are replayed.
double smooth_loss(const SmoothNet& net, const std::vector<double>& x, std::size_t T, std::size_t B,
                   const std::vector<int>& labels, std::vector<double>& offsets, bool record,
                   std::vector<std::vector<double>>* pre_out, const std::vector<double>& alphas) {
  std::vector<double> cur = x;
  std::size_t k = 0;
  if (record) offsets.clear();
  if (pre_out) pre_out->clear();
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
    const std::size_t in = net.widths[l], out = net.widths[l + 1];
    std::vector<double> pre(T * B * out), s(T * B * out), us(T * B * out);
    for (std::size_t r = 0; r < T * B; ++r)
      for (std::size_t o = 0; o < out; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < in; ++i) acc += net.w[l][o * in + i] * cur[r * in + i];
        pre[r * out + o] = acc;
      }
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < out; ++o) {
        double h = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t idx = (t * B + b) * out + o;
          const double u = h + pre[idx];
          double sv;
          if (record) {
            const double lo = std::ceil(alphas[l]);
            sv = std::min(std::max(std::nearbyint(u), lo), lo + net.steps) / net.n;
            offsets.push_back(sv - u / net.n);
          } else {
            sv = u / net.n + offsets[k++];
          }
          us[idx] = u;
          s[idx] = sv;
          h = net.beta * (u - sv * net.n);
        }
      }
    if (pre_out) pre_out->push_back(us);
    cur = std::move(s);
  }
  const std::size_t last = net.widths.back();
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> z(net.classes);
    for (std::size_t c = 0; c < net.classes; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < last; ++j) {
        double r = 0.0;
        for (std::size_t t = 0; t < T; ++t) r += cur[(t * B + b) * last + j];
        acc += net.wc[c * last + j] * (r / static_cast<double>(T));
      }
      z[c] = acc + net.bc[c];
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - mx);
    loss += std::log(denom) + mx - z[static_cast<std::size_t>(labels[b])];
  }
  return loss / static_cast<double>(B);
}

struct FdInstance {
  SpikingMLP net;
  SmoothNet smooth;
  std::vector<double> alphas;
  DenseArray x;
  std::vector<int> labels;
};

/// Draws a network whose every membrane potential sits at least `margin` inside its window.
std::optional<FdInstance> draw_interior(std::mt19937_64& rng, NeuronKind kind, double margin) {
  const bool learn_alpha = kind == NeuronKind::asn || kind == NeuronKind::nasn;
  const bool normalized = kind == NeuronKind::nasn || kind == NeuronKind::nilif;
  std::uniform_int_distribution<int> depth_d(1, 2), width_d(2, 4), in_d(2, 3), cls_d(2, 3);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const std::size_t T = 2, B = 2;
  const int D = 8;
  FdInstance inst;
  inst.smooth.steps = D;
  inst.smooth.n = normalized ? D : 1.0;
  inst.smooth.beta = 0.2 + 0.7 * u01(rng);
  inst.smooth.widths.push_back(static_cast<std::size_t>(in_d(rng)));
  const int depth = depth_d(rng);
  for (int l = 0; l < depth; ++l) inst.smooth.widths.push_back(static_cast<std::size_t>(width_d(rng)));
  inst.smooth.classes = static_cast<std::size_t>(cls_d(rng));
  std::vector<double> x(T * B * inst.smooth.widths[0]);
  for (auto& v : x) v = 0.8 + 0.4 * u01(rng);

  // Greedy per layer: positive weights put pre-activations near D/2; ASN/NASN then
  // move alpha under the smallest membrane potential.
  std::vector<double> cur = x;
  for (int l = 0; l < depth; ++l) {
    const std::size_t in = inst.smooth.widths[static_cast<std::size_t>(l)];
    const std::size_t out = inst.smooth.widths[static_cast<std::size_t>(l) + 1];
    double mean_in = 0.0;
    for (double v : cur) mean_in += v;
    mean_in = std::abs(mean_in / static_cast<double>(cur.size()));
    if (!(mean_in > 1e-3)) return std::nullopt;
    std::vector<double> w(out * in);
    const double target = learn_alpha ? (0.5 + 2.0 * u01(rng)) : D / 2.0;
    for (auto& v : w) v = (0.5 + 0.5 * u01(rng)) * target / (0.75 * static_cast<double>(in) * mean_in);
    if (learn_alpha && u01(rng) < 0.5) {
      for (auto& v : w) v = -v;  // negative pre-activations exercise alpha < 0
    }
    inst.smooth.w.push_back(w);
    double lo = 1e300;
    std::vector<double> pre(T * B * out);
    for (std::size_t r = 0; r < T * B; ++r)
      for (std::size_t o = 0; o < out; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * cur[r * in + i];
        pre[r * out + o] = acc;
        lo = std::min(lo, acc);
      }
    const double alpha = learn_alpha ? lo - 0.5 * inst.smooth.beta - margin - 0.5 * u01(rng) : 0.0;
    inst.alphas.push_back(alpha);
    // Interior outputs do not depend on alpha, so the next layer's input is known now.
    std::vector<double> s(T * B * out);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < out; ++o) {
        double h = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t idx = (t * B + b) * out + o;
          const double u = h + pre[idx];
          s[idx] = std::nearbyint(u) / inst.smooth.n;
          h = inst.smooth.beta * (u - s[idx] * inst.smooth.n);
        }
      }
    cur = std::move(s);
  }
  const std::size_t last = inst.smooth.widths.back();
  inst.smooth.wc.resize(inst.smooth.classes * last);
  for (auto& v : inst.smooth.wc) v = 2.0 * u01(rng) - 1.0;
  inst.smooth.bc.resize(inst.smooth.classes);
  for (auto& v : inst.smooth.bc) v = 0.4 * u01(rng) - 0.2;
  for (std::size_t b = 0; b < B; ++b) {
    inst.labels.push_back(static_cast<int>(rng() % inst.smooth.classes));
  }

  std::vector<double> offsets;
  std::vector<std::vector<double>> us;
  smooth_loss(inst.smooth, x, T, B, inst.labels, offsets, true, &us, inst.alphas);
  for (std::size_t l = 0; l < us.size(); ++l) {
    for (double u : us[l]) {
      if (u < inst.alphas[l] + margin || u > inst.alphas[l] + D - margin) return std::nullopt;
    }
  }

  for (std::size_t l = 0; l + 1 < inst.smooth.widths.size(); ++l) {
    NeuronParams p;
    switch (kind) {
      case NeuronKind::asn: p = NeuronParams::asn(D, inst.alphas[l], inst.smooth.beta); break;
      case NeuronKind::nasn: p = NeuronParams::nasn(D, inst.alphas[l], inst.smooth.beta); break;
      case NeuronKind::ilif: p = NeuronParams::ilif(D, inst.smooth.beta); break;
      default: p = NeuronParams::nilif(D, inst.smooth.beta); break;
    }
    inst.net.layers.push_back(
        {DenseArray({inst.smooth.widths[l + 1], inst.smooth.widths[l]}, inst.smooth.w[l]), p, false});
  }
  inst.net.classifier_weight = DenseArray({inst.smooth.classes, last}, inst.smooth.wc);
  inst.net.classifier_bias = DenseArray({inst.smooth.classes}, inst.smooth.bc);
  inst.x = DenseArray({T, B, inst.smooth.widths[0]}, x);
  return inst;
}

struct GradcheckArgs {
  std::string neuron = "asn";
  long long trials = 1000;
  double eps = 1e-6;
  double tolerance = 1e-5;
  std::uint64_t seed = 0;
  std::string output_dir = "spikekit-out/gradcheck";
};

int cmd_gradcheck(const GradcheckArgs& a, const std::vector<std::string>& argv, std::ostream& out,
                  std::ostream& err) {
  const auto kind = parse_neuron_kind(a.neuron);
  if (!kind) {
    err << "gradcheck: unknown neuron kind '" << a.neuron << "'\n";
    return kUsage;
  }
  if (*kind != NeuronKind::asn && *kind != NeuronKind::nasn && *kind != NeuronKind::ilif &&
      *kind != NeuronKind::nilif) {
    err << "gradcheck: the straight-through rules belong to ilif, nilif, asn and nasn\n";
    return kUsage;
  }
  if (a.trials < 1) {
    err << "gradcheck: --trials must be >= 1; an empty check proves nothing\n";
    return kUsage;
  }
  if (!(a.eps > 0.0) || !std::isfinite(a.eps) || !(a.tolerance >= 0.0)) {
    err << "gradcheck: --eps must be a positive number and --tolerance >= 0\n";
    return kUsage;
  }
  const bool learn_alpha = *kind == NeuronKind::asn || *kind == NeuronKind::nasn;
  const bool normalized = *kind == NeuronKind::nasn || *kind == NeuronKind::nilif;
  std::mt19937_64 rng(a.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  static constexpr int kSteps[] = {1, 2, 4, 8};

  // Indicator rules, element by element.
  long long x_mismatch = 0, alpha_mismatch = 0;
  const std::size_t per_tuple = 16;
  for (long long trial = 0; trial < a.trials; ++trial) {
    QuantizerSpec q;
    q.steps = kSteps[rng() % 4];
    q.alpha = learn_alpha ? -3.0 + 6.0 * u01(rng) : 0.0;
    q.normalizer = normalized ? q.steps : 1.0;
    q.grad_scale = 0.25 + 1.75 * u01(rng);
    std::vector<double> u(per_tuple), up(per_tuple);
    for (std::size_t i = 0; i < per_tuple; ++i) {
      u[i] = q.alpha - 3.0 + (q.steps + 6.0) * u01(rng);
      up[i] = 2.0 * u01(rng) - 1.0;
    }
    u[per_tuple - 2] = q.alpha;
    u[per_tuple - 1] = q.alpha + q.steps;
    const DenseArray ua({per_tuple}, u), upa({per_tuple}, up);
    const auto gx = quantize_backward_x(upa, ua, q);
    double acc = 0.0;
    for (std::size_t i = 0; i < per_tuple; ++i) {
      const bool inside = q.alpha <= u[i] && u[i] <= q.alpha + q.steps;
      const double want = inside ? up[i] * (1.0 / q.normalizer) : 0.0;
      if (gx[i] != want) ++x_mismatch;
      if (!inside) acc += up[i];
    }
    if (learn_alpha && quantize_backward_alpha(upa, ua, q) != acc * (q.grad_scale / q.normalizer)) {
      ++alpha_mismatch;
    }
  }

  // Smooth-path finite differences on interior instances.
  const long long instances = std::min<long long>(a.trials, 20);
  double fd_max = 0.0;
  long long fd_params = 0;
  for (long long i = 0; i < instances; ++i) {
    std::optional<FdInstance> inst;
    for (int attempt = 0; attempt < 500 && !inst; ++attempt) inst = draw_interior(rng, *kind, 0.05);
    if (!inst) {
      err << "gradcheck: could not draw an interior instance\n";
      return kCheckFailed;
    }
    Tape tape;
    auto vars = bind_net(tape, inst->net, true);
    auto f = forward_net(tape, inst->net, vars, tape.constant(inst->x));
    const auto grads = tape.backward(tape.cross_entropy(f.logits, inst->labels));
    const std::size_t T = inst->x.dim(0), B = inst->x.dim(1);
    std::vector<double> offsets;
    smooth_loss(inst->smooth, inst->x.values(), T, B, inst->labels, offsets, true, nullptr, inst->alphas);
    auto probe = [&](std::vector<double>& param, const DenseArray& g) {
      for (std::size_t k = 0; k < param.size(); ++k) {
        const double keep = param[k];
        param[k] = keep + a.eps;
        const double up = smooth_loss(inst->smooth, inst->x.values(), T, B, inst->labels, offsets, false,
                                      nullptr, inst->alphas);
        param[k] = keep - a.eps;
        const double down = smooth_loss(inst->smooth, inst->x.values(), T, B, inst->labels, offsets, false,
                                        nullptr, inst->alphas);
        param[k] = keep;
        const double fd = (up - down) / (2.0 * a.eps);
        fd_max = std::max(fd_max, std::abs(fd - g[k]));
        if (!std::isfinite(fd)) fd_max = INFINITY;
        ++fd_params;
      }
    };
    for (std::size_t l = 0; l < inst->smooth.w.size(); ++l) probe(inst->smooth.w[l], grads.of(vars.weights[l]));
    probe(inst->smooth.wc, grads.of(vars.classifier_weight));
    probe(inst->smooth.bc, grads.of(vars.classifier_bias));
  }

  const bool rules_ok = x_mismatch == 0 && alpha_mismatch == 0;
  const bool fd_ok = fd_max <= a.tolerance;
  json rep{{"neuron", a.neuron},
           {"trials", a.trials},
           {"elements_per_trial", per_tuple},
           {"indicator_x_mismatches", x_mismatch},
           {"indicator_alpha_mismatches", learn_alpha ? json(alpha_mismatch) : json(nullptr)},
           {"indicator_rules_exact", rules_ok},
           {"fd_instances", instances},
           {"fd_parameters", fd_params},
           {"fd_eps", a.eps},
           {"fd_tolerance", a.tolerance},
           {"fd_max_abs_dev", std::isfinite(fd_max) ? json(fd_max) : json(nullptr)},
           {"fd_pass", fd_ok},
           {"pass", rules_ok && fd_ok}};
  out << "indicator rules (" << a.trials << " tuples x " << per_tuple << "): "
      << (rules_ok ? "exact" : "MISMATCH") << " (x: " << x_mismatch << ", alpha: "
      << (learn_alpha ? std::to_string(alpha_mismatch) : std::string("n/a")) << ")\n";
  out << "smooth-path finite differences (" << instances << " nets, " << fd_params
      << " weights): max |fd - bptt| = " << fmt(fd_max) << " (tolerance " << fmt(a.tolerance) << ") "
      << (fd_ok ? "pass" : "FAIL") << "\n";
  OutputDir dir(a.output_dir, "gradcheck");
  dir.invocation(argv);
  dir.seeds({{"gradcheck", a.seed}});
  dir.write("gradcheck.json", rep.dump(2) + "\n");
  dir.finish();
  return rules_ok && fd_ok ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const fs::path& config_path, double tolerance, const std::string& checkpoint,
               const std::string& out_override, std::ostream& out, std::ostream& err) {
  const auto cfg = load_config(config_path);
  if (!(tolerance >= 0.0)) throw ConfigError("--tolerance must be >= 0");
  const auto data = load_data(cfg);
  SpikingMLP net;
  FoldedNet folded;
  if (!checkpoint.empty()) {
    try {
      folded = load_spkf(checkpoint);
    } catch (const FormatError& e) {
      err << "verify: cannot read checkpoint: " << e.what() << "\n";
      return kCheckFailed;
    }
    // The reference is the network this config trains to; training is deterministic.
    net = build_net(cfg, data, cfg.neuron.kind, cfg.net.seed);
    train(net, data, cfg.train);
    const auto shape = fold_net(net);
    bool same = shape.input_weight.shape() == folded.input_weight.shape() &&
                shape.stages.size() == folded.stages.size();
    for (std::size_t i = 0; same && i < shape.stages.size(); ++i)
      same = shape.stages[i].weight.shape() == folded.stages[i].weight.shape();
    if (!same) throw ConfigError("checkpoint layer shapes do not match the network of this config");
  } else {
    net = build_net(cfg, data, cfg.neuron.kind, cfg.net.seed);
    folded = fold_net(net);
  }
  std::vector<std::size_t> idx(std::min(cfg.verify.batch, data.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto x = encode_temporal(data.rows(idx), cfg.train.timesteps);
  const auto rep = verify_equivalence(net, folded, x, tolerance, {cfg.verify.placement, cfg.verify.seed});

  json j;
  j["tolerance"] = tolerance;
  j["pass"] = rep.pass;
  j["first_failure"] = rep.pass ? json(nullptr) : json(rep.first_failure());
  j["batch"] = idx.size();
  j["timesteps"] = cfg.train.timesteps;
  j["layers"] = json::array();
  for (const auto& l : rep.layers) {
    j["layers"].push_back({{"name", l.name}, {"max_abs_diff", l.max_abs_diff}, {"pass", l.pass}});
    out << std::left << std::setw(10) << l.name << " max |diff| = " << fmt(l.max_abs_diff) << "  "
        << (l.pass ? "pass" : "FAIL") << "\n";
  }
  OutputDir dir(output_dir_for(cfg, out_override), "verify");
  dir.config_file(config_path);
  dir.seeds(seeds_json(cfg));
  dir.write("verify.json", j.dump(2) + "\n");
  dir.finish();
  if (!rep.pass) {
    err << "verify: spike inference diverges from training mode at " << rep.first_failure() << "\n";
    return kCheckFailed;
  }
  out << "equivalent within " << fmt(tolerance) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// train

std::string final_json(const SpikingMLP& net, const TrainCurve& curve, NeuronKind kind, bool checkpoint) {
  const auto& last = curve.epochs.back();
  json j{{"neuron", kind_name(kind)},
         {"epochs", last.epoch},
         {"final_loss", last.loss},
         {"final_train_acc", last.train_acc},
         {"checkpoint", checkpoint ? json("checkpoint.spkf") : json(nullptr)}};
  j["alpha"] = json::array();
  for (const auto& l : net.layers) {
    const auto a = layer_alpha(l);
    j["alpha"].push_back(a ? json(*a) : json(nullptr));
  }
  return j.dump(2) + "\n";
}

int cmd_train_single(const fs::path& config_path, const ExperimentConfig& cfg, const std::string& out_override,
                     std::ostream& out) {
  const auto data = load_data(cfg);
  auto net = build_net(cfg, data, cfg.neuron.kind, cfg.net.seed);
  const auto curve = train(net, data, cfg.train);
  OutputDir dir(output_dir_for(cfg, out_override), "train");
  dir.config_file(config_path);
  dir.seeds(seeds_json(cfg));
  dir.write("curves.csv", curve.csv());
  bool checkpoint = false;
  if (std::all_of(net.layers.begin(), net.layers.end(), [](const auto& l) {
        return l.neuron.quantized() && l.neuron.quantizer.bound_mode == BoundMode::integerized;
      })) {
    const auto bytes = encode_spkf(fold_net(net));
    dir.write("checkpoint.spkf", std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    checkpoint = true;
  }
  dir.write("train.json", final_json(net, curve, cfg.neuron.kind, checkpoint));
  dir.finish();
  const auto& last = curve.epochs.back();
  out << "trained " << kind_name(cfg.neuron.kind) << " for " << last.epoch << " epochs: loss " << fmt(last.loss)
      << ", train accuracy " << fmt(last.train_acc) << "\n";
  if (!checkpoint) out << "no checkpoint: binary or continuous-mode neurons have no spike-folded form\n";
  return kOk;
}

std::string summary_csv(const AblationResult& r) {
  std::string s = "kind,runs,mean_acc,se_acc,alpha_up,mean_alpha_l1\n";
  for (const auto& k : r.kinds) {
    s += kind_name(k.kind) + "," + std::to_string(k.runs) + "," + fmt(k.mean_acc) + "," + fmt(k.se_acc) + "," +
         std::to_string(k.alpha_up) + "," + (k.mean_alpha ? fmt(*k.mean_alpha) : "") + "\n";
  }
  return s;
}

int cmd_train_ablation(const fs::path& config_path, const ExperimentConfig& cfg, const std::string& out_override,
                       std::ostream& out) {
  const auto result = run_ablation(cfg, thread_cap());
  OutputDir dir(output_dir_for(cfg, out_override), "train");
  dir.config_file(config_path);
  dir.seeds(seeds_json(cfg));
  json runs = json::array();
  for (const auto& r : result.runs) {
    const std::string base = "runs/" + kind_name(r.kind) + "/seed" + std::to_string(r.seed_offset) + "/";
    dir.write(base + "curves.csv", r.curve_csv);
    runs.push_back({{"kind", kind_name(r.kind)},
                    {"seed_offset", r.seed_offset},
                    {"final_train_acc", r.final_acc},
                    {"final_loss", r.final_loss},
                    {"alpha_l1_initial", r.alpha_initial ? json(*r.alpha_initial) : json(nullptr)},
                    {"alpha_l1_final", r.alpha_final ? json(*r.alpha_final) : json(nullptr)}});
  }
  json kinds = json::array();
  out << std::left << std::setw(8) << "kind" << std::setw(6) << "runs" << std::setw(24) << "mean acc" << std::setw(24)
      << "se" << std::setw(10) << "alpha up" << "mean alpha_l1\n";
  for (const auto& k : result.kinds) {
    kinds.push_back({{"kind", kind_name(k.kind)},
                     {"runs", k.runs},
                     {"mean_acc", k.mean_acc},
                     {"se_acc", k.se_acc},
                     {"alpha_up", k.alpha_up},
                     {"mean_alpha_l1", k.mean_alpha ? json(*k.mean_alpha) : json(nullptr)}});
    out << std::setw(8) << kind_name(k.kind) << std::setw(6) << k.runs << std::setw(24) << fmt(k.mean_acc)
        << std::setw(24) << fmt(k.se_acc) << std::setw(10) << k.alpha_up
        << (k.mean_alpha ? fmt(*k.mean_alpha) : "-") << "\n";
  }
  json cmp = json::array();
  for (const auto& c : result.comparisons) {
    cmp.push_back({{"adaptive", kind_name(c.adaptive)},
                   {"baseline", kind_name(c.baseline)},
                   {"margin", c.margin},
                   {"se", c.se},
                   {"holds", c.holds}});
    out << kind_name(c.adaptive) << " - " << kind_name(c.baseline) << " = " << fmt(c.margin) << " (se "
        << fmt(c.se) << "): " << (c.holds ? "adaptive ahead by more than one se" : "not separated") << "\n";
  }
  dir.write("summary.csv", summary_csv(result));
  dir.write("summary.json", json{{"runs", runs}, {"kinds", kinds}, {"comparisons", cmp}}.dump(2) + "\n");
  dir.finish();
  return kOk;
}

// ---------------------------------------------------------------------------
// bench

int cmd_bench(const fs::path& config_path, const std::string& out_override, std::ostream& out) {
  const auto cfg = load_config(config_path);
  const auto rep = benchmark_training_efficiency(cfg.bench);
  json j;
  j["config"] = {{"widths", cfg.bench.widths},
                 {"classes", cfg.bench.classes},
                 {"steps", cfg.bench.steps},
                 {"timesteps", cfg.bench.timesteps},
                 {"batch", cfg.bench.batch},
                 {"batches_per_epoch", cfg.bench.batches_per_epoch},
                 {"trials", cfg.bench.trials},
                 {"seed", cfg.bench.seed}};
  j["integer_seconds"] = rep.integer_seconds;
  j["binary_seconds"] = rep.binary_seconds;
  j["integer_median"] = rep.integer_median;
  j["binary_median"] = rep.binary_median;
  j["ratio"] = rep.ratio;
  j["wall_clock_fields"] = {"integer_seconds", "binary_seconds", "integer_median", "binary_median", "ratio"};
  OutputDir dir(output_dir_for(cfg, out_override), "bench");
  dir.config_file(config_path);
  dir.seeds({{"bench", cfg.bench.seed}});
  dir.write("bench.json", j.dump(2) + "\n", true);
  dir.finish();
  out << "integer (T=" << cfg.bench.timesteps << ") median " << fmt(rep.integer_median) << " s/epoch, binary (T*D="
      << cfg.bench.timesteps * static_cast<std::size_t>(cfg.bench.steps) << ") median " << fmt(rep.binary_median)
      << " s/epoch, ratio " << fmt(rep.ratio) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// energy

struct EnergyArgs {
  std::string checkpoint;
  std::string data;
  std::size_t zeros = 0;
  std::size_t timesteps = 2;
  double e_ac = EnergyCosts{}.e_ac;
  double e_mac = EnergyCosts{}.e_mac;
  std::string output_dir = "spikekit-out/energy";
};

int cmd_energy(const EnergyArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  if (a.data.empty() == (a.zeros == 0)) {
    err << "energy: give exactly one of --data or --zeros\n";
    return kUsage;
  }
  if (a.timesteps == 0 || !(a.e_ac >= 0.0) || !(a.e_mac >= 0.0)) {
    err << "energy: --timesteps must be >= 1 and costs >= 0\n";
    return kUsage;
  }
  FoldedNet folded;
  try {
    folded = load_spkf(a.checkpoint);
  } catch (const FormatError& e) {
    err << "energy: cannot read checkpoint: " << e.what() << "\n";
    return kUsage;
  }
  const std::size_t in = folded.input_weight.dim(1);
  DenseArray x;
  if (a.zeros) {
    x = DenseArray::zeros({a.timesteps, a.zeros, in});
  } else {
    Dataset d;
    try {
      d = dataset_from_csv(read_text(a.data), a.data);
    } catch (const FormatError& e) {
      err << "energy: " << e.what() << "\n";
      return kUsage;
    }
    if (d.meta.features != in) {
      err << "energy: data has " << d.meta.features << " features, the checkpoint expects " << in << "\n";
      return kUsage;
    }
    x = encode_temporal(d, a.timesteps);
  }
  const auto rep = measure_energy(folded, x, {a.e_ac, a.e_mac});
  OutputDir dir(a.output_dir, "energy");
  dir.invocation(argv);
  dir.write("energy.json", rep.json() + "\n");
  dir.finish();
  out << "mac_count " << rep.totals.mac_count << ", ac_count " << rep.totals.ac_count << ", constant_adds "
      << rep.totals.constant_adds << ", firing_rate " << fmt(rep.totals.firing_rate.value_or(0.0))
      << ", energy_joules " << fmt(rep.energy_joules) << "\n";
  return kOk;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += kHex[md[i] >> 4];
    s += kHex[md[i] & 15];
  }
  return s;
}

int thread_cap() {
  const char* env = std::getenv("SPIKEKIT_THREADS");
  if (!env || !*env) return std::max(1u, std::thread::hardware_concurrency());
  int v = 0;
  const std::string_view s(env);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || v < 1) {
    throw ConfigError("SPIKEKIT_THREADS must be a positive integer, got '" + std::string(s) + "'");
  }
  return v;
}

AblationResult run_ablation(const ExperimentConfig& cfg, int threads) {
  std::vector<NeuronKind> kinds = cfg.ablation ? cfg.ablation->kinds : std::vector<NeuronKind>{cfg.neuron.kind};
  const int seeds = cfg.ablation ? cfg.ablation->seeds : 1;
  AblationResult res;
  for (auto k : kinds)
    for (int s = 0; s < seeds; ++s) res.runs.push_back({k, s, 0.0, 0.0, std::nullopt, std::nullopt, {}});

  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(res.runs.size())));
  const int inner = std::max(1, threads / workers);
  std::vector<std::exception_ptr> errors(res.runs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    omp_set_num_threads(inner);
    for (std::size_t i; (i = next.fetch_add(1)) < res.runs.size();) {
      try {
        auto& r = res.runs[i];
        auto c = cfg;
        const auto off = static_cast<std::uint64_t>(r.seed_offset);
        c.data.seed += off;
        c.train.seed += off;
        const auto data = load_data(c);
        auto net = build_net(c, data, r.kind, c.net.seed + off);
        r.alpha_initial = layer_alpha(net.layers.front());
        const auto curve = train(net, data, c.train);
        r.final_acc = curve.epochs.back().train_acc;
        r.final_loss = curve.epochs.back().loss;
        r.alpha_final = layer_alpha(net.layers.front());
        r.curve_csv = curve.csv();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (auto k : kinds) {
    KindSummary s{k, 0, 0.0, 0.0, 0, std::nullopt};
    double sum = 0.0, alpha_sum = 0.0;
    int alpha_n = 0;
    std::vector<double> accs;
    for (const auto& r : res.runs) {
      if (r.kind != k) continue;
      accs.push_back(r.final_acc);
      sum += r.final_acc;
      if (r.alpha_final) {
        alpha_sum += *r.alpha_final;
        ++alpha_n;
        if (*r.alpha_final > *r.alpha_initial) ++s.alpha_up;
      }
    }
    s.runs = static_cast<int>(accs.size());
    s.mean_acc = sum / s.runs;
    if (s.runs > 1) {
      double ss = 0.0;
      for (double v : accs) ss += (v - s.mean_acc) * (v - s.mean_acc);
      s.se_acc = std::sqrt(ss / (s.runs - 1)) / std::sqrt(static_cast<double>(s.runs));
    }
    if (alpha_n) s.mean_alpha = alpha_sum / alpha_n;
    res.kinds.push_back(s);
  }
  auto find = [&](NeuronKind k) -> const KindSummary* {
    for (const auto& s : res.kinds) {
      if (s.kind == k) return &s;
    }
    return nullptr;
  };
  for (auto [a, b] : {std::pair{NeuronKind::asn, NeuronKind::ilif}, std::pair{NeuronKind::nasn, NeuronKind::nilif}}) {
    const auto* sa = find(a);
    const auto* sb = find(b);
    if (!sa || !sb) continue;
    Comparison c{a, b, sa->mean_acc - sb->mean_acc, std::hypot(sa->se_acc, sb->se_acc), false};
    c.holds = c.margin > c.se;
    res.comparisons.push_back(c);
  }
  return res;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spiking-neuron engine: traces, equivalence checks, gradient audits, training, benchmarks, energy", "spikekit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  TraceArgs ta;
  auto* trace = app.add_subcommand("trace", "Print the per-step X, U, S, H of one neuron");
  trace->add_option("--neuron", ta.neuron, "lif, plif, psn, ilif, nilif, asn or nasn")->required();
  trace->add_option("--beta", ta.block.beta, "membrane decay");
  trace->add_option("--alpha", ta.block.alpha, "window offset (asn, nasn)");
  trace->add_option("--d", ta.block.steps, "virtual timesteps D");
  trace->add_option("--vth", ta.block.v_th, "firing threshold (lif, plif)");
  trace->add_option("--n", ta.block.normalizer, "normalizer N (nilif, nasn; default D)");
  trace->add_option("--plif-raw", ta.block.plif_raw, "PLIF decay logit");
  trace->add_option("--bound-mode", ta.bound_mode, "integerized or continuous");
  trace->add_option("--inline", ta.inline_values, "comma-separated inputs X[t]");
  trace->add_option("--input-csv", ta.input_csv, "file of inputs, comma or newline separated");
  trace->add_option("--output-dir", ta.output_dir, "where trace.csv and manifest.json go");

  std::string config, checkpoint, out_dir;
  double tolerance = 1e-9;
  auto* verify = app.add_subcommand("verify", "Compare training-mode forward with spike-driven inference");
  verify->add_option("--config", config)->required();
  verify->add_option("--tolerance", tolerance, "max abs deviation per layer");
  verify->add_option("--checkpoint", checkpoint, "SPKF file to verify instead of a fresh network");
  verify->add_option("--output-dir", out_dir, "overrides output_dir of the config");

  GradcheckArgs ga;
  auto* grad = app.add_subcommand("gradcheck", "Audit the straight-through rules and BPTT weight gradients");
  grad->add_option("--neuron", ga.neuron, "ilif, nilif, asn or nasn");
  grad->add_option("--trials", ga.trials, "random (u, alpha, D, upstream) tuples");
  grad->add_option("--eps", ga.eps, "finite-difference step");
  grad->add_option("--tolerance", ga.tolerance, "max |fd - bptt|");
  grad->add_option("--seed", ga.seed);
  grad->add_option("--output-dir", ga.output_dir);

  int seeds = 0;  // 0: not given
  auto* tr = app.add_subcommand("train", "Train from a config; with an ablation block or --seeds, run the sweep");
  tr->add_option("--config", config)->required();
  tr->add_option("--seeds", seeds, "independent runs per neuron kind");
  tr->add_option("--output-dir", out_dir);

  auto* bench = app.add_subcommand("bench", "Per-epoch wall clock: integer over T vs binary over T*D");
  bench->add_option("--config", config)->required();
  bench->add_option("--output-dir", out_dir);

  EnergyArgs ea;
  auto* energy = app.add_subcommand("energy", "Operation counts and energy estimate of a checkpoint");
  energy->add_option("--checkpoint", ea.checkpoint)->required();
  energy->add_option("--data", ea.data, "CSV with a label,f0,f1,... header");
  energy->add_option("--zeros", ea.zeros, "use this many all-zero samples instead of --data");
  energy->add_option("--timesteps", ea.timesteps);
  energy->add_option("--e-ac", ea.e_ac, "joules per accumulate");
  energy->add_option("--e-mac", ea.e_mac, "joules per multiply-accumulate");
  energy->add_option("--output-dir", ea.output_dir);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*trace) {
      ta.has_inline = trace->count("--inline") > 0;
      ta.has_csv = trace->count("--input-csv") > 0;
      return cmd_trace(ta, args, out, err);
    }
    if (*grad) return cmd_gradcheck(ga, args, out, err);
    if (*energy) return cmd_energy(ea, args, out, err);
    if (*verify) return cmd_verify(config, tolerance, checkpoint, out_dir, out, err);
    if (*bench) return cmd_bench(config, out_dir, out);
    if (*tr) {
      auto cfg = load_config(config);
      if (tr->count("--seeds") > 0 && seeds < 1) throw ConfigError("--seeds must be >= 1");
      if (seeds > 0) {
        if (!cfg.ablation) cfg.ablation = AblationBlock{{cfg.neuron.kind}, seeds};
        cfg.ablation->seeds = seeds;
      }
      if (cfg.ablation) return cmd_train_ablation(config, cfg, out_dir, out);
      return cmd_train_single(config, cfg, out_dir, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "input error: " << e.what() << "\n";
    return kUsage;
  } catch (const DimensionError& e) {
    err << "shape error: " << e.what() << "\n";
    return kUsage;
  } catch (const ContractError& e) {
    err << "refused: " << e.what() << "\n";
    return kRefused;
  } catch (const TrainingAborted& e) {
    err << e.what() << "\n";
    return kCheckFailed;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kUsage;
}

}  // namespace spikekit::cli
