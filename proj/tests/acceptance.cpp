// One line per acceptance criterion. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "cli.hpp"
#include "idx_bytes.hpp"
#include "netgen.hpp"
#include "oracles.hpp"
#include "recount.hpp"
#include "spikekit/data.hpp"
#include "spikekit/energy.hpp"
#include "spikekit/errors.hpp"
#include "spikekit/folding.hpp"
#include "spikekit/network.hpp"
#include "spikekit/neurons.hpp"
#include "spikekit/quantizer.hpp"

using namespace spikekit;

namespace {

// Tolerances and budgets.
constexpr double kFoldTolerance = 1e-9;
constexpr double kFoldSeconds = 60.0;
constexpr int kFoldNets = 240;
constexpr int kIntegerNets = 60;
constexpr int kSteTuples = 100000;
constexpr int kDegenerationSeeds = 100;
constexpr double kFdTolerance = 1e-5;
constexpr double kFdEps = 1e-5;
constexpr double kFdMargin = 0.05;
constexpr int kFdInstances = 30;
constexpr double kAblationSeconds = 600.0;
constexpr int kAlphaUpNeeded = 8;
constexpr double kSpeedupNeeded = 1.5;
constexpr int kEnergyNets = 50;
constexpr double kPublishedTraceTolerance = 1e-12;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

long long offset_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const FormatError& e) {
    return e.offset();
  }
  return -2;
}

// ---------------------------------------------------------------------------

Outcome c1_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  int failures = 0;
  double worst = 0.0, worst_oracle = 0.0;
  for (int i = 0; i < kFoldNets; ++i) {
    const auto kind = i % 2 ? NeuronKind::nasn : NeuronKind::asn;
    const auto spec = netgen::random_spec(rng, kind, 64);
    const auto net = netgen::build(spec, rng);
    const std::size_t T = 1 + static_cast<std::size_t>(i % 3), B = 3;
    const auto x = netgen::inputs(T, B, spec.widths.front(), spec.steps, rng);
    const auto folded = fold_net(net);
    const auto rep = verify_equivalence(net, folded, x, kFoldTolerance);
    for (const auto& l : rep.layers) worst = std::max(worst, l.max_abs_diff);
    // Spike-driven logits against the scalar-loop network.
    const auto run = spike_inference(folded, x);
    const auto ref = oracle::scalar_net_logits(netgen::to_scalar(net), x.values(), T, B);
    double dev = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k) dev = std::max(dev, std::abs(ref[k] - run.logits[k]));
    worst_oracle = std::max(worst_oracle, dev);
    if (!rep.pass || dev > kFoldTolerance) ++failures;
  }
  int integer_failures = 0;
  for (int i = 0; i < kIntegerNets; ++i) {
    const auto kind = i % 2 ? NeuronKind::nasn : NeuronKind::asn;
    const auto spec = netgen::random_spec(rng, kind, 32, true);
    const auto net = netgen::build(spec, rng);
    const auto x = netgen::inputs(2, 3, spec.widths.front(), spec.steps, rng, true);
    if (!verify_equivalence(net, fold_net(net), x, 0.0).pass) ++integer_failures;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = failures == 0 && integer_failures == 0 && secs < kFoldSeconds;
  o.detail = std::to_string(kFoldNets) + " random nets, max |train - infer| " + num(worst) +
             ", max |infer - scalar oracle| " + num(worst_oracle) + " (tol " + num(kFoldTolerance) + "), " +
             std::to_string(failures) + " failures; " + std::to_string(kIntegerNets) + " integer nets exact, " +
             std::to_string(integer_failures) + " failures; " + num(secs) + " s (< " + num(kFoldSeconds) + " s)";
  return o;
}

Outcome c2_unfolding() {
  long long cases = 0, failures = 0;
  for (int steps : {1, 2, 4, 8}) {
    for (long long c : {-3LL, -1LL, 0LL, 1LL, 3LL}) {
      for (double n : {1.0, static_cast<double>(steps)}) {
        std::vector<double> s;
        for (int s1 = 0; s1 <= steps; ++s1) s.push_back((s1 + static_cast<double>(c)) / n);
        const DenseArray act({1, 1, s.size()}, s);
        const double ceil_alpha[] = {static_cast<double>(c)};
        for (int p = 0; p < 6; ++p) {
          const auto placement = p == 0 ? Placement::ones_first : Placement::shuffled;
          const auto tr = unfold(act, ceil_alpha, steps, n, placement, static_cast<std::uint64_t>(p));
          for (int s1 = 0; s1 <= steps; ++s1) {
            ++cases;
            int sum = 0;
            bool binary = true;
            for (int d = 0; d < steps; ++d) {
              const auto v = tr.at(0, d, 0, static_cast<std::size_t>(s1));
              binary = binary && v <= 1;
              sum += v;
            }
            if (!binary || sum != s1 || tr.block_sum(0, 0, static_cast<std::size_t>(s1)) != s1) ++failures;
          }
        }
      }
    }
  }
  // Downstream sums do not depend on where the ones sit inside a block.
  std::mt19937_64 rng(202);
  long long perm_cases = 0, perm_failures = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int steps = 1 << (trial % 4);
    const std::size_t T = 2, B = 3, in = 7, out = 5;
    std::uniform_int_distribution<int> sd(0, steps), wd(-3, 3);
    std::vector<double> s(T * B * in), w(out * in);
    for (auto& v : s) v = sd(rng);
    for (auto& v : w) v = wd(rng);
    const DenseArray act({T, B, in}, s);
    std::vector<std::vector<double>> sums;
    for (int p = 0; p < 5; ++p) {
      const auto tr = unfold(act, std::vector<double>{0.0}, steps, 1.0,
                             p == 0 ? Placement::ones_first : Placement::shuffled, static_cast<std::uint64_t>(trial * 7 + p));
      std::vector<double> acc(T * B * out, 0.0);
      for (std::size_t t = 0; t < T; ++t)
        for (int d = 0; d < steps; ++d)
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < in; ++i)
              if (tr.at(t, d, b, i))
                for (std::size_t o = 0; o < out; ++o) acc[(t * B + b) * out + o] += w[o * in + i];
      sums.push_back(acc);
    }
    std::vector<double> dense(T * B * out, 0.0);
    for (std::size_t tb = 0; tb < T * B; ++tb)
      for (std::size_t o = 0; o < out; ++o)
        for (std::size_t i = 0; i < in; ++i) dense[tb * out + o] += w[o * in + i] * s[tb * in + i];
    for (const auto& a : sums) {
      ++perm_cases;
      if (a != dense) ++perm_failures;
    }
  }
  Outcome o;
  o.pass = failures == 0 && perm_failures == 0;
  o.detail = std::to_string(cases) + " exhaustive (S1, D, ceil(alpha), N, placement) cases, " +
             std::to_string(failures) + " failures; " + std::to_string(perm_cases) +
             " placements against dense W*S1, " + std::to_string(perm_failures) + " failures";
  return o;
}

Outcome c3_ste() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> ad(-3.0, 3.0), ud(-6.0, 14.0), gd(-1.0, 1.0);
  std::uniform_int_distribution<int> dd(1, 8), pick(0, 3);
  const double scales[] = {0.5, 1.0, 2.0, 0.25};
  long long x_mismatch = 0, a_mismatch = 0, boundary = 0;
  constexpr std::size_t kPerTuple = 8;
  for (int trial = 0; trial < kSteTuples; ++trial) {
    QuantizerSpec spec;
    spec.alpha = ad(rng);
    spec.steps = dd(rng);
    spec.normalizer = trial % 2 ? spec.steps : 1.0;
    spec.grad_scale = scales[pick(rng)];
    std::vector<double> u(kPerTuple), g(kPerTuple);
    for (auto& v : u) v = ud(rng);
    for (auto& v : g) v = gd(rng);
    // Put both window edges in every tuple.
    u[0] = spec.alpha;
    u[1] = spec.alpha + spec.steps;
    boundary += 2;
    const DenseArray ua({kPerTuple}, u), ga({kPerTuple}, g);
    const auto gx = quantize_backward_x(ga, ua, spec);
    for (std::size_t i = 0; i < kPerTuple; ++i) {
      if (gx[i] != oracle::ste_grad_x(g[i], u[i], spec.alpha, spec.steps, spec.normalizer)) ++x_mismatch;
    }
    const double galpha = quantize_backward_alpha(ga, ua, spec);
    if (galpha != oracle::ste_grad_alpha(g, u, spec.alpha, spec.steps, spec.normalizer, spec.grad_scale)) ++a_mismatch;
  }
  // Worked example: U = [-1, 2, 7], upstream [0.5, -0.2, 0.3], alpha 0, D 4 gives 0.8.
  QuantizerSpec ex;
  ex.alpha = 0.0;
  ex.steps = 4;
  const double worked = quantize_backward_alpha(DenseArray({3}, {0.5, -0.2, 0.3}), DenseArray({3}, {-1, 2, 7}), ex);
  const double worked_oracle = oracle::ste_grad_alpha({0.5, -0.2, 0.3}, {-1, 2, 7}, 0.0, 4, 1.0, 1.0);
  Outcome o;
  o.pass = x_mismatch == 0 && a_mismatch == 0 && worked == worked_oracle && std::abs(worked - 0.8) < 1e-15;
  o.detail = std::to_string(kSteTuples) + " tuples x " + std::to_string(kPerTuple) + " elements (" +
             std::to_string(boundary) + " on window edges, a in {0.25,0.5,1,2}); backward-x mismatches " +
             std::to_string(x_mismatch) + ", backward-alpha mismatches " + std::to_string(a_mismatch) +
             "; worked example " + num(worked);
  return o;
}

std::pair<DenseArray, DenseArray> neuron_fwd_bwd(const DenseArray& x, const NeuronParams& p, const DenseArray& r,
                                                 bool freeze_alpha) {
  Tape t;
  Var xv = t.leaf(x, true);
  auto vars = bind_neuron(t, p, !freeze_alpha);
  if (freeze_alpha && p.alpha_learnable()) vars.alpha = t.constant(DenseArray::scalar(0.0));
  auto out = neuron_forward(t, xv, p, vars, Var{});
  auto g = t.backward(t.sum(t.mul(out.activations, t.constant(r))));
  return {t.value(out.activations), g.of(xv)};
}

Outcome c4_degeneration() {
  int frozen_fail = 0, nasn_fail = 0, lif_fail = 0, lif_compared = 0;
  for (int seed = 0; seed < kDegenerationSeeds; ++seed) {
    std::mt19937_64 rng(4000 + seed);
    const int steps = std::uniform_int_distribution<int>(1, 8)(rng);
    const auto x = oracle::random_array({4, 3, 5}, rng, -2, steps + 2.0);
    const auto r = oracle::random_array({4, 3, 5}, rng);
    const auto asn = neuron_fwd_bwd(x, NeuronParams::asn(steps, 0.0, 0.5), r, true);
    const auto ilif = neuron_fwd_bwd(x, NeuronParams::ilif(steps, 0.5), r, false);
    const auto nasn = neuron_fwd_bwd(x, NeuronParams::nasn(steps, 0.0, 0.5), r, true);
    const auto nilif = neuron_fwd_bwd(x, NeuronParams::nilif(steps, 0.5), r, false);
    if (!(asn.first == ilif.first && asn.second == ilif.second)) ++frozen_fail;
    if (!(nasn.first == nilif.first && nasn.second == nilif.second)) ++frozen_fail;

    const double alpha = std::uniform_real_distribution<double>(-3, 3)(rng);
    const auto xw = oracle::random_array({4, 3, 6}, rng, -5, 9);
    const auto a = run_neuron(xw, NeuronParams::asn(steps, alpha, 0.5));
    const auto n = run_neuron(xw, NeuronParams::nasn(steps, alpha, 0.5));
    bool same = true;
    for (std::size_t i = 0; i < xw.numel(); ++i) same = same && n.activations[i] * steps == a.activations[i];
    for (std::size_t t = 0; t < a.h.size(); ++t) same = same && a.h[t] == n.h[t];
    if (!same) ++nasn_fail;

    const auto xl = oracle::random_array({6, 2, 4}, rng, -1, 2);
    const auto lif = run_neuron(xl, NeuronParams::lif(0.5, 0.5));
    bool tie = false;
    for (const auto& u : lif.u)
      for (double v : u.values()) tie = tie || std::abs(v - 0.5) <= 1e-9;
    if (tie) continue;
    ++lif_compared;
    const auto il = run_neuron(xl, NeuronParams::ilif(1, 0.5));
    bool eq = il.activations == lif.activations;
    for (std::size_t t = 0; t < il.h.size(); ++t) eq = eq && il.h[t] == lif.h[t];
    if (!eq) ++lif_fail;
  }
  Outcome o;
  o.pass = frozen_fail == 0 && nasn_fail == 0 && lif_fail == 0 && lif_compared >= kDegenerationSeeds * 9 / 10;
  o.detail = std::to_string(kDegenerationSeeds) + " seeds: frozen ASN/NASN vs ILIF/NILIF fwd+bwd bitwise, " +
             std::to_string(frozen_fail) + " failures; NASN*N vs ASN, " + std::to_string(nasn_fail) +
             " failures; ILIF D=1 vs LIF V_th=0.5 on " + std::to_string(lif_compared) + " tie-free seeds, " +
             std::to_string(lif_fail) + " failures";
  return o;
}

struct FdCase {
  SpikingMLP net;
  DenseArray x;
  std::size_t T = 2, B = 2;
};

// Potentials under an unclipped window decide alpha per layer so that every one
// of them ends up strictly inside its final window and away from rounding ties.
std::optional<FdCase> draw_fd_case(std::mt19937_64& rng, bool normalized) {
  constexpr int kSteps = 8;
  std::uniform_int_distribution<std::size_t> wd(2, 4);
  FdCase c;
  oracle::ScalarNet s;
  s.widths = {wd(rng), wd(rng), wd(rng)};
  s.classes = 3;
  s.steps = 200;
  s.n = normalized ? kSteps : 1.0;
  s.beta = std::uniform_real_distribution<double>(0.2, 0.9)(rng);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (std::size_t l = 0; l + 1 < s.widths.size(); ++l) {
    std::vector<double> w(s.widths[l + 1] * s.widths[l]);
    for (auto& v : w) v = nd(rng) * (normalized ? 3.0 : 1.0) / std::sqrt(static_cast<double>(s.widths[l]));
    s.w.push_back(w);
    s.alpha.push_back(-100.0);
  }
  s.wc.resize(s.classes * s.widths.back());
  s.bc.resize(s.classes);
  for (auto& v : s.wc) v = nd(rng);
  for (auto& v : s.bc) v = nd(rng);
  std::vector<double> x(c.T * c.B * s.widths[0]);
  for (auto& v : x) v = std::uniform_real_distribution<double>(0.0, 2.0)(rng);

  std::vector<double> us;
  oracle::scalar_net_logits(s, x, c.T, c.B, nullptr, false, &us);
  std::size_t k = 0;
  for (std::size_t l = 0; l + 1 < s.widths.size(); ++l) {
    const std::size_t count = c.T * c.B * s.widths[l + 1];
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < count; ++i, ++k) {
      const double u = us[k];
      const double frac = u - std::floor(u);
      if (std::abs(frac - 0.5) < kFdMargin) return std::nullopt;
      lo = std::min(lo, u);
      hi = std::max(hi, u);
    }
    // Window [alpha, alpha + D] with alpha just below the lowest potential's rounding cell.
    const double alpha = std::round(lo) - 0.5 - kFdMargin;
    if (hi > alpha + kSteps - kFdMargin || std::round(hi) > std::ceil(alpha) + kSteps) return std::nullopt;
    s.alpha[l] = alpha;
  }
  for (std::size_t l = 0; l + 1 < s.widths.size(); ++l) {
    const auto p = normalized ? NeuronParams::nasn(kSteps, s.alpha[l], s.beta, kSteps)
                              : NeuronParams::asn(kSteps, s.alpha[l], s.beta);
    c.net.layers.push_back({DenseArray({s.widths[l + 1], s.widths[l]}, s.w[l]), p, false});
  }
  c.net.classifier_weight = DenseArray({s.classes, s.widths.back()}, s.wc);
  c.net.classifier_bias = DenseArray({s.classes}, s.bc);
  c.x = DenseArray({c.T, c.B, s.widths[0]}, x);
  return c;
}

Outcome c5_gradients() {
  std::mt19937_64 rng(505);
  int instances = 0, attempts = 0;
  double worst = 0.0;
  std::size_t params = 0;
  bool repeat_ok = true;
  while (instances < kFdInstances && attempts < 100000) {
    ++attempts;
    auto drawn = draw_fd_case(rng, instances % 2 == 1);
    if (!drawn) continue;
    const auto& c = *drawn;
    const auto r = oracle::random_array({c.B, c.net.classes()}, rng);
    auto grads = [&] {
      Tape t;
      auto vars = bind_net(t, c.net, true);
      auto f = forward_net(t, c.net, vars, t.constant(c.x));
      auto g = t.backward(t.sum(t.mul(f.logits, t.constant(r))));
      std::vector<DenseArray> out;
      for (Var w : vars.weights) out.push_back(g.of(w));
      out.push_back(g.of(vars.classifier_weight));
      return out;
    };
    const auto g = grads();
    repeat_ok = repeat_ok && grads() == g;

    const auto scalar = netgen::to_scalar(c.net);
    std::vector<double> offsets, us;
    oracle::scalar_net_logits(scalar, c.x.values(), c.T, c.B, &offsets, false, &us);
    auto loss_with = [&](const oracle::ScalarNet& s) {
      auto off = offsets;
      const auto lg = oracle::scalar_net_logits(s, c.x.values(), c.T, c.B, &off, true);
      double acc = 0.0;
      for (std::size_t i = 0; i < lg.size(); ++i) acc += lg[i] * r[i];
      return acc;
    };
    for (std::size_t l = 0; l <= scalar.w.size(); ++l) {
      const bool head = l == scalar.w.size();
      const auto& base = head ? scalar.wc : scalar.w[l];
      auto f = [&](const std::vector<double>& v) {
        auto s = scalar;
        (head ? s.wc : s.w[l]) = v;
        return loss_with(s);
      };
      for (std::size_t i = 0; i < base.size(); ++i) {
        worst = std::max(worst, std::abs(oracle::central_diff(f, base, i, kFdEps) - g[l][i]));
        ++params;
      }
    }
    ++instances;
  }
  // Whole training runs repeat bitwise.
  const auto data = gen_shifted_task(3, 96, 6, 3, 1.0);
  NetInit init;
  init.widths = {6, 12, 8};
  init.classes = 3;
  init.neuron = NeuronParams::asn(4, 0.0);
  init.weight_gain = 2.0;
  init.seed = 5;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 16;
  cfg.lr = 0.01;
  cfg.alpha_lr = 0.01;
  cfg.seed = 6;
  auto a = make_mlp(init), b = make_mlp(init);
  const auto ca = train(a, data, cfg), cb = train(b, data, cfg);
  bool train_repeat = ca.csv() == cb.csv();
  for (std::size_t l = 0; l < a.layers.size(); ++l) train_repeat = train_repeat && a.layers[l].weight == b.layers[l].weight;

  Outcome o;
  o.pass = instances == kFdInstances && worst <= kFdTolerance && repeat_ok && train_repeat;
  o.detail = std::to_string(instances) + " interior instances (ASN and NASN, 2 layers, D=8, margin " +
             num(kFdMargin) + "), " + std::to_string(params) + " weights, max |fd - bptt| " + num(worst) +
             " (tol " + num(kFdTolerance) + ", eps " + num(kFdEps) + "); repeat gradients bitwise " +
             (repeat_ok ? "yes" : "no") + ", repeat training bitwise " + (train_repeat ? "yes" : "no");
  return o;
}

Outcome c6_ablation() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = cli::load_config(std::filesystem::path(SPIKEKIT_SOURCE_DIR) / "configs" / "ablation.json");
  const auto result = cli::run_ablation(cfg, cli::thread_cap());
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = secs < kAblationSeconds;
  std::string d;
  for (const auto& k : result.kinds) {
    d += std::string(to_string(k.kind)) + " " + num(k.mean_acc) + "+-" + num(k.se_acc);
    if (k.kind == NeuronKind::asn || k.kind == NeuronKind::nasn) {
      d += " (alpha up " + std::to_string(k.alpha_up) + "/" + std::to_string(k.runs) + ")";
      o.pass = o.pass && k.alpha_up >= kAlphaUpNeeded;
    }
    d += "; ";
  }
  int held = 0;
  for (const auto& c : result.comparisons) {
    d += std::string(to_string(c.adaptive)) + "-" + std::string(to_string(c.baseline)) + " margin " + num(c.margin) +
         " vs se " + num(c.se) + "; ";
    held += c.holds;
  }
  o.pass = o.pass && result.comparisons.size() == 2 && held == 2;
  o.detail = d + num(secs) + " s (< " + num(kAblationSeconds) + " s)";
  return o;
}

Outcome c7_efficiency() {
  EfficiencyConfig cfg;  // D=4, widths 256, T=4, 5 trials
  cfg.steps = 4;
  cfg.widths = {256, 256, 256};
  cfg.trials = 5;
  const auto rep = benchmark_training_efficiency(cfg);
  Outcome o;
  o.pass = rep.ratio > kSpeedupNeeded;
  o.detail = "median s/epoch integer(T=4) " + num(rep.integer_median) + ", binary(T*D=16) " + num(rep.binary_median) +
             ", ratio " + num(rep.ratio) + " (> " + num(kSpeedupNeeded) + ")";
  return o;
}

std::vector<double> values_of(const std::vector<DenseArray>& steps) {
  std::vector<double> v;
  for (const auto& s : steps) v.push_back(s.item());
  return v;
}

Outcome c8_traces() {
  const auto series = [](std::vector<double> v) {
    const auto n = v.size();
    return DenseArray({n, 1, 1}, std::move(v));
  };
  const std::vector<double> x = {2.3, 0.4, 3.8};
  const auto asn = run_neuron(series(x), NeuronParams::asn(4, 0.0, 0.5));
  const auto asn_ref = oracle::asn_scalar(x, 0.5, 0.0, 4);
  const auto nasn = run_neuron(series(x), NeuronParams::nasn(4, 0.0, 0.5));
  const auto nasn_ref = oracle::asn_scalar(x, 0.5, 0.0, 4, 4.0);
  const auto lif = run_neuron(series({1.2, 0.3}), NeuronParams::lif(0.5, 1.0));
  const auto lif_ref = oracle::lif_scalar({1.2, 0.3}, 0.5, 1.0);
  const auto psn = run_neuron(series({0.7, 0.2}), NeuronParams::psn(2));
  const auto psn_ref = oracle::psn_scalar({1, 0, 0, 1}, {0.5, 0.5}, {0.7, 0.2});

  bool ok = asn.activations.values() == asn_ref.s && values_of(asn.h) == asn_ref.h;
  ok = ok && nasn.activations.values() == nasn_ref.s && values_of(nasn.h) == nasn_ref.h;
  ok = ok && lif.activations.values() == lif_ref.s && values_of(lif.h) == lif_ref.h;
  ok = ok && psn.activations.values() == psn_ref;
  // Published values.
  const std::vector<double> h_pub = {0.15, -0.225, -0.2125};
  double h_dev = 0.0;
  for (std::size_t i = 0; i < 3; ++i) h_dev = std::max(h_dev, std::abs(asn_ref.h[i] - h_pub[i]));
  ok = ok && asn_ref.s == std::vector<double>{2, 1, 4} && h_dev <= kPublishedTraceTolerance;
  ok = ok && nasn_ref.s == std::vector<double>{0.5, 0.25, 1.0};
  ok = ok && lif_ref.s == std::vector<double>{1, 0} && psn_ref == std::vector<double>{1, 0};
  Outcome o;
  o.pass = ok;
  o.detail = "ASN S=[2,1,4] H within " + num(h_dev) + " of [0.15,-0.225,-0.2125], NASN S=[0.5,0.25,1], LIF S=[1,0], "
             "PSN S=[1,0]; library equals scalar oracles exactly: " + std::string(ok ? "yes" : "no");
  return o;
}

Outcome c9_energy() {
  std::mt19937_64 rng(909);
  int failures = 0;
  for (int trial = 0; trial < kEnergyNets; ++trial) {
    const auto kind = trial % 2 ? NeuronKind::nasn : NeuronKind::asn;
    const auto spec = netgen::random_spec(rng, kind, 48);
    const auto f = fold_net(netgen::build(spec, rng));
    const auto x = netgen::inputs(3, 4, spec.widths.front(), spec.steps, rng);
    const auto run = spike_inference(f, x);
    const auto rep = count_ops(f, x, run);
    const auto ref = oracle::brute_force(f, run);
    bool ok = rep.layers.size() == ref.spikes.size();
    std::uint64_t ac = 0;
    for (std::size_t l = 0; ok && l < rep.layers.size(); ++l) {
      ok = rep.layers[l].spikes == ref.spikes[l] && rep.layers[l].ac_count == ref.acs[l];
      ac += ref.acs[l];
    }
    ok = ok && rep.totals.ac_count == ac;
    failures += !ok;
  }
  // Silent inputs with ceil(alpha) = 0 in every layer.
  int zero_failures = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto spec = netgen::random_spec(rng, trial % 2 ? NeuronKind::nasn : NeuronKind::asn, 48);
    for (auto& a : spec.alphas) a = -std::uniform_real_distribution<double>(0.0, 0.99)(rng);
    const auto f = fold_net(netgen::build(spec, rng));
    const auto rep = measure_energy(f, DenseArray::zeros({2, 3, spec.widths.front()}));
    zero_failures += rep.totals.ac_count != 0 || rep.totals.mac_count != 0;
  }
  Outcome o;
  o.pass = failures == 0 && zero_failures == 0;
  o.detail = std::to_string(kEnergyNets) + " random nets recounted slot by slot, " + std::to_string(failures) +
             " mismatches; 20 zero-input nets, " + std::to_string(zero_failures) + " with nonzero AC/MAC";
  return o;
}

Outcome c10_idx() {
  using namespace idx_bytes;
  std::mt19937_64 rng(1010);
  std::uniform_int_distribution<int> byte(0, 255);
  int roundtrip_fail = 0;
  const auto dir = std::filesystem::temp_directory_path() / ("spikekit_accept_idx_" + std::to_string(rng()));
  std::filesystem::create_directories(dir);
  for (int trial = 0; trial < 20; ++trial) {
    IdxImages img;
    img.count = 1 + static_cast<std::uint32_t>(trial);
    img.rows = 1 + static_cast<std::uint32_t>(trial % 5);
    img.cols = 1 + static_cast<std::uint32_t>(trial % 7);
    img.pixels.resize(static_cast<std::size_t>(img.count) * img.rows * img.cols);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(byte(rng));
    std::vector<std::uint8_t> labels(img.count);
    for (auto& l : labels) l = static_cast<std::uint8_t>(byte(rng) % 10);
    const auto img_bytes = encode_idx_images(img);
    const auto lab_bytes = encode_idx_labels(labels);
    bool ok = img_bytes == raw_images(kIdxImagesMagic, img.count, img.rows, img.cols, img.pixels) &&
              lab_bytes == raw_labels(kIdxLabelsMagic, labels);
    const auto back = parse_idx_images(img_bytes);
    ok = ok && back.count == img.count && back.rows == img.rows && back.cols == img.cols && back.pixels == img.pixels;
    ok = ok && parse_idx_labels(lab_bytes) == labels;
    const auto d = dataset_from_idx(img, labels);
    write_idx(d, img.rows, img.cols, dir / "i.idx", dir / "l.idx");
    ok = ok && read_file(dir / "i.idx") == img_bytes && read_file(dir / "l.idx") == lab_bytes;
    const auto loaded = load_idx(dir / "i.idx", dir / "l.idx");
    ok = ok && loaded.inputs == d.inputs && loaded.labels == d.labels;
    roundtrip_fail += !ok;
  }
  std::filesystem::remove_all(dir);

  int offset_fail = 0;
  const auto expect = [&](long long got, long long want) { offset_fail += got != want; };
  expect(offset_of([] { parse_idx_images(raw_images(0x801, 1, 1, 1, {0})); }), 0);
  expect(offset_of([] { parse_idx_labels(raw_labels(0x803, {1})); }), 0);
  expect(offset_of([] { parse_idx_images(raw_images(0x0803 | 0x01000000, 1, 1, 1, {0})); }), 0);
  auto hdr = raw_images(0x803, 1, 2, 2, {});
  hdr.resize(10);
  expect(offset_of([&] { parse_idx_images(hdr); }), 10);
  expect(offset_of([] { parse_idx_images(raw_images(0x803, 1, 2, 2, {1, 2, 3})); }), 19);
  auto lab = raw_labels(0x801, {1, 2, 3});
  lab.pop_back();
  expect(offset_of([&] { parse_idx_labels(lab); }), 10);
  expect(offset_of([] { parse_idx_labels(std::vector<std::uint8_t>{0, 0}); }), 2);
  Outcome o;
  o.pass = roundtrip_fail == 0 && offset_fail == 0;
  o.detail = "20 random image/label sets byte-equal through encode, parse, write and load, " +
             std::to_string(roundtrip_fail) + " failures; 7 malformed-magic and truncation offsets, " +
             std::to_string(offset_fail) + " wrong";
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"C1", "train/infer equivalence", c1_equivalence},
      {"C2", "unfolding identity", c2_unfolding},
      {"C3", "straight-through rules", c3_ste},
      {"C4", "baseline degeneration", c4_degeneration},
      {"C5", "gradient numerics and determinism", c5_gradients},
      {"C6", "adaptive firing ablation", c6_ablation},
      {"C7", "training efficiency", c7_efficiency},
      {"C8", "golden traces", c8_traces},
      {"C9", "energy accounting", c9_energy},
      {"C10", "IDX loader", c10_idx},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    failed += !o.pass;
    std::printf("%s %-4s %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  return failed;
}
