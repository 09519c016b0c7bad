#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"

namespace spikekit::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kUsage = 2,
  kRefused = 3,
};

/// Runs one command line (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct AblationRun {
  NeuronKind kind;
  int seed_offset = 0;
  double final_acc = 0.0;
  double final_loss = 0.0;
  std::optional<double> alpha_initial;
  std::optional<double> alpha_final;  // first spiking layer
  std::string curve_csv;
};

struct KindSummary {
  NeuronKind kind;
  int runs = 0;
  double mean_acc = 0.0;
  double se_acc = 0.0;  // sample standard deviation / sqrt(runs)
  int alpha_up = 0;     // runs whose layer-1 alpha ended above its start
  std::optional<double> mean_alpha;
};

struct Comparison {
  NeuronKind adaptive;
  NeuronKind baseline;
  double margin = 0.0;  // mean_acc(adaptive) - mean_acc(baseline)
  double se = 0.0;      // sqrt(se_a² + se_b²)
  bool holds = false;   // margin > se
};

struct AblationResult {
  std::vector<AblationRun> runs;  // kind-major, then seed
  std::vector<KindSummary> kinds;
  std::vector<Comparison> comparisons;  // asn vs ilif, nasn vs nilif when both are present
};

/// Seed s uses data.seed + s, net.seed + s and train.seed + s. Runs fan out over
/// `threads` workers; results do not depend on the worker count.
AblationResult run_ablation(const ExperimentConfig& cfg, int threads);

/// Worker cap from SPIKEKIT_THREADS (hardware concurrency when unset). Throws ConfigError on junk.
int thread_cap();

std::string sha256_hex(std::string_view bytes);

}  // namespace spikekit::cli
