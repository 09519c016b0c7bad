#pragma once

// Experiment configuration: a JSON document with a fixed schema. Unknown keys
// and wrongly typed values are rejected with the dotted path of the offending key.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spikekit/folding.hpp"
#include "spikekit/network.hpp"

namespace spikekit::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NeuronBlock {
  NeuronKind kind = NeuronKind::asn;
  int steps = 4;
  double alpha = 0.0;
  double beta = 0.5;
  double v_th = 1.0;
  double normalizer = 0.0;  // 0: D for NILIF / NASN, 1 otherwise
  BoundMode bound_mode = BoundMode::integerized;
  bool detach_reset = false;
  double plif_raw = 0.0;
  bool per_channel_alpha = false;
};

struct NetBlock {
  std::vector<std::size_t> widths;  // hidden widths; the input width comes from the data
  bool identity_input = false;
  double weight_gain = 1.0;
  double classifier_gain = 1.0;
  std::uint64_t seed = 0;
};

struct DataBlock {
  enum class Kind { shifted, idx };
  Kind kind = Kind::shifted;
  // shifted
  std::size_t samples = 512;
  std::size_t features = 16;
  std::size_t classes = 4;
  double shift = 6.0;
  double noise = 1.0;
  double mean_spread = 1.0;
  std::uint64_t seed = 0;
  // idx (paths relative to the config file)
  std::filesystem::path images;
  std::filesystem::path labels;
  std::size_t limit = 0;  // 0: all rows
  double scale = 1.0;     // multiplies the [0, 1] pixels
};

struct AblationBlock {
  std::vector<NeuronKind> kinds;
  int seeds = 10;
};

struct VerifyBlock {
  std::size_t batch = 64;
  Placement placement = Placement::ones_first;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  NeuronBlock neuron;
  NetBlock net;
  DataBlock data;
  TrainConfig train;
  std::optional<AblationBlock> ablation;
  EfficiencyConfig bench;
  VerifyBlock verify;
  double e_ac = 0.9e-12;
  double e_mac = 4.6e-12;
  std::filesystem::path output_dir;
  std::filesystem::path base_dir;  // directory of the config file
};

/// Throws ConfigError on any schema violation.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Neuron parameters of `kind` built from the block (alpha is ignored by ILIF / NILIF).
NeuronParams make_neuron(const NeuronBlock& block, NeuronKind kind, std::size_t timesteps);

Dataset load_data(const ExperimentConfig& cfg);
/// Net for `data` with the configured neuron; per-channel alphas are sized per layer.
SpikingMLP build_net(const ExperimentConfig& cfg, const Dataset& data, NeuronKind kind, std::uint64_t seed);

}  // namespace spikekit::cli
