#pragma once

// Datasets: IDX image/label files and the synthetic shifted-cluster task.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spikekit/tensor.hpp"

namespace spikekit {

struct DatasetMeta {
  std::string name;
  std::size_t features = 0;
  std::size_t classes = 0;
  std::uint64_t seed = 0;
};

struct Dataset {
  DenseArray inputs;        // [samples × features]
  std::vector<int> labels;  // [samples], each < meta.classes
  DatasetMeta meta;

  std::size_t size() const noexcept { return labels.size(); }
  /// Throws ContractError on shape / label inconsistencies.
  void validate() const;
  /// Rows `index` in the given order.
  Dataset subset(std::span<const std::size_t> index) const;
  /// Inputs of rows `index` as [len × features].
  DenseArray rows(std::span<const std::size_t> index) const;
};

// ---------------------------------------------------------------------------
// IDX

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count·rows·cols
};

/// Parsers throw FormatError carrying the byte offset of the first bad or missing byte.
IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_idx_images(const IdxImages& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

/// Pixels scaled by 1/255; classes = max label + 1.
Dataset dataset_from_idx(const IdxImages& images, std::span<const std::uint8_t> labels);
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
/// Inputs must lie in [0,1]; they are stored as round(255·x). Features must equal rows·cols.
void write_idx(const Dataset& data, std::uint32_t rows, std::uint32_t cols,
               const std::filesystem::path& images, const std::filesystem::path& labels);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Synthetic data

struct ShiftedTaskOptions {
  double noise = 1.0;        // per-coordinate Gaussian std within a class
  double mean_spread = 1.0;  // class-mean coordinates ~ U(-spread, spread)
};

/// x = shift + mu[label] + noise·N(0,1); labels cycle 0..classes-1 so every
/// class count is within one of samples/classes.
Dataset gen_shifted_task(std::uint64_t seed, std::size_t samples, std::size_t features,
                         std::size_t classes, double shift, const ShiftedTaskOptions& options = {});

/// The class means used by gen_shifted_task for `seed` (without the shift), [classes × features].
DenseArray shifted_task_means(std::uint64_t seed, std::size_t features, std::size_t classes,
                              const ShiftedTaskOptions& options = {});

/// Fractions of values below `lo` and above `hi`.
struct Truncation {
  double below = 0.0;
  double above = 0.0;
  double total() const { return below + above; }
};
Truncation truncation_fraction(std::span<const double> values, double lo, double hi);

/// Constant-current encoding: [B×F] -> [T×B×F], each slice a copy of x.
DenseArray encode_temporal(const DenseArray& x, std::size_t timesteps);
DenseArray encode_temporal(const Dataset& data, std::size_t timesteps);

/// `label,f0,f1,...` header followed by one row per sample, values printed round-trip exact.
std::string dataset_to_csv(const Dataset& data);
/// Inverse of dataset_to_csv. Classes = max label + 1. Throws FormatError with the byte offset
/// of the first bad field.
Dataset dataset_from_csv(std::string_view text, std::string name = "csv");

}  // namespace spikekit
