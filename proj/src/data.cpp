#include "spikekit/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

#include "spikekit/errors.hpp"

namespace spikekit {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void require_bytes(std::span<const std::uint8_t> bytes, std::size_t needed, const char* what) {
  if (bytes.size() < needed) {
    throw FormatError(std::string("truncated IDX ") + what + ": expected " +
                          std::to_string(needed) + " bytes, file has " +
                          std::to_string(bytes.size()),
                      static_cast<long long>(bytes.size()));
  }
}

void check_magic(std::span<const std::uint8_t> bytes, std::uint32_t expected, const char* what) {
  require_bytes(bytes, 4, what);
  const auto magic = read_be32(bytes, 0);
  if (magic != expected) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad IDX %s magic 0x%08x (expected 0x%08x)", what, magic,
                  expected);
    throw FormatError(buf, 0);
  }
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

void Dataset::validate() const {
  if (inputs.rank() != 2) throw ContractError("dataset inputs must be [samples × features]");
  if (inputs.dim(0) != labels.size()) {
    throw ContractError("dataset has " + std::to_string(inputs.dim(0)) + " rows but " +
                        std::to_string(labels.size()) + " labels");
  }
  if (inputs.dim(1) != meta.features) throw ContractError("dataset feature count mismatch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= meta.classes) {
      throw ContractError("label " + std::to_string(y) + " outside [0, " +
                          std::to_string(meta.classes) + ")");
    }
  }
}

DenseArray Dataset::rows(std::span<const std::size_t> index) const {
  const std::size_t f = inputs.dim(1);
  std::vector<double> out;
  out.reserve(index.size() * f);
  const auto& v = inputs.values();
  for (auto i : index) {
    if (i >= size()) throw ContractError("row index out of range");
    out.insert(out.end(), v.begin() + static_cast<std::ptrdiff_t>(i * f),
               v.begin() + static_cast<std::ptrdiff_t>((i + 1) * f));
  }
  return DenseArray::unchecked({index.size(), f}, std::move(out));
}

Dataset Dataset::subset(std::span<const std::size_t> index) const {
  Dataset d;
  d.inputs = rows(index);
  d.labels.reserve(index.size());
  for (auto i : index) d.labels.push_back(labels[i]);
  d.meta = meta;
  return d;
}

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, kIdxImagesMagic, "images");
  require_bytes(bytes, 16, "images header");
  IdxImages img;
  img.count = read_be32(bytes, 4);
  img.rows = read_be32(bytes, 8);
  img.cols = read_be32(bytes, 12);
  const std::size_t n = std::size_t{img.count} * img.rows * img.cols;
  require_bytes(bytes, 16 + n, "images payload");
  if (bytes.size() != 16 + n) {
    throw FormatError("trailing bytes after IDX images payload", static_cast<long long>(16 + n));
  }
  img.pixels.assign(bytes.begin() + 16, bytes.end());
  return img;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, kIdxLabelsMagic, "labels");
  require_bytes(bytes, 8, "labels header");
  const std::size_t n = read_be32(bytes, 4);
  require_bytes(bytes, 8 + n, "labels payload");
  if (bytes.size() != 8 + n) {
    throw FormatError("trailing bytes after IDX labels payload", static_cast<long long>(8 + n));
  }
  return {bytes.begin() + 8, bytes.end()};
}

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images) {
  if (images.pixels.size() != std::size_t{images.count} * images.rows * images.cols) {
    throw ContractError("IDX image pixel count does not match its header");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  put_be32(out, kIdxImagesMagic);
  put_be32(out, images.count);
  put_be32(out, images.rows);
  put_be32(out, images.cols);
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  put_be32(out, kIdxLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

Dataset dataset_from_idx(const IdxImages& images, std::span<const std::uint8_t> labels) {
  if (labels.size() != images.count) {
    // The count field of the labels file sits at byte 4.
    throw FormatError("label count " + std::to_string(labels.size()) +
                          " does not match image count " + std::to_string(images.count),
                      4);
  }
  const std::size_t features = std::size_t{images.rows} * images.cols;
  std::vector<double> px(images.pixels.size());
  std::transform(images.pixels.begin(), images.pixels.end(), px.begin(),
                 [](std::uint8_t p) { return p / 255.0; });
  Dataset d;
  d.inputs = DenseArray({images.count, features}, std::move(px));
  d.labels.assign(labels.begin(), labels.end());
  d.meta.name = "idx";
  d.meta.features = features;
  d.meta.classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1u;
  return d;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = parse_idx_images(read_file(images));
  const auto lab = parse_idx_labels(read_file(labels));
  auto d = dataset_from_idx(img, lab);
  d.meta.name = images.filename().string();
  return d;
}

void write_idx(const Dataset& data, std::uint32_t rows, std::uint32_t cols,
               const std::filesystem::path& images, const std::filesystem::path& labels) {
  data.validate();
  if (std::size_t{rows} * cols != data.meta.features) {
    throw ContractError("rows·cols must equal the feature count");
  }
  IdxImages img;
  img.count = static_cast<std::uint32_t>(data.size());
  img.rows = rows;
  img.cols = cols;
  img.pixels.reserve(data.inputs.numel());
  for (double x : data.inputs.values()) {
    if (x < 0.0 || x > 1.0) throw ContractError("IDX pixels must lie in [0, 1]");
    img.pixels.push_back(static_cast<std::uint8_t>(std::lround(x * 255.0)));
  }
  std::vector<std::uint8_t> lab;
  lab.reserve(data.size());
  for (int y : data.labels) {
    if (y > 255) throw ContractError("IDX labels are single bytes");
    lab.push_back(static_cast<std::uint8_t>(y));
  }
  write_file(images, encode_idx_images(img));
  write_file(labels, encode_idx_labels(lab));
}

DenseArray shifted_task_means(std::uint64_t seed, std::size_t features, std::size_t classes,
                              const ShiftedTaskOptions& options) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mean(-options.mean_spread, options.mean_spread);
  std::vector<double> mu(classes * features);
  for (auto& m : mu) m = mean(rng);
  return DenseArray({classes, features}, std::move(mu));
}

Dataset gen_shifted_task(std::uint64_t seed, std::size_t samples, std::size_t features,
                         std::size_t classes, double shift, const ShiftedTaskOptions& options) {
  if (classes < 2) throw ContractError("shifted task needs at least two classes");
  if (features == 0) throw ContractError("shifted task needs at least one feature");
  if (!(options.noise >= 0.0) || !(options.mean_spread >= 0.0)) {
    throw ContractError("shifted task noise and spread must be nonnegative");
  }
  const auto mu = shifted_task_means(seed, features, classes, options);
  // Separate stream for the per-sample noise so the means do not depend on `samples`.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset d;
  std::vector<double> x(samples * features);
  d.labels.resize(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const auto y = i % classes;
    d.labels[i] = static_cast<int>(y);
    for (std::size_t f = 0; f < features; ++f) {
      x[i * features + f] = shift + mu[y * features + f] + options.noise * gauss(rng);
    }
  }
  d.inputs = DenseArray({samples, features}, std::move(x));
  d.meta = {"shifted", features, classes, seed};
  return d;
}

Truncation truncation_fraction(std::span<const double> values, double lo, double hi) {
  Truncation t;
  if (values.empty()) return t;
  std::size_t below = 0, above = 0;
  for (double v : values) {
    below += v < lo;
    above += v > hi;
  }
  t.below = static_cast<double>(below) / static_cast<double>(values.size());
  t.above = static_cast<double>(above) / static_cast<double>(values.size());
  return t;
}

DenseArray encode_temporal(const DenseArray& x, std::size_t timesteps) {
  if (timesteps == 0) throw ContractError("encode_temporal needs T >= 1");
  if (x.rank() != 2) throw DimensionError("encode_temporal expects [B×F], got " + shape_str(x.shape()));
  std::vector<double> out;
  out.reserve(timesteps * x.numel());
  for (std::size_t t = 0; t < timesteps; ++t) out.insert(out.end(), x.values().begin(), x.values().end());
  return DenseArray::unchecked({timesteps, x.dim(0), x.dim(1)}, std::move(out));
}

DenseArray encode_temporal(const Dataset& data, std::size_t timesteps) {
  return encode_temporal(data.inputs, timesteps);
}

std::string dataset_to_csv(const Dataset& data) {
  data.validate();
  std::string out = "label";
  for (std::size_t f = 0; f < data.meta.features; ++f) out += ",f" + std::to_string(f);
  out += '\n';
  const auto& v = data.inputs.values();
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += std::to_string(data.labels[i]);
    for (std::size_t f = 0; f < data.meta.features; ++f) {
      out += ',';
      append_double(out, v[i * data.meta.features + f]);
    }
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(std::string_view text, std::string name) {
  std::size_t pos = 0;
  auto next_line = [&](std::size_t& start) {
    start = pos;
    const auto nl = text.find('\n', pos);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
  };
  std::size_t line_at = 0;
  const auto header = next_line(line_at);
  if (header.substr(0, 5) != "label") throw FormatError("CSV header must start with 'label'", 0);
  const auto features = static_cast<std::size_t>(std::count(header.begin(), header.end(), ','));
  if (features == 0) throw FormatError("CSV has no feature columns", 0);

  std::vector<double> values;
  std::vector<int> labels;
  while (pos < text.size()) {
    const auto line = next_line(line_at);
    if (line.empty()) continue;
    std::size_t field_start = 0, column = 0;
    while (field_start <= line.size()) {
      auto comma = line.find(',', field_start);
      if (comma == std::string_view::npos) comma = line.size();
      const auto field = line.substr(field_start, comma - field_start);
      const auto at = static_cast<long long>(line_at + field_start);
      if (column > features) throw FormatError("CSV row has too many fields", at);
      if (column == 0) {
        int label = -1;
        const auto r = std::from_chars(field.data(), field.data() + field.size(), label);
        if (r.ec != std::errc() || r.ptr != field.data() + field.size() || label < 0) {
          throw FormatError("CSV label is not a non-negative integer", at);
        }
        labels.push_back(label);
      } else {
        double v = 0.0;
        const auto r = std::from_chars(field.data(), field.data() + field.size(), v);
        if (r.ec != std::errc() || r.ptr != field.data() + field.size() || !std::isfinite(v)) {
          throw FormatError("CSV value is not a finite number", at);
        }
        values.push_back(v);
      }
      ++column;
      field_start = comma + 1;
    }
    if (column != features + 1) throw FormatError("CSV row has too few fields", static_cast<long long>(line_at));
  }
  if (labels.empty()) throw FormatError("CSV has no rows", static_cast<long long>(text.size()));
  Dataset d;
  d.meta.name = std::move(name);
  d.meta.features = features;
  d.meta.classes = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  d.inputs = DenseArray({labels.size(), features}, std::move(values));
  d.labels = std::move(labels);
  d.validate();
  return d;
}

}  // namespace spikekit
