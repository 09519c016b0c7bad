#include "spikekit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "spikekit/errors.hpp"

namespace spikekit {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

DenseArray::DenseArray(Shape shape, std::vector<double> data, NoCheck)
    : shape_(std::move(shape)), data_(std::move(data)) {}

DenseArray::DenseArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
  if (!all_finite()) throw NonFiniteError("non-finite value in array of shape " + shape_str(shape_));
}

DenseArray DenseArray::zeros(Shape shape) { return full(std::move(shape), 0.0); }

DenseArray DenseArray::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return DenseArray(std::move(shape), std::vector<double>(n, value));
}

DenseArray DenseArray::unchecked(Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  return DenseArray(std::move(shape), std::move(data), NoCheck{});
}

double DenseArray::item() const {
  if (data_.size() != 1) throw DimensionError("item() on array of shape " + shape_str(shape_));
  return data_[0];
}

double DenseArray::at(std::size_t i, std::size_t j) const {
  if (rank() != 2 || i >= shape_[0] || j >= shape_[1]) throw DimensionError("bad 2-d index");
  return data_[i * shape_[1] + j];
}

double DenseArray::at(std::size_t i, std::size_t j, std::size_t k) const {
  if (rank() != 3 || i >= shape_[0] || j >= shape_[1] || k >= shape_[2]) {
    throw DimensionError("bad 3-d index");
  }
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}

DenseArray DenseArray::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return DenseArray(std::move(shape), data_, NoCheck{});
}

DenseArray DenseArray::slice0(std::size_t i) const {
  if (rank() < 2 || i >= shape_[0]) throw DimensionError("slice0 index out of range");
  Shape rest(shape_.begin() + 1, shape_.end());
  const auto n = shape_numel(rest);
  std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(i * n),
                          data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  return DenseArray(std::move(rest), std::move(out), NoCheck{});
}

bool DenseArray::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseArray stack0(std::span<const DenseArray> parts) {
  if (parts.empty()) throw DimensionError("stack0 of zero arrays");
  const Shape& inner = parts.front().shape();
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<double> out;
  out.reserve(shape_numel(shape));
  for (const auto& p : parts) {
    if (p.shape() != inner) throw DimensionError("stack0 operands differ in shape");
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return DenseArray::unchecked(std::move(shape), std::move(out));
}

double max_abs_diff(const DenseArray& a, const DenseArray& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace spikekit
