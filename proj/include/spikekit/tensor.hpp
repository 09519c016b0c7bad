#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace spikekit {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Every constructor validates `product(shape) == data.size()` and rejects
/// non-finite values, so a DenseArray that exists is always well-formed.
/// Scalars use shape {1}.
class DenseArray {
 public:
  DenseArray() : shape_{0} {}
  DenseArray(Shape shape, std::vector<double> data);
  DenseArray(Shape shape, std::initializer_list<double> data)
      : DenseArray(std::move(shape), std::vector<double>(data)) {}

  static DenseArray zeros(Shape shape);
  static DenseArray full(Shape shape, double value);
  static DenseArray ones(Shape shape) { return full(std::move(shape), 1.0); }
  static DenseArray scalar(double value) { return DenseArray({1}, {value}); }
  /// Wraps `data` without a finiteness scan. Only for kernel outputs that are
  /// checked by the caller.
  static DenseArray unchecked(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool is_scalar() const noexcept { return data_.size() == 1; }

  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double item() const;
  double at(std::size_t i, std::size_t j) const;
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  /// Same data, new shape with identical element count.
  DenseArray reshaped(Shape shape) const;
  /// Index `i` along axis 0: [d0 × rest...] -> [rest...].
  DenseArray slice0(std::size_t i) const;

  bool all_finite() const noexcept;
  bool operator==(const DenseArray& other) const = default;

 private:
  struct NoCheck {};
  DenseArray(Shape shape, std::vector<double> data, NoCheck);

  Shape shape_;
  std::vector<double> data_;
};

/// Builds [n × rest...] from n equally-shaped arrays.
DenseArray stack0(std::span<const DenseArray> parts);

double max_abs_diff(const DenseArray& a, const DenseArray& b);

}  // namespace spikekit
