#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tissuedef {

/// Dense row-major tensor of 64-bit floats.
///
/// Graph operations work on rank-2 tensors; higher ranks are only used for
/// storage and serialisation.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() = default;
  /// Tensor filled with `fill`.
  explicit Tensor(Shape shape, double fill = 0.0);
  /// Takes ownership of external data. Rejects a size mismatch and non-finite values.
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
  static Tensor scalar(double value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  /// Leading dimension of a rank-2 tensor (1 for rank-1).
  std::size_t rows() const noexcept;
  /// Trailing dimension.
  std::size_t cols() const noexcept;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;
  void fill(double value);

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::string shape_string(const Tensor::Shape& shape);
std::size_t shape_product(const Tensor::Shape& shape);

}  // namespace tissuedef
