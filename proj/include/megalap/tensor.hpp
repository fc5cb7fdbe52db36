#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace megalap {

using i64 = std::int64_t;

/// Dense row-major tensor of 64-bit floats. This is the one value type for
/// images, feature maps, masks and gradients. Sizes are desk-scale, so value
/// semantics (copy/move) are fine everywhere. Treat instances as immutable
/// once shared between components; only optimizer state is updated in place.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<i64> shape);
  Tensor(std::vector<i64> shape, std::vector<double> data);

  static Tensor full(std::vector<i64> shape, double value);
  static Tensor zeros_like(const Tensor& t);

  const std::vector<i64>& shape() const { return shape_; }
  i64 rank() const { return static_cast<i64>(shape_.size()); }
  i64 extent(i64 axis) const { return shape_[static_cast<size_t>(axis)]; }
  i64 numel() const { return static_cast<i64>(data_.size()); }
  bool defined() const { return !data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](i64 i) { return data_[static_cast<size_t>(i)]; }
  double operator[](i64 i) const { return data_[static_cast<size_t>(i)]; }

  // Accessors for the two layouts in use: [B,C,H,W] and [C,H,W].
  double& at4(i64 b, i64 c, i64 h, i64 w) {
    return data_[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  double at4(i64 b, i64 c, i64 h, i64 w) const {
    return data_[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  double& at3(i64 c, i64 h, i64 w) {
    return data_[static_cast<size_t>((c * shape_[1] + h) * shape_[2] + w)];
  }
  double at3(i64 c, i64 h, i64 w) const {
    return data_[static_cast<size_t>((c * shape_[1] + h) * shape_[2] + w)];
  }

  void fill(double v);
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
  std::vector<i64> shape_;
  std::vector<double> data_;
};

double sum(const Tensor& t);
double mean(const Tensor& t);
double min_value(const Tensor& t);
double max_value(const Tensor& t);
bool all_finite(const Tensor& t);

/// Formats a shape as e.g. "[2,3,8,8]" for error messages.
std::string shape_string(const std::vector<i64>& shape);

/// Throws std::invalid_argument naming `what` when the shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace megalap
