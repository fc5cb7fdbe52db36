#include "megalap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace megalap {

namespace {
i64 checked_numel(const std::vector<i64>& shape) {
  i64 n = 1;
  for (i64 e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor extent must be positive, got " + shape_string(shape));
    n *= e;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<i64> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(checked_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<i64> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_numel(shape_) != static_cast<i64>(data_.size()))
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_string(shape_));
}

Tensor Tensor::full(std::vector<i64> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape_); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double sum(const Tensor& t) {
  double s = 0.0;
  for (i64 i = 0; i < t.numel(); ++i) s += t[i];
  return s;
}

double mean(const Tensor& t) { return t.numel() == 0 ? 0.0 : sum(t) / static_cast<double>(t.numel()); }

double min_value(const Tensor& t) {
  double m = std::numeric_limits<double>::infinity();
  for (i64 i = 0; i < t.numel(); ++i) m = std::min(m, t[i]);
  return m;
}

double max_value(const Tensor& t) {
  double m = -std::numeric_limits<double>::infinity();
  for (i64 i = 0; i < t.numel(); ++i) m = std::max(m, t[i]);
  return m;
}

bool all_finite(const Tensor& t) {
  for (i64 i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

std::string shape_string(const std::vector<i64>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
}

}  // namespace megalap
