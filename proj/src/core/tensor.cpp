#include "covidseg/core/tensor.hpp"

#include <cstring>
#include <sstream>
#include <stdexcept>

namespace covidseg {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {
void check_extents(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_string(shape));
  }
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  values_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  check_extents(shape_);
  if (values_.size() != shape_numel(shape_)) {
    throw std::invalid_argument("tensor of shape " + shape_string(shape_) + " needs " +
                                std::to_string(shape_numel(shape_)) + " values, got " +
                                std::to_string(values_.size()));
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw std::out_of_range("axis out of range for shape " + shape_string(shape_));
  return shape_[axis];
}

double& Tensor::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
  return values_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
}

double Tensor::at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
  return values_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
}

std::vector<double>& Tensor::grad_buffer() {
  if (!grad_) grad_.emplace(values_.size(), 0.0);
  return *grad_;
}

Tensor slice_channels(const Tensor& t, std::size_t offset, std::size_t count) {
  if (t.rank() != 4 || offset + count > t.dim(1) || count == 0) {
    throw std::invalid_argument("slice_channels: cannot take " + std::to_string(count) + " channels at offset " +
                                std::to_string(offset) + " from " + shape_string(t.shape()));
  }
  const std::size_t n = t.dim(0), c = t.dim(1), plane = t.dim(2) * t.dim(3);
  Tensor out({n, count, t.dim(2), t.dim(3)});
  for (std::size_t b = 0; b < n; ++b) {
    std::memcpy(&out[b * count * plane], &t[(b * c + offset) * plane], count * plane * sizeof(double));
  }
  return out;
}

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

}  // namespace covidseg
