#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace covidseg {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major float64 array. For 4-D data the layout is (N, C, H, W).
// The gradient slot is absent until something accumulates into it.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::span<double> data() noexcept { return values_; }
  std::span<const double> data() const noexcept { return values_; }
  std::vector<double>& storage() noexcept { return values_; }
  const std::vector<double>& storage() const noexcept { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  const double& operator[](std::size_t i) const { return values_[i]; }

  // 4-D element access, (n, c, y, x).
  double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x);
  double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const;

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool flag) noexcept { requires_grad_ = flag; }

  bool has_grad() const noexcept { return grad_.has_value(); }
  // Precondition: has_grad().
  std::span<const double> grad() const { return *grad_; }
  // Creates a zero-filled gradient buffer if none is present.
  std::vector<double>& grad_buffer();
  void clear_grad() noexcept { grad_.reset(); }

 private:
  Shape shape_;
  std::vector<double> values_;
  bool requires_grad_ = false;
  std::optional<std::vector<double>> grad_;
};

// Copies `count` channels starting at `offset` out of a 4-D tensor.
Tensor slice_channels(const Tensor& t, std::size_t offset, std::size_t count);

bool bitwise_equal(std::span<const double> a, std::span<const double> b);

}  // namespace covidseg
