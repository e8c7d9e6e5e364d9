#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace iiao {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Thrown when operands have incompatible shapes; the message carries both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dense row-major tensor of doubles. 4-D tensors are laid out as
// (batch, channel, height, width). The gradient buffer is optional and, when
// present, always has the same length as the value buffer.
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

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // 4-D accessors (b, c, h, w).
  double& at(std::size_t b, std::size_t c, std::size_t h, std::size_t w);
  double at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const;

  // Scalar value of a one-element tensor.
  double item() const;

  bool has_grad() const noexcept { return grad_.has_value(); }
  // Allocates a zeroed gradient buffer if none exists.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();
  void drop_grad() noexcept { grad_.reset(); }

  double sum() const noexcept;
  bool all_finite() const noexcept;

  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  std::vector<double> values_;
  std::optional<std::vector<double>> grad_;
};

// Throws ShapeError unless `t` is 4-D.
void require_4d(const Tensor& t, const char* what);

}  // namespace iiao
