#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bpfa {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with an explicit shape.
///
/// Every dimension is positive and the element count always equals the
/// product of the shape. Tensors are plain values: copying copies the data.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  /// 1-D tensor from a literal list.
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  /// Same data under a different shape with the same element count.
  Tensor reshaped(Shape shape) const;

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Throws a Numeric error naming `where` if any element is NaN or infinite.
void check_finite(const Tensor& t, std::string_view where);
void require_same_shape(const Tensor& a, const Tensor& b, std::string_view where);

Tensor sign(const Tensor& t);
Tensor clip_box(const Tensor& t, const Tensor& lo, const Tensor& hi);
Tensor l2_normalize(const Tensor& t);

/// x + step * sign(g). A positive step moves along the gradient sign,
/// a negative step against it.
Tensor axpy_sign_step(const Tensor& x, const Tensor& g, double step);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, double factor);

double dot(const Tensor& a, const Tensor& b);
double l1_norm(const Tensor& t);
double l2_norm(const Tensor& t);
double linf_norm(const Tensor& t);
double linf_distance(const Tensor& a, const Tensor& b);
double mean(const Tensor& t);

/// Squared Euclidean distance between the L2-normalized versions of a and b.
double normalized_sq_distance(const Tensor& a, const Tensor& b);

}  // namespace bpfa
