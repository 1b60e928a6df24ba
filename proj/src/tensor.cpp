#include "bpfa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bpfa/error.hpp"

namespace bpfa {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) fail(ErrorKind::Shape, "tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) fail(ErrorKind::Shape, "tensor dimension must be positive: " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (numel(shape_) != data_.size()) {
    fail(ErrorKind::Shape, "shape " + shape_string(shape_) + " holds " +
                               std::to_string(numel(shape_)) + " elements, got " +
                               std::to_string(data_.size()));
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

void check_finite(const Tensor& t, std::string_view where) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) {
      fail(ErrorKind::Numeric, "non-finite value produced in " + std::string(where));
    }
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view where) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::Shape, std::string(where) + ": shape mismatch " + shape_string(a.shape()) +
                               " vs " + shape_string(b.shape()));
  }
}

Tensor sign(const Tensor& t) {
  check_finite(t, "sign");
  Tensor out(t.shape());
  auto src = t.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = src[i] > 0.0 ? 1.0 : (src[i] < 0.0 ? -1.0 : 0.0);
  }
  return out;
}

Tensor clip_box(const Tensor& t, const Tensor& lo, const Tensor& hi) {
  require_same_shape(t, lo, "clip_box");
  require_same_shape(t, hi, "clip_box");
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (lo[i] > hi[i]) fail(ErrorKind::Precondition, "clip_box: lo > hi");
    out[i] = std::min(std::max(t[i], lo[i]), hi[i]);
  }
  check_finite(out, "clip_box");
  return out;
}

Tensor l2_normalize(const Tensor& t) {
  const double norm = l2_norm(t);
  if (!(norm > 0.0)) fail(ErrorKind::Numeric, "l2_normalize: zero-norm input");
  return scale(t, 1.0 / norm);
}

Tensor axpy_sign_step(const Tensor& x, const Tensor& g, double step) {
  require_same_shape(x, g, "axpy_sign_step");
  Tensor out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (g[i] > 0.0) {
      out[i] += step;
    } else if (g[i] < 0.0) {
      out[i] -= step;
    }
  }
  check_finite(out, "axpy_sign_step");
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
  check_finite(out, "add");
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] -= b[i];
  check_finite(out, "sub");
  return out;
}

Tensor scale(const Tensor& t, double factor) {
  Tensor out = t;
  for (double& v : out.data()) v *= factor;
  check_finite(out, "scale");
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l1_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += std::abs(v);
  return s;
}

double l2_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

double linf_norm(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

double linf_distance(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "linf_distance");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double mean(const Tensor& t) {
  if (t.empty()) return 0.0;
  double s = 0.0;
  for (double v : t.data()) s += v;
  return s / static_cast<double>(t.size());
}

double normalized_sq_distance(const Tensor& a, const Tensor& b) {
  const Tensor na = l2_normalize(a);
  const Tensor nb = l2_normalize(b);
  require_same_shape(na, nb, "normalized_sq_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < na.size(); ++i) {
    const double d = na[i] - nb[i];
    s += d * d;
  }
  return s;
}

}  // namespace bpfa
