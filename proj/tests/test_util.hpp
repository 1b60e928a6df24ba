#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "bpfa/error.hpp"
#include "bpfa/network.hpp"
#include "bpfa/random.hpp"

namespace bpfa {

inline void PrintTo(const Tensor& t, std::ostream* os) {
  *os << shape_string(t.shape()) << " {";
  for (std::size_t i = 0; i < std::min<std::size_t>(t.size(), 8); ++i) *os << (i ? ", " : "") << t[i];
  if (t.size() > 8) *os << ", ...";
  *os << "}";
}

}  // namespace bpfa

namespace bpfa::testing {

/// Kind of the bpfa::Error thrown by fn, or nullopt when it returns.
inline std::optional<ErrorKind> error_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = lo + (hi - lo) * uniform01(rng);
  return t;
}

inline void randomize(Layer& layer, Rng& rng) {
  for (Tensor* t : {&layer.weight, &layer.bias}) {
    for (double& v : t->data()) v = 0.6 * standard_normal(rng);
  }
  if (layer.spec.kind == LayerKind::BatchNorm) {
    for (double& v : layer.running_mean.data()) v = 0.3 * standard_normal(rng);
    for (double& v : layer.running_var.data()) v = 0.5 + uniform01(rng);
    for (double& v : layer.weight.data()) v = 0.5 + uniform01(rng);
  }
}

/// conv -> bn -> relu -> conv(stride 2, valid) -> relu -> avgpool -> flatten
/// -> dense -> bn -> relu -> dense. Covers every layer kind.
inline SegmentedNetwork mixed_net(std::uint64_t seed, std::size_t out = 5) {
  Rng rng = make_rng(seed);
  std::vector<Layer> layers{make_conv2d("conv1", 1, 3, 3, 1, Padding::Same),
                            make_batchnorm("bn1", 3),
                            make_relu("relu1"),
                            make_conv2d("conv2", 3, 4, 3, 2, Padding::Valid),
                            make_relu("relu2"),
                            make_avgpool("pool", 2),
                            make_flatten("flat"),
                            make_dense("fc1", 16, 6),
                            make_batchnorm("bn2", 6),
                            make_relu("relu3"),
                            make_dense("fc2", 6, out)};
  for (auto& l : layers) randomize(l, rng);
  return SegmentedNetwork({1, 9, 9}, std::move(layers));
}

/// flatten -> dense -> relu -> dense.
inline SegmentedNetwork mlp_net(std::uint64_t seed, std::size_t hw = 4, std::size_t hidden = 7,
                                std::size_t out = 3) {
  Rng rng = make_rng(seed);
  std::vector<Layer> layers{make_flatten("flat"), make_dense("fc1", hw * hw, hidden), make_relu("relu1"),
                            make_dense("fc2", hidden, out)};
  for (auto& l : layers) randomize(l, rng);
  for (double& v : layers[1].weight.data()) v *= 0.3;
  return SegmentedNetwork({1, hw, hw}, std::move(layers));
}

inline Tensor random_image(const Shape& shape, Rng& rng) { return random_tensor(shape, rng, 20.0, 235.0); }

/// |a - b| / max(|a|, |b|), falling back to the absolute error when both
/// are tiny.
inline double relative_error(double a, double b, double floor = 1e-7) {
  const double scale = std::max({std::abs(a), std::abs(b)});
  return scale < floor ? std::abs(a - b) : std::abs(a - b) / scale;
}

/// Central difference of f along coordinate k of x.
inline double central_difference(const std::function<double(const Tensor&)>& f, const Tensor& x, std::size_t k,
                                 double h) {
  Tensor plus = x, minus = x;
  plus[k] += h;
  minus[k] -= h;
  return (f(plus) - f(minus)) / (2.0 * h);
}

}  // namespace bpfa::testing
