#include <algorithm>
#include <cmath>

#include "bpfa/attacks.hpp"
#include "bpfa/error.hpp"

namespace bpfa {

Tensor DiWarp::apply(const Tensor& x) const {
  if (x.shape() != shape) fail(ErrorKind::Shape, "DI warp applied to a different image shape");
  if (identity()) return x;
  Tensor out(shape);
  for (std::size_t k = 0; k < source.size(); ++k) {
    if (source[k] >= 0) out[k] = x[static_cast<std::size_t>(source[k])];
  }
  return out;
}

Tensor DiWarp::pullback(const Tensor& grad) const {
  if (grad.shape() != shape) fail(ErrorKind::Shape, "DI pullback gradient shape mismatch");
  if (identity()) return grad;
  Tensor out(shape);
  for (std::size_t k = 0; k < source.size(); ++k) {
    if (source[k] >= 0) out[static_cast<std::size_t>(source[k])] += grad[k];
  }
  return out;
}

DiWarp draw_di_warp(const Shape& shape, double p, Rng& rng, double min_scale) {
  if (shape.size() != 3) fail(ErrorKind::Shape, "DI expects CxHxW images");
  DiWarp warp{shape, {}};
  // The coin is drawn even when p is 0 or 1 so stream positions do not depend on p.
  const double coin = uniform01(rng);
  if (!(coin < p)) return warp;

  const std::size_t C = shape[0], H = shape[1], W = shape[2];
  const auto lo_h = static_cast<std::size_t>(std::ceil(min_scale * static_cast<double>(H)));
  const auto lo_w = static_cast<std::size_t>(std::ceil(min_scale * static_cast<double>(W)));
  const std::size_t rh = std::clamp<std::size_t>(lo_h + uniform_index(rng, H - std::min(lo_h, H) + 1), 1, H);
  const std::size_t rw = std::clamp<std::size_t>(lo_w + uniform_index(rng, W - std::min(lo_w, W) + 1), 1, W);
  const std::size_t top = uniform_index(rng, H - rh + 1);
  const std::size_t left = uniform_index(rng, W - rw + 1);

  warp.source.assign(C * H * W, -1);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < rh; ++y) {
      const std::size_t sy = std::min(H - 1, (y * H) / rh);
      for (std::size_t x = 0; x < rw; ++x) {
        const std::size_t sx = std::min(W - 1, (x * W) / rw);
        warp.source[(c * H + top + y) * W + left + x] =
            static_cast<std::ptrdiff_t>((c * H + sy) * W + sx);
      }
    }
  }
  return warp;
}

Tensor di_transform(const Tensor& x, double p, Rng& rng) {
  return draw_di_warp(x.shape(), p, rng).apply(x);
}

Tensor draw_dropout_mask(const Shape& shape, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorKind::Config, "drop_rate must lie in [0, 1)");
  Tensor mask(shape, 1.0);
  if (rate == 0.0) return mask;
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask.data()) m = uniform01(rng) < rate ? 0.0 : keep;
  return mask;
}

Tensor dfanet_dropout(const Tensor& activation, double drop_rate, Rng& rng) {
  const Tensor mask = draw_dropout_mask(activation.shape(), drop_rate, rng);
  Tensor out = activation;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return out;
}

std::vector<std::size_t> dropout_layers(const SegmentedNetwork& net) {
  std::vector<std::size_t> conv, hidden_dense;
  for (std::size_t i = 1; i <= net.size(); ++i) {
    const auto kind = net.layer(i).spec.kind;
    if (kind == LayerKind::Conv2d) conv.push_back(i);
    if (kind == LayerKind::Dense && i != net.size()) hidden_dense.push_back(i);
  }
  return conv.empty() ? hidden_dense : conv;
}

FeatureMasks draw_dropout_masks(const SegmentedNetwork& net, double drop_rate, Rng& rng) {
  FeatureMasks masks;
  for (auto i : dropout_layers(net)) {
    masks.emplace(i, draw_dropout_mask(net.feature_shape(i), drop_rate, rng));
  }
  return masks;
}

}  // namespace bpfa
