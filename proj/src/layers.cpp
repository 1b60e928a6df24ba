#include "bpfa/layers.hpp"

#include <cmath>

#include "bpfa/error.hpp"

namespace bpfa {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Dense: return "dense";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Relu: return "relu";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Flatten: return "flatten";
  }
  return "unknown";
}

std::optional<LayerKind> parse_layer_kind(std::string_view text) {
  for (auto kind : {LayerKind::Conv2d, LayerKind::Dense, LayerKind::BatchNorm, LayerKind::Relu,
                    LayerKind::AvgPool, LayerKind::Flatten}) {
    if (to_string(kind) == text) return kind;
  }
  return std::nullopt;
}

Layer make_conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel, std::size_t stride, Padding padding) {
  Layer l;
  l.spec.kind = LayerKind::Conv2d;
  l.spec.name = std::move(name);
  l.spec.in_channels = in_channels;
  l.spec.out_channels = out_channels;
  l.spec.kernel = kernel;
  l.spec.stride = stride;
  l.spec.padding = padding;
  l.weight = Tensor({out_channels, in_channels, kernel, kernel});
  l.bias = Tensor({out_channels});
  return l;
}

Layer make_dense(std::string name, std::size_t in_features, std::size_t out_features) {
  Layer l;
  l.spec.kind = LayerKind::Dense;
  l.spec.name = std::move(name);
  l.spec.in_features = in_features;
  l.spec.out_features = out_features;
  l.weight = Tensor({out_features, in_features});
  l.bias = Tensor({out_features});
  return l;
}

Layer make_batchnorm(std::string name, std::size_t features, double eps) {
  Layer l;
  l.spec.kind = LayerKind::BatchNorm;
  l.spec.name = std::move(name);
  l.spec.features = features;
  l.spec.eps = eps;
  l.weight = Tensor({features}, 1.0);
  l.bias = Tensor({features});
  l.running_mean = Tensor({features});
  l.running_var = Tensor({features}, 1.0);
  return l;
}

Layer make_relu(std::string name) {
  Layer l;
  l.spec.kind = LayerKind::Relu;
  l.spec.name = std::move(name);
  return l;
}

Layer make_avgpool(std::string name, std::size_t pool) {
  Layer l;
  l.spec.kind = LayerKind::AvgPool;
  l.spec.name = std::move(name);
  l.spec.pool = pool;
  return l;
}

Layer make_flatten(std::string name) {
  Layer l;
  l.spec.kind = LayerKind::Flatten;
  l.spec.name = std::move(name);
  return l;
}

bool has_parameters(LayerKind kind) {
  return kind == LayerKind::Conv2d || kind == LayerKind::Dense || kind == LayerKind::BatchNorm;
}

bool is_hook_eligible(LayerKind kind) {
  return kind == LayerKind::Conv2d || kind == LayerKind::BatchNorm || kind == LayerKind::Relu;
}

namespace {

std::size_t conv_pad(const LayerSpec& s) {
  return s.padding == Padding::Same ? s.kernel / 2 : 0;
}

[[noreturn]] void bad_input(const LayerSpec& s, const Shape& in, const char* why) {
  fail(ErrorKind::Shape, "layer '" + s.name + "' (" + std::string(to_string(s.kind)) +
                             ") cannot accept input " + shape_string(in) + ": " + why);
}

}  // namespace

Shape output_shape(const LayerSpec& s, const Shape& in) {
  switch (s.kind) {
    case LayerKind::Conv2d: {
      if (in.size() != 3) bad_input(s, in, "expected CxHxW");
      if (in[0] != s.in_channels) bad_input(s, in, "channel count");
      if (s.kernel == 0 || s.stride == 0) bad_input(s, in, "kernel and stride must be positive");
      const std::size_t pad = conv_pad(s);
      if (in[1] + 2 * pad < s.kernel || in[2] + 2 * pad < s.kernel) {
        bad_input(s, in, "spatial size smaller than kernel");
      }
      return {s.out_channels, (in[1] + 2 * pad - s.kernel) / s.stride + 1,
              (in[2] + 2 * pad - s.kernel) / s.stride + 1};
    }
    case LayerKind::Dense:
      if (in.size() != 1 || in[0] != s.in_features) bad_input(s, in, "expected vector of in_features");
      return {s.out_features};
    case LayerKind::BatchNorm:
      if (in.empty() || in[0] != s.features || (in.size() != 1 && in.size() != 3)) {
        bad_input(s, in, "leading dimension must equal features");
      }
      return in;
    case LayerKind::Relu:
      return in;
    case LayerKind::AvgPool:
      if (in.size() != 3) bad_input(s, in, "expected CxHxW");
      if (s.pool == 0 || in[1] < s.pool || in[2] < s.pool) bad_input(s, in, "pool window");
      return {in[0], in[1] / s.pool, in[2] / s.pool};
    case LayerKind::Flatten:
      return {numel(in)};
  }
  bad_input(s, in, "unknown kind");
}

namespace {

Tensor conv_forward(const Layer& l, const Tensor& in) {
  const auto& s = l.spec;
  const Shape out_shape = output_shape(s, in.shape());
  Tensor out(out_shape);
  const std::size_t C = in.shape()[0], H = in.shape()[1], W = in.shape()[2];
  const std::size_t O = out_shape[0], Ho = out_shape[1], Wo = out_shape[2];
  const std::size_t K = s.kernel, stride = s.stride;
  const long pad = static_cast<long>(conv_pad(s));
  auto x = in.data();
  auto w = l.weight.data();
  auto y = out.data();
  for (std::size_t o = 0; o < O; ++o) {
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        double acc = l.bias[o];
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t ky = 0; ky < K; ++ky) {
            const long iy = static_cast<long>(oy * stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<long>(H)) continue;
            const double* xrow = &x[(c * H + static_cast<std::size_t>(iy)) * W];
            const double* wrow = &w[((o * C + c) * K + ky) * K];
            for (std::size_t kx = 0; kx < K; ++kx) {
              const long ix = static_cast<long>(ox * stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<long>(W)) continue;
              acc += wrow[kx] * xrow[ix];
            }
          }
        }
        y[(o * Ho + oy) * Wo + ox] = acc;
      }
    }
  }
  return out;
}

Tensor conv_backward(const Layer& l, const Tensor& in, const Tensor& gout, LayerGrads* grads) {
  const auto& s = l.spec;
  const std::size_t C = in.shape()[0], H = in.shape()[1], W = in.shape()[2];
  const std::size_t O = gout.shape()[0], Ho = gout.shape()[1], Wo = gout.shape()[2];
  const std::size_t K = s.kernel, stride = s.stride;
  const long pad = static_cast<long>(conv_pad(s));
  Tensor gin(in.shape());
  auto x = in.data();
  auto w = l.weight.data();
  auto g = gout.data();
  auto gx = gin.data();
  double* gw = grads ? grads->weight.data().data() : nullptr;
  for (std::size_t o = 0; o < O; ++o) {
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        const double go = g[(o * Ho + oy) * Wo + ox];
        if (go == 0.0) continue;
        if (grads) grads->bias[o] += go;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t ky = 0; ky < K; ++ky) {
            const long iy = static_cast<long>(oy * stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<long>(H)) continue;
            const std::size_t xbase = (c * H + static_cast<std::size_t>(iy)) * W;
            const std::size_t wbase = ((o * C + c) * K + ky) * K;
            for (std::size_t kx = 0; kx < K; ++kx) {
              const long ix = static_cast<long>(ox * stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<long>(W)) continue;
              const std::size_t xi = xbase + static_cast<std::size_t>(ix);
              gx[xi] += w[wbase + kx] * go;
              if (gw) gw[wbase + kx] += x[xi] * go;
            }
          }
        }
      }
    }
  }
  return gin;
}

Tensor dense_forward(const Layer& l, const Tensor& in) {
  const auto& s = l.spec;
  output_shape(s, in.shape());
  Tensor out({s.out_features});
  auto x = in.data();
  auto w = l.weight.data();
  for (std::size_t o = 0; o < s.out_features; ++o) {
    const double* row = &w[o * s.in_features];
    double acc = l.bias[o];
    for (std::size_t i = 0; i < s.in_features; ++i) acc += row[i] * x[i];
    out[o] = acc;
  }
  return out;
}

Tensor dense_backward(const Layer& l, const Tensor& in, const Tensor& gout, LayerGrads* grads) {
  const auto& s = l.spec;
  Tensor gin({s.in_features});
  auto x = in.data();
  auto w = l.weight.data();
  auto gx = gin.data();
  for (std::size_t o = 0; o < s.out_features; ++o) {
    const double go = gout[o];
    if (go == 0.0) continue;
    const double* row = &w[o * s.in_features];
    for (std::size_t i = 0; i < s.in_features; ++i) gx[i] += row[i] * go;
    if (grads) {
      grads->bias[o] += go;
      double* grow = &grads->weight.data()[o * s.in_features];
      for (std::size_t i = 0; i < s.in_features; ++i) grow[i] += x[i] * go;
    }
  }
  return gin;
}

std::size_t per_channel(const Shape& shape) {
  return shape.size() == 3 ? shape[1] * shape[2] : 1;
}

Tensor batchnorm_forward(const Layer& l, const Tensor& in) {
  output_shape(l.spec, in.shape());
  Tensor out(in.shape());
  const std::size_t C = l.spec.features, inner = per_channel(in.shape());
  for (std::size_t c = 0; c < C; ++c) {
    const double inv = 1.0 / std::sqrt(l.running_var[c] + l.spec.eps);
    const double gain = l.weight[c] * inv;
    const double shift = l.bias[c] - l.running_mean[c] * gain;
    for (std::size_t j = 0; j < inner; ++j) {
      out[c * inner + j] = in[c * inner + j] * gain + shift;
    }
  }
  return out;
}

Tensor batchnorm_backward(const Layer& l, const Tensor& in, const Tensor& gout,
                          LayerGrads* grads) {
  Tensor gin(in.shape());
  const std::size_t C = l.spec.features, inner = per_channel(in.shape());
  for (std::size_t c = 0; c < C; ++c) {
    const double inv = 1.0 / std::sqrt(l.running_var[c] + l.spec.eps);
    const double gain = l.weight[c] * inv;
    double dgamma = 0.0, dbeta = 0.0;
    for (std::size_t j = 0; j < inner; ++j) {
      const std::size_t k = c * inner + j;
      gin[k] = gout[k] * gain;
      dgamma += gout[k] * (in[k] - l.running_mean[c]) * inv;
      dbeta += gout[k];
    }
    if (grads) {
      grads->weight[c] += dgamma;
      grads->bias[c] += dbeta;
    }
  }
  return gin;
}

Tensor avgpool_forward(const Layer& l, const Tensor& in) {
  const Shape out_shape = output_shape(l.spec, in.shape());
  Tensor out(out_shape);
  const std::size_t P = l.spec.pool, H = in.shape()[1], W = in.shape()[2];
  const std::size_t Ho = out_shape[1], Wo = out_shape[2];
  const double norm = 1.0 / static_cast<double>(P * P);
  for (std::size_t c = 0; c < out_shape[0]; ++c) {
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        double acc = 0.0;
        for (std::size_t py = 0; py < P; ++py) {
          for (std::size_t px = 0; px < P; ++px) {
            acc += in[(c * H + oy * P + py) * W + ox * P + px];
          }
        }
        out[(c * Ho + oy) * Wo + ox] = acc * norm;
      }
    }
  }
  return out;
}

Tensor avgpool_backward(const Layer& l, const Tensor& in, const Tensor& gout) {
  Tensor gin(in.shape());
  const std::size_t P = l.spec.pool, H = in.shape()[1], W = in.shape()[2];
  const std::size_t Ho = gout.shape()[1], Wo = gout.shape()[2];
  const double norm = 1.0 / static_cast<double>(P * P);
  for (std::size_t c = 0; c < gout.shape()[0]; ++c) {
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        const double g = gout[(c * Ho + oy) * Wo + ox] * norm;
        for (std::size_t py = 0; py < P; ++py) {
          for (std::size_t px = 0; px < P; ++px) {
            gin[(c * H + oy * P + py) * W + ox * P + px] += g;
          }
        }
      }
    }
  }
  return gin;
}

}  // namespace

Tensor layer_forward(const Layer& layer, const Tensor& in) {
  switch (layer.spec.kind) {
    case LayerKind::Conv2d: return conv_forward(layer, in);
    case LayerKind::Dense: return dense_forward(layer, in);
    case LayerKind::BatchNorm: return batchnorm_forward(layer, in);
    case LayerKind::Relu: {
      Tensor out = in;
      for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case LayerKind::AvgPool: return avgpool_forward(layer, in);
    case LayerKind::Flatten: return in.reshaped({in.size()});
  }
  fail(ErrorKind::Shape, "unknown layer kind");
}

Tensor layer_backward(const Layer& layer, const Tensor& in, const Tensor& grad_out,
                      LayerGrads* grads) {
  const Shape expected = output_shape(layer.spec, in.shape());
  if (grad_out.shape() != expected) {
    fail(ErrorKind::Shape, "layer '" + layer.spec.name + "': gradient shape " +
                               shape_string(grad_out.shape()) + " does not match output " +
                               shape_string(expected));
  }
  switch (layer.spec.kind) {
    case LayerKind::Conv2d: return conv_backward(layer, in, grad_out, grads);
    case LayerKind::Dense: return dense_backward(layer, in, grad_out, grads);
    case LayerKind::BatchNorm: return batchnorm_backward(layer, in, grad_out, grads);
    case LayerKind::Relu: {
      Tensor gin = grad_out;
      for (std::size_t i = 0; i < gin.size(); ++i) {
        if (!(in[i] > 0.0)) gin[i] = 0.0;
      }
      return gin;
    }
    case LayerKind::AvgPool: return avgpool_backward(layer, in, grad_out);
    case LayerKind::Flatten: return grad_out.reshaped(in.shape());
  }
  fail(ErrorKind::Shape, "unknown layer kind");
}

LayerGrads zero_grads(const Layer& layer) {
  LayerGrads g;
  if (!layer.weight.empty()) g.weight = Tensor(layer.weight.shape());
  if (!layer.bias.empty()) g.bias = Tensor(layer.bias.shape());
  return g;
}

}  // namespace bpfa
