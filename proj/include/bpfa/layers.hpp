#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "bpfa/tensor.hpp"

namespace bpfa {

enum class LayerKind { Conv2d, Dense, BatchNorm, Relu, AvgPool, Flatten };
enum class Padding { Same, Valid };

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view text);

/// Layer hyperparameters. Only the fields relevant to `kind` are meaningful.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::string name;

  // conv2d
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  Padding padding = Padding::Same;

  // dense
  std::size_t in_features = 0;
  std::size_t out_features = 0;

  // batchnorm: channel count for CxHxW inputs, feature count for vectors
  std::size_t features = 0;
  double eps = 1e-5;

  // avgpool: window == stride
  std::size_t pool = 2;
};

/// A layer plus its parameters.
///
/// conv2d: weight [out, in, k, k], bias [out]
/// dense: weight [out, in], bias [out]
/// batchnorm: weight = gamma [c], bias = beta [c], running_mean/var [c]
/// Parameter-free kinds leave every tensor empty.
struct Layer {
  LayerSpec spec;
  Tensor weight;
  Tensor bias;
  Tensor running_mean;
  Tensor running_var;
};

/// Parameter gradients for one layer; same shapes as Layer::weight/bias.
struct LayerGrads {
  Tensor weight;
  Tensor bias;
};

Layer make_conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel = 3, std::size_t stride = 1, Padding padding = Padding::Same);
Layer make_dense(std::string name, std::size_t in_features, std::size_t out_features);
Layer make_batchnorm(std::string name, std::size_t features, double eps = 1e-5);
Layer make_relu(std::string name);
Layer make_avgpool(std::string name, std::size_t pool = 2);
Layer make_flatten(std::string name);

bool has_parameters(LayerKind kind);
bool is_hook_eligible(LayerKind kind);

/// Output shape for `in`, or a Shape error if the layer cannot accept it.
Shape output_shape(const LayerSpec& spec, const Shape& in);

Tensor layer_forward(const Layer& layer, const Tensor& in);

/// Gradient with respect to the layer input. When `grads` is non-null the
/// parameter gradients are accumulated into it (it must be zero-initialized
/// with matching shapes, see zero_grads).
Tensor layer_backward(const Layer& layer, const Tensor& in, const Tensor& grad_out,
                      LayerGrads* grads);

LayerGrads zero_grads(const Layer& layer);

}  // namespace bpfa
