#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "bpfa/layers.hpp"
#include "bpfa/tensor.hpp"

namespace bpfa {

/// Affine map applied to raw pixels before the first layer
/// (x_internal = x * scale + shift). The default maps [0, 255] to [-0.5, 0.5].
struct InputTransform {
  double scale = 1.0 / 255.0;
  double shift = -0.5;
};

/// Ordered layer stack whose feature maps are addressed by 1-based layer
/// index: index i names the output of layer i, i.e. the first i layers
/// applied to the input. Index 0 names the transformed input.
class SegmentedNetwork {
 public:
  SegmentedNetwork() = default;
  SegmentedNetwork(Shape input_shape, std::vector<Layer> layers, InputTransform transform = {});

  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t size() const noexcept { return layers_.size(); }
  std::size_t embedding_dim() const noexcept { return feature_shapes_.back()[0]; }
  const InputTransform& input_transform() const noexcept { return transform_; }

  /// Layer by 1-based index.
  const Layer& layer(std::size_t index) const;
  std::span<const Layer> layers() const noexcept { return layers_; }

  /// Parameter access for training. Shapes must not be changed.
  std::span<Layer> mutable_layers() noexcept { return layers_; }

  /// Shape of the feature map produced by layer `index` (0 = input).
  const Shape& feature_shape(std::size_t index) const;

  /// Number of stored scalars (weights, biases and batchnorm statistics).
  std::size_t parameter_count() const;
  std::size_t parameter_bytes() const { return parameter_count() * sizeof(double); }

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  InputTransform transform_;
  std::vector<Shape> feature_shapes_;
};

/// Layers whose outputs receive feature perturbations. Indices are 1-based,
/// strictly increasing and restricted to hook-eligible layer kinds.
struct HookSet {
  std::vector<std::size_t> indices;

  std::size_t size() const noexcept { return indices.size(); }
  bool empty() const noexcept { return indices.empty(); }
  bool contains(std::size_t index) const;
};

HookSet make_hooks(const SegmentedNetwork& net, std::vector<std::size_t> indices);
HookSet hooks_for_kind(const SegmentedNetwork& net, LayerKind kind);

/// Every activation (relu) output.
HookSet default_hooks(const SegmentedNetwork& net);

/// Gradients of the loss with respect to hooked feature maps, recorded in the
/// backward pass of iteration `iteration_tag`.
struct GradientBank {
  std::map<std::size_t, Tensor> grads;
  int iteration_tag = 0;

  bool empty() const noexcept { return grads.empty(); }
  std::size_t bytes() const;
};

/// Multiplicative masks applied to layer outputs (keyed by 1-based index)
/// ahead of any injection. Used for feature dropout.
using FeatureMasks = std::map<std::size_t, Tensor>;

struct ForwardTrace {
  /// Post-injection feature maps at hooked indices only.
  std::map<std::size_t, Tensor> activations;
  Tensor embedding;

  /// Input of every layer (layer_inputs[k] feeds layer k + 1), kept for the
  /// backward pass.
  std::vector<Tensor> layer_inputs;
  FeatureMasks masks;
};

Tensor apply_input_transform(const SegmentedNetwork& net, const Tensor& x);

/// Layers first..last (1-based, inclusive) applied to `input`. When
/// first == 1 the input transform is applied first. first == last + 1 is the
/// empty segment and returns the input.
Tensor forward_segment(const SegmentedNetwork& net, std::size_t first, std::size_t last,
                       const Tensor& input);

Tensor forward_plain(const SegmentedNetwork& net, const Tensor& x);

/// Forward pass with feature injection. At every hooked index with a bank
/// entry the feature map becomes omega + eta * sign(bank[i]). An empty bank
/// or eta == 0 leaves the pass identical to forward_plain.
ForwardTrace forward_injected(const SegmentedNetwork& net, const Tensor& x, const HookSet& hooks,
                              const GradientBank& bank, double eta,
                              const FeatureMasks* masks = nullptr);

struct BackwardResult {
  Tensor input_grad;
  GradientBank bank;
};

/// One reverse pass producing both the input gradient and the gradients at
/// every hooked (post-injection) feature map.
BackwardResult backward(const SegmentedNetwork& net, const ForwardTrace& trace,
                        const Tensor& loss_grad_wrt_embedding, const HookSet& hooks);

/// Reverse pass that accumulates parameter gradients into `grads`
/// (one entry per layer, see zero_grads). Returns the input gradient.
Tensor backward_params(const SegmentedNetwork& net, const ForwardTrace& trace,
                       const Tensor& loss_grad_wrt_embedding, std::vector<LayerGrads>& grads);

std::vector<LayerGrads> zero_grads(const SegmentedNetwork& net);

/// Closed-form byte size of a bank recorded for `hooks`.
std::size_t feature_bytes(const SegmentedNetwork& net, const HookSet& hooks);

}  // namespace bpfa
