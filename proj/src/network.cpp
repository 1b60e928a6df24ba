#include "bpfa/network.hpp"

#include <algorithm>
#include <set>

#include "bpfa/error.hpp"

namespace bpfa {

SegmentedNetwork::SegmentedNetwork(Shape input_shape, std::vector<Layer> layers,
                                   InputTransform transform)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)), transform_(transform) {
  if (layers_.empty()) fail(ErrorKind::Shape, "network needs at least one layer");
  std::set<std::string> names;
  feature_shapes_.push_back(input_shape_);
  for (const auto& layer : layers_) {
    if (layer.spec.name.empty()) fail(ErrorKind::Config, "layer name must not be empty");
    if (!names.insert(layer.spec.name).second) {
      fail(ErrorKind::Config, "duplicate layer name '" + layer.spec.name + "'");
    }
    feature_shapes_.push_back(output_shape(layer.spec, feature_shapes_.back()));
    const LayerGrads expected = zero_grads(layer);
    if (has_parameters(layer.spec.kind)) {
      const bool bad_dense = layer.spec.kind == LayerKind::Dense &&
                             layer.weight.shape() != Shape{layer.spec.out_features,
                                                           layer.spec.in_features};
      const bool bad_conv =
          layer.spec.kind == LayerKind::Conv2d &&
          layer.weight.shape() != Shape{layer.spec.out_channels, layer.spec.in_channels,
                                        layer.spec.kernel, layer.spec.kernel};
      const bool bad_bn = layer.spec.kind == LayerKind::BatchNorm &&
                          (layer.weight.shape() != Shape{layer.spec.features} ||
                           layer.running_mean.shape() != Shape{layer.spec.features} ||
                           layer.running_var.shape() != Shape{layer.spec.features});
      if (bad_dense || bad_conv || bad_bn || layer.bias.size() != layer.weight.shape()[0]) {
        fail(ErrorKind::Shape, "layer '" + layer.spec.name + "' parameters disagree with its spec");
      }
    }
  }
  if (feature_shapes_.back().size() != 1) {
    fail(ErrorKind::Shape, "network must end in a vector embedding, got " +
                               shape_string(feature_shapes_.back()));
  }
}

const Layer& SegmentedNetwork::layer(std::size_t index) const {
  if (index == 0 || index > layers_.size()) {
    fail(ErrorKind::Precondition, "layer index " + std::to_string(index) + " out of range");
  }
  return layers_[index - 1];
}

const Shape& SegmentedNetwork::feature_shape(std::size_t index) const {
  if (index > layers_.size()) {
    fail(ErrorKind::Precondition, "feature index " + std::to_string(index) + " out of range");
  }
  return feature_shapes_[index];
}

std::size_t SegmentedNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    n += l.weight.size() + l.bias.size() + l.running_mean.size() + l.running_var.size();
  }
  return n;
}

bool HookSet::contains(std::size_t index) const {
  return std::binary_search(indices.begin(), indices.end(), index);
}

HookSet make_hooks(const SegmentedNetwork& net, std::vector<std::size_t> indices) {
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i == 0 || i > net.size()) {
      fail(ErrorKind::Config, "hook index " + std::to_string(i) + " outside [1, " +
                                  std::to_string(net.size()) + "]");
    }
    if (k > 0 && indices[k - 1] >= i) fail(ErrorKind::Config, "hook indices must be strictly increasing");
    if (!is_hook_eligible(net.layer(i).spec.kind)) {
      fail(ErrorKind::Config, "layer '" + net.layer(i).spec.name + "' (" +
                                  std::string(to_string(net.layer(i).spec.kind)) +
                                  ") is not hook-eligible");
    }
  }
  return HookSet{std::move(indices)};
}

HookSet hooks_for_kind(const SegmentedNetwork& net, LayerKind kind) {
  if (!is_hook_eligible(kind)) {
    fail(ErrorKind::Config, std::string(to_string(kind)) + " layers are not hook-eligible");
  }
  HookSet hooks;
  for (std::size_t i = 1; i <= net.size(); ++i) {
    if (net.layer(i).spec.kind == kind) hooks.indices.push_back(i);
  }
  return hooks;
}

HookSet default_hooks(const SegmentedNetwork& net) { return hooks_for_kind(net, LayerKind::Relu); }

std::size_t GradientBank::bytes() const {
  std::size_t n = 0;
  for (const auto& [index, g] : grads) n += g.size() * sizeof(double);
  return n;
}

Tensor apply_input_transform(const SegmentedNetwork& net, const Tensor& x) {
  if (x.shape() != net.input_shape()) {
    fail(ErrorKind::Shape, "input shape " + shape_string(x.shape()) + " does not match network input " +
                               shape_string(net.input_shape()));
  }
  check_finite(x, "network input");
  Tensor out = x;
  const auto& t = net.input_transform();
  for (double& v : out.data()) v = v * t.scale + t.shift;
  return out;
}

Tensor forward_segment(const SegmentedNetwork& net, std::size_t first, std::size_t last,
                       const Tensor& input) {
  if (first == 0 || last > net.size() || first > last + 1) {
    fail(ErrorKind::Precondition, "invalid segment [" + std::to_string(first) + ", " +
                                      std::to_string(last) + "]");
  }
  if (input.shape() != net.feature_shape(first - 1)) {
    fail(ErrorKind::Shape, "segment input shape " + shape_string(input.shape()) + " expected " +
                               shape_string(net.feature_shape(first - 1)));
  }
  Tensor h = first == 1 ? apply_input_transform(net, input) : input;
  for (std::size_t i = first; i <= last; ++i) {
    h = layer_forward(net.layer(i), h);
    check_finite(h, net.layer(i).spec.name);
  }
  return h;
}

Tensor forward_plain(const SegmentedNetwork& net, const Tensor& x) {
  return forward_segment(net, 1, net.size(), x);
}

ForwardTrace forward_injected(const SegmentedNetwork& net, const Tensor& x, const HookSet& hooks,
                              const GradientBank& bank, double eta, const FeatureMasks* masks) {
  if (!bank.empty()) {
    if (bank.grads.size() != hooks.size()) {
      fail(ErrorKind::Shape, "gradient bank does not match the hook set");
    }
    for (const auto& [index, g] : bank.grads) {
      if (!hooks.contains(index)) fail(ErrorKind::Shape, "gradient bank does not match the hook set");
      if (g.shape() != net.feature_shape(index)) {
        fail(ErrorKind::Shape, "bank entry at layer " + std::to_string(index) + " has shape " +
                                   shape_string(g.shape()) + ", feature map is " +
                                   shape_string(net.feature_shape(index)));
      }
    }
  }
  ForwardTrace trace;
  trace.layer_inputs.reserve(net.size());
  if (masks) trace.masks = *masks;
  Tensor h = apply_input_transform(net, x);
  for (std::size_t i = 1; i <= net.size(); ++i) {
    trace.layer_inputs.push_back(h);
    h = layer_forward(net.layer(i), h);
    check_finite(h, net.layer(i).spec.name);
    if (auto m = trace.masks.find(i); m != trace.masks.end()) {
      require_same_shape(h, m->second, "feature mask");
      for (std::size_t k = 0; k < h.size(); ++k) h[k] *= m->second[k];
    }
    if (hooks.contains(i)) {
      if (eta != 0.0) {
        if (auto g = bank.grads.find(i); g != bank.grads.end()) {
          h = axpy_sign_step(h, g->second, eta);
        }
      }
      trace.activations.emplace(i, h);
    }
  }
  trace.embedding = std::move(h);
  return trace;
}

namespace {

void check_trace(const SegmentedNetwork& net, const ForwardTrace& trace, const Tensor& grad) {
  if (trace.layer_inputs.size() != net.size()) {
    fail(ErrorKind::Shape, "trace was not produced by this network");
  }
  for (std::size_t k = 0; k < net.size(); ++k) {
    if (trace.layer_inputs[k].shape() != net.feature_shape(k)) {
      fail(ErrorKind::Shape, "trace was not produced by this network");
    }
  }
  if (grad.shape() != net.feature_shape(net.size())) {
    fail(ErrorKind::Shape, "embedding gradient shape " + shape_string(grad.shape()) +
                               " does not match embedding " +
                               shape_string(net.feature_shape(net.size())));
  }
  check_finite(grad, "embedding gradient");
}

Tensor reverse_pass(const SegmentedNetwork& net, const ForwardTrace& trace, const Tensor& grad_emb,
                    const HookSet* hooks, GradientBank* bank, std::vector<LayerGrads>* params) {
  check_trace(net, trace, grad_emb);
  Tensor g = grad_emb;
  for (std::size_t i = net.size(); i >= 1; --i) {
    // g is the gradient at the post-injection output of layer i.
    if (hooks && hooks->contains(i)) bank->grads.emplace(i, g);
    if (auto m = trace.masks.find(i); m != trace.masks.end()) {
      for (std::size_t k = 0; k < g.size(); ++k) g[k] *= m->second[k];
    }
    LayerGrads* lg = params ? &(*params)[i - 1] : nullptr;
    g = layer_backward(net.layer(i), trace.layer_inputs[i - 1], g, lg);
  }
  Tensor input_grad = scale(g, net.input_transform().scale);
  check_finite(input_grad, "input gradient");
  return input_grad;
}

}  // namespace

BackwardResult backward(const SegmentedNetwork& net, const ForwardTrace& trace,
                        const Tensor& loss_grad_wrt_embedding, const HookSet& hooks) {
  BackwardResult result;
  result.input_grad = reverse_pass(net, trace, loss_grad_wrt_embedding, &hooks, &result.bank, nullptr);
  return result;
}

Tensor backward_params(const SegmentedNetwork& net, const ForwardTrace& trace,
                       const Tensor& loss_grad_wrt_embedding, std::vector<LayerGrads>& grads) {
  if (grads.size() != net.size()) fail(ErrorKind::Shape, "parameter gradient list size mismatch");
  return reverse_pass(net, trace, loss_grad_wrt_embedding, nullptr, nullptr, &grads);
}

std::vector<LayerGrads> zero_grads(const SegmentedNetwork& net) {
  std::vector<LayerGrads> grads;
  grads.reserve(net.size());
  for (const auto& l : net.layers()) grads.push_back(zero_grads(l));
  return grads;
}

std::size_t feature_bytes(const SegmentedNetwork& net, const HookSet& hooks) {
  std::size_t n = 0;
  for (auto i : hooks.indices) n += numel(net.feature_shape(i)) * sizeof(double);
  return n;
}

}  // namespace bpfa
