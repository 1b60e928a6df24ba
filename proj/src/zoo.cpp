#include "bpfa/zoo.hpp"

#include <cmath>
#include <map>
#include <string>

#include "bpfa/error.hpp"
#include "bpfa/random.hpp"

namespace bpfa {

std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::A: return "A";
    case Architecture::B: return "B";
    case Architecture::C: return "C";
    case Architecture::D: return "D";
  }
  return "?";
}

Architecture parse_architecture(std::string_view text) {
  if (text == "A") return Architecture::A;
  if (text == "B") return Architecture::B;
  if (text == "C") return Architecture::C;
  if (text == "D") return Architecture::D;
  fail(ErrorKind::Config, "unknown architecture '" + std::string(text) + "' (expected A, B, C or D)");
}

namespace {

class Builder {
 public:
  explicit Builder(Shape input) : shape_(std::move(input)) {}

  void conv(std::size_t out, std::size_t stride = 1) {
    push(make_conv2d(next("conv"), shape_[0], out, 3, stride, Padding::Same));
  }
  void dense(std::size_t out) { push(make_dense(next("dense"), shape_[0], out)); }
  void bn() { push(make_batchnorm(next("bn"), shape_[0])); }
  void relu() { push(make_relu(next("relu"))); }
  void flatten() { push(make_flatten(next("flatten"))); }

  std::vector<Layer> take() { return std::move(layers_); }

 private:
  std::string next(const std::string& stem) { return stem + std::to_string(++counts_[stem]); }

  void push(Layer l) {
    shape_ = output_shape(l.spec, shape_);
    layers_.push_back(std::move(l));
  }

  Shape shape_;
  std::vector<Layer> layers_;
  std::map<std::string, int> counts_;
};

void init_weights(std::vector<Layer>& layers, std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, "init"));
  std::size_t last_dense = layers.size();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (layers[k].spec.kind == LayerKind::Dense) last_dense = k;
  }
  for (std::size_t k = 0; k < layers.size(); ++k) {
    auto& l = layers[k];
    if (l.spec.kind != LayerKind::Conv2d && l.spec.kind != LayerKind::Dense) continue;
    const std::size_t fan_in = l.weight.size() / l.weight.shape()[0];
    const double gain = k == last_dense ? 1.0 : 2.0;
    const double stddev = std::sqrt(gain / static_cast<double>(fan_in));
    for (double& w : l.weight.data()) w = stddev * standard_normal(rng);
  }
}

}  // namespace

SegmentedNetwork build_architecture(Architecture arch, const Shape& input_shape,
                                    std::size_t embedding_dim, std::uint64_t seed) {
  if (input_shape.size() != 3) fail(ErrorKind::Config, "input shape must be CxHxW");
  if (embedding_dim == 0) fail(ErrorKind::Config, "embedding_dim must be positive");
  Builder b(input_shape);
  switch (arch) {
    case Architecture::A:
      b.flatten();
      b.dense(512);
      b.relu();
      b.dense(embedding_dim);
      break;
    case Architecture::B:
      b.flatten();
      for (int k = 0; k < 3; ++k) {
        b.dense(128);
        b.relu();
      }
      b.dense(embedding_dim);
      break;
    case Architecture::C:
      b.conv(8);
      b.relu();
      b.conv(16, 2);
      b.relu();
      b.conv(16, 2);
      b.relu();
      b.flatten();
      b.dense(256);
      b.relu();
      b.dense(embedding_dim);
      break;
    case Architecture::D:
      b.conv(8);
      b.bn();
      b.relu();
      b.conv(16, 2);
      b.bn();
      b.relu();
      b.conv(16, 2);
      b.bn();
      b.relu();
      b.flatten();
      b.dense(256);
      b.relu();
      b.dense(embedding_dim);
      break;
  }
  std::vector<Layer> layers = b.take();
  init_weights(layers, seed);
  return SegmentedNetwork(input_shape, std::move(layers));
}

}  // namespace bpfa
