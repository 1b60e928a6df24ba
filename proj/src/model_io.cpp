#include "bpfa/model_io.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>

#include "bpfa/error.hpp"
#include "bpfa/serial.hpp"

namespace bpfa {

namespace {

constexpr char kMagic[8] = {'B', 'P', 'F', 'A', 'N', 'E', 'T', '\0'};

using nlohmann::json;

std::vector<Tensor*> stored_tensors(Layer& l) {
  std::vector<Tensor*> out;
  for (Tensor* t : {&l.weight, &l.bias, &l.running_mean, &l.running_var}) {
    if (!t->empty()) out.push_back(t);
  }
  return out;
}

const char* kRoles[] = {"weight", "bias", "running_mean", "running_var"};

json layer_manifest(const Layer& l) {
  json j;
  j["name"] = l.spec.name;
  j["kind"] = std::string(to_string(l.spec.kind));
  switch (l.spec.kind) {
    case LayerKind::Conv2d:
      j["in_channels"] = l.spec.in_channels;
      j["out_channels"] = l.spec.out_channels;
      j["kernel"] = l.spec.kernel;
      j["stride"] = l.spec.stride;
      j["padding"] = l.spec.padding == Padding::Same ? "same" : "valid";
      break;
    case LayerKind::Dense:
      j["in_features"] = l.spec.in_features;
      j["out_features"] = l.spec.out_features;
      break;
    case LayerKind::BatchNorm:
      j["features"] = l.spec.features;
      j["eps"] = l.spec.eps;
      break;
    case LayerKind::AvgPool:
      j["pool"] = l.spec.pool;
      break;
    case LayerKind::Relu:
    case LayerKind::Flatten:
      break;
  }
  json tensors = json::array();
  const Tensor* all[] = {&l.weight, &l.bias, &l.running_mean, &l.running_var};
  for (int k = 0; k < 4; ++k) {
    if (!all[k]->empty()) tensors.push_back({{"role", kRoles[k]}, {"shape", all[k]->shape()}});
  }
  j["tensors"] = tensors;
  return j;
}

Layer layer_from_manifest(const json& j) {
  const auto kind = parse_layer_kind(j.at("kind").get<std::string>());
  if (!kind) fail(ErrorKind::Format, "unknown layer kind in manifest");
  const std::string name = j.at("name").get<std::string>();
  Layer l;
  switch (*kind) {
    case LayerKind::Conv2d: {
      const std::string pad = j.at("padding").get<std::string>();
      if (pad != "same" && pad != "valid") fail(ErrorKind::Format, "bad padding in manifest");
      l = make_conv2d(name, j.at("in_channels"), j.at("out_channels"), j.at("kernel"),
                      j.at("stride"), pad == "same" ? Padding::Same : Padding::Valid);
      break;
    }
    case LayerKind::Dense: l = make_dense(name, j.at("in_features"), j.at("out_features")); break;
    case LayerKind::BatchNorm: l = make_batchnorm(name, j.at("features"), j.at("eps")); break;
    case LayerKind::Relu: l = make_relu(name); break;
    case LayerKind::AvgPool: l = make_avgpool(name, j.at("pool")); break;
    case LayerKind::Flatten: l = make_flatten(name); break;
  }
  const auto& tensors = j.at("tensors");
  auto slots = stored_tensors(l);
  if (tensors.size() != slots.size()) {
    fail(ErrorKind::Format, "manifest tensor list disagrees with layer '" + name + "'");
  }
  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (tensors[k].at("shape").get<Shape>() != slots[k]->shape()) {
      fail(ErrorKind::Format, "manifest tensor shape disagrees with layer '" + name + "'");
    }
  }
  return l;
}

}  // namespace

void save_model(const SegmentedNetwork& net, const std::filesystem::path& path,
                const std::string& metadata) {
  json manifest;
  manifest["format"] = "bpfa-model";
  manifest["input_shape"] = net.input_shape();
  manifest["input_transform"] = {{"scale", net.input_transform().scale},
                                 {"shift", net.input_transform().shift}};
  manifest["metadata"] = json::parse(metadata);
  std::vector<double> values;
  for (const auto& l : net.layers()) {
    manifest["layers"].push_back(layer_manifest(l));
    for (const Tensor* t : {&l.weight, &l.bias, &l.running_mean, &l.running_var}) {
      values.insert(values.end(), t->data().begin(), t->data().end());
    }
  }
  manifest["total_values"] = values.size();

  BinaryWriter w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kModelFormatVersion);
  w.string(manifest.dump());
  w.doubles(values);
  w.u64(fnv1a(values));
  w.close();
}

SegmentedNetwork load_model(const std::filesystem::path& path, std::string* metadata) {
  BinaryReader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) fail(ErrorKind::Format, "not a model file: " + path.string());
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion) {
    fail(ErrorKind::Format, "unsupported model format version " + std::to_string(version));
  }
  json manifest;
  try {
    manifest = json::parse(r.string());
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("corrupt model manifest: ") + e.what());
  }
  const std::vector<double> values = r.doubles();
  if (r.u64() != fnv1a(values)) fail(ErrorKind::Format, "model weight checksum mismatch");
  r.expect_end();

  try {
    std::vector<Layer> layers;
    std::size_t offset = 0;
    for (const auto& lj : manifest.at("layers")) {
      Layer l = layer_from_manifest(lj);
      for (Tensor* t : stored_tensors(l)) {
        if (offset + t->size() > values.size()) fail(ErrorKind::Format, "manifest exceeds weight blob");
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), t->size(), t->data().begin());
        offset += t->size();
      }
      layers.push_back(std::move(l));
    }
    if (offset != values.size() || manifest.at("total_values").get<std::size_t>() != values.size()) {
      fail(ErrorKind::Format, "manifest and weight blob disagree in size");
    }
    InputTransform transform{manifest.at("input_transform").at("scale").get<double>(),
                             manifest.at("input_transform").at("shift").get<double>()};
    if (metadata) *metadata = manifest.value("metadata", json::object()).dump();
    return SegmentedNetwork(manifest.at("input_shape").get<Shape>(), std::move(layers), transform);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("malformed model manifest: ") + e.what());
  }
}

}  // namespace bpfa
