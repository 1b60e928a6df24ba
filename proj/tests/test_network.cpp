#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "bpfa/feature_dump.hpp"
#include "bpfa/model_io.hpp"
#include "bpfa/network.hpp"
#include "test_util.hpp"

namespace bpfa {
namespace {

namespace fs = std::filesystem;
using testing::central_difference;
using testing::error_kind;
using testing::mixed_net;
using testing::mlp_net;
using testing::random_image;
using testing::random_tensor;
using testing::relative_error;

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "bpfa_test_network";
  fs::create_directories(dir);
  return dir / name;
}

// Linear readout so that d(loss)/d(embedding) = c.
double readout(const SegmentedNetwork& net, const Tensor& x, const Tensor& c) {
  return dot(forward_plain(net, x), c);
}

SegmentedNetwork single_kind_net(LayerKind kind, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<Layer> layers;
  Shape in{2, 6, 6};
  switch (kind) {
    case LayerKind::Conv2d:
      layers = {make_conv2d("conv", 2, 3, 3, 2, Padding::Same), make_flatten("flat")};
      break;
    case LayerKind::Dense:
      layers = {make_flatten("flat"), make_dense("fc", 72, 5)};
      break;
    case LayerKind::BatchNorm:
      layers = {make_batchnorm("bn", 2), make_flatten("flat")};
      break;
    case LayerKind::Relu:
      layers = {make_relu("relu"), make_flatten("flat")};
      break;
    case LayerKind::AvgPool:
      layers = {make_avgpool("pool", 2), make_flatten("flat")};
      break;
    case LayerKind::Flatten:
      layers = {make_flatten("flat")};
      break;
  }
  for (auto& l : layers) testing::randomize(l, rng);
  return SegmentedNetwork(in, std::move(layers));
}

TEST(Network, TwoLayerMatchesStraightLineEvaluation) {
  Rng rng = make_rng(11);
  Layer conv = make_conv2d("conv", 1, 2, 3, 1, Padding::Same);
  Layer fc = make_dense("fc", 32, 3);
  testing::randomize(conv, rng);
  testing::randomize(fc, rng);
  const SegmentedNetwork net({1, 4, 4}, {conv, make_flatten("flat"), fc});
  const Tensor x = random_image({1, 4, 4}, rng);

  std::vector<double> xin(16), h(32, 0.0), out(3, 0.0);
  for (int i = 0; i < 16; ++i) xin[i] = x[i] / 255.0 - 0.5;
  for (int o = 0; o < 2; ++o) {
    for (int y = 0; y < 4; ++y) {
      for (int xx = 0; xx < 4; ++xx) {
        double s = conv.bias[o];
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const int sy = y + ky - 1, sx = xx + kx - 1;
            if (sy < 0 || sy >= 4 || sx < 0 || sx >= 4) continue;
            s += conv.weight[o * 9 + ky * 3 + kx] * xin[sy * 4 + sx];
          }
        }
        h[o * 16 + y * 4 + xx] = s;
      }
    }
  }
  for (int j = 0; j < 3; ++j) {
    out[j] = fc.bias[j];
    for (int i = 0; i < 32; ++i) out[j] += fc.weight[j * 32 + i] * h[i];
  }
  const Tensor emb = forward_plain(net, x);
  ASSERT_EQ(emb.shape(), Shape{3});
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(emb[j], out[j], 1e-12);
}

TEST(Network, ZeroWeightsGiveZeroEmbedding) {
  SegmentedNetwork net = mlp_net(3);
  for (auto& l : net.mutable_layers()) {
    for (double& v : l.weight.data()) v = 0.0;
    for (double& v : l.bias.data()) v = 0.0;
  }
  Rng rng = make_rng(1);
  EXPECT_EQ(forward_plain(net, random_image({1, 4, 4}, rng)), Tensor({3}));
}

TEST(Network, RejectsBadConstruction) {
  EXPECT_EQ(error_kind([] { SegmentedNetwork({1, 4, 4}, {make_flatten("a"), make_dense("a", 16, 2)}); }),
            ErrorKind::Config);
  EXPECT_EQ(error_kind([] { SegmentedNetwork({1, 4, 4}, {make_relu("r")}); }), ErrorKind::Shape);
  EXPECT_EQ(error_kind([] { SegmentedNetwork({1, 4, 4}, {make_flatten("f"), make_dense("d", 15, 2)}); }),
            ErrorKind::Shape);
  const SegmentedNetwork net = mlp_net(1);
  EXPECT_EQ(error_kind([&] { forward_plain(net, Tensor({1, 5, 4})); }), ErrorKind::Shape);
}

TEST(Network, SegmentCompositionIsExact) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const SegmentedNetwork net = mixed_net(seed);
    Rng rng = make_rng(seed + 100);
    const Tensor x = random_image(net.input_shape(), rng);
    const Tensor full = forward_plain(net, x);
    EXPECT_EQ(forward_segment(net, 1, net.size(), x), full);
    EXPECT_EQ(apply_input_transform(net, x).shape(), net.feature_shape(0));
    for (std::size_t i = 1; i <= net.size(); ++i) {
      const Tensor head = forward_segment(net, 1, i, x);
      EXPECT_EQ(head.shape(), net.feature_shape(i));
      EXPECT_EQ(forward_segment(net, i + 1, net.size(), head), full) << "split " << i;
    }
  }
}

TEST(Network, HookValidation) {
  const SegmentedNetwork net = mixed_net(1);
  EXPECT_EQ(make_hooks(net, {1, 3}).indices, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(error_kind([&] { make_hooks(net, {3, 1}); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([&] { make_hooks(net, {1, 1}); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([&] { make_hooks(net, {0}); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([&] { make_hooks(net, {net.size() + 1}); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([&] { make_hooks(net, {8}); }), ErrorKind::Config);  // dense
  EXPECT_EQ(default_hooks(net).indices, (std::vector<std::size_t>{3, 5, 10}));
  EXPECT_EQ(hooks_for_kind(net, LayerKind::BatchNorm).indices, (std::vector<std::size_t>{2, 9}));
  EXPECT_EQ(hooks_for_kind(net, LayerKind::Relu).indices, (std::vector<std::size_t>{3, 5, 10}));
  EXPECT_EQ(default_hooks(mlp_net(1)).indices, (std::vector<std::size_t>{3}));
}

TEST(Network, TraceHoldsExactlyTheHookedMaps) {
  const SegmentedNetwork net = mixed_net(2);
  Rng rng = make_rng(5);
  const HookSet hooks = make_hooks(net, {2, 5, 10});
  const ForwardTrace trace = forward_injected(net, random_image(net.input_shape(), rng), hooks, {}, 0.0);
  std::set<std::size_t> keys;
  for (const auto& [k, v] : trace.activations) {
    keys.insert(k);
    EXPECT_EQ(v.shape(), net.feature_shape(k));
  }
  EXPECT_EQ(keys, (std::set<std::size_t>{2, 5, 10}));
}

TEST(Network, InjectionIsTransparentWithoutBankOrStep) {
  const SegmentedNetwork net = mixed_net(4);
  Rng rng = make_rng(6);
  const Tensor x = random_image(net.input_shape(), rng);
  const HookSet hooks = default_hooks(net);
  const Tensor plain = forward_plain(net, x);
  EXPECT_EQ(forward_injected(net, x, hooks, {}, 0.5).embedding, plain);

  GradientBank bank;
  for (auto i : hooks.indices) bank.grads[i] = random_tensor(net.feature_shape(i), rng);
  EXPECT_EQ(forward_injected(net, x, hooks, bank, 0.0).embedding, plain);
  EXPECT_NE(forward_injected(net, x, hooks, bank, 0.1).embedding, plain);
}

TEST(Network, PositiveBankShiftsHookedActivationByEta) {
  const SegmentedNetwork net = mixed_net(5);
  Rng rng = make_rng(7);
  const Tensor x = random_image(net.input_shape(), rng);
  const HookSet hooks = make_hooks(net, {4});
  GradientBank bank;
  bank.grads[4] = Tensor(net.feature_shape(4), 3.0);
  const ForwardTrace trace = forward_injected(net, x, hooks, bank, 0.1);
  const Tensor plain = forward_segment(net, 1, 4, x);
  const Tensor& injected = trace.activations.at(4);
  for (std::size_t k = 0; k < plain.size(); ++k) EXPECT_DOUBLE_EQ(injected[k], plain[k] + 0.1);
  EXPECT_EQ(trace.embedding, forward_segment(net, 5, net.size(), injected));
}

TEST(Network, InjectionRejectsMismatchedBank) {
  const SegmentedNetwork net = mixed_net(6);
  Rng rng = make_rng(8);
  const Tensor x = random_image(net.input_shape(), rng);
  const HookSet hooks = make_hooks(net, {1, 4});
  GradientBank bank;
  bank.grads[1] = Tensor(net.feature_shape(1), 1.0);
  bank.grads[4] = Tensor(net.feature_shape(3), 1.0);
  EXPECT_EQ(error_kind([&] { forward_injected(net, x, hooks, bank, 0.1); }), ErrorKind::Shape);
  bank.grads.erase(4);
  EXPECT_EQ(error_kind([&] { forward_injected(net, x, hooks, bank, 0.1); }), ErrorKind::Shape);
  bank.grads[4] = Tensor(net.feature_shape(4), 1.0);
  bank.grads[3] = Tensor(net.feature_shape(3), 1.0);
  EXPECT_EQ(error_kind([&] { forward_injected(net, x, hooks, bank, 0.1); }), ErrorKind::Shape);
}

TEST(Network, IdentityNetworkQuadraticGradient) {
  const SegmentedNetwork net({1, 3, 3}, {make_flatten("flat")}, InputTransform{1.0, 0.0});
  Rng rng = make_rng(9);
  const Tensor x = random_image({1, 3, 3}, rng);
  const ForwardTrace trace = forward_injected(net, x, {}, {}, 0.0);
  const BackwardResult r = backward(net, trace, trace.embedding, {});
  EXPECT_EQ(r.input_grad, x);
}

TEST(Network, InputGradientMatchesFiniteDifferencesPerLayerKind) {
  for (LayerKind kind : {LayerKind::Conv2d, LayerKind::Dense, LayerKind::BatchNorm, LayerKind::Relu,
                         LayerKind::AvgPool, LayerKind::Flatten}) {
    const SegmentedNetwork net = single_kind_net(kind, 21);
    Rng rng = make_rng(22);
    const Tensor x = random_image(net.input_shape(), rng);
    const Tensor c = random_tensor({net.embedding_dim()}, rng);
    const ForwardTrace trace = forward_injected(net, x, {}, {}, 0.0);
    const Tensor g = backward(net, trace, c, {}).input_grad;
    auto f = [&](const Tensor& z) { return readout(net, z, c); };
    double worst = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      worst = std::max(worst, relative_error(g[k], central_difference(f, x, k, 1e-5)));
    }
    EXPECT_LT(worst, 1e-4) << to_string(kind);
  }
}

TEST(Network, InputAndBankGradientsMatchFiniteDifferences) {
  for (std::uint64_t seed : {31, 32, 33}) {
    const SegmentedNetwork net = mixed_net(seed);
    Rng rng = make_rng(seed * 7);
    const Tensor x = random_image(net.input_shape(), rng);
    const Tensor c = random_tensor({net.embedding_dim()}, rng);
    const HookSet hooks = make_hooks(net, {1, 2, 3, 4, 9, 10});
    GradientBank prior;
    for (auto i : hooks.indices) prior.grads[i] = random_tensor(net.feature_shape(i), rng);
    const double eta = 0.05;

    const ForwardTrace trace = forward_injected(net, x, hooks, prior, eta);
    const BackwardResult r = backward(net, trace, c, hooks);

    auto f = [&](const Tensor& z) { return dot(forward_injected(net, z, hooks, prior, eta).embedding, c); };
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t k = uniform_index(rng, x.size());
      EXPECT_LT(relative_error(r.input_grad[k], central_difference(f, x, k, 1e-5)), 1e-4);
    }

    ASSERT_EQ(r.bank.grads.size(), hooks.size());
    for (auto i : hooks.indices) {
      const Tensor& omega = trace.activations.at(i);
      const Tensor& gi = r.bank.grads.at(i);
      ASSERT_EQ(gi.shape(), omega.shape());
      // Downstream of a hooked map, later injections are additive constants.
      auto tail = [&](const Tensor& w) {
        Tensor h = w;
        for (std::size_t j = i + 1; j <= net.size(); ++j) {
          h = forward_segment(net, j, j, h);
          if (hooks.contains(j)) h = axpy_sign_step(h, prior.grads.at(j), eta);
        }
        return dot(h, c);
      };
      for (int trial = 0; trial < 10; ++trial) {
        const std::size_t k = uniform_index(rng, omega.size());
        EXPECT_LT(relative_error(gi[k], central_difference(tail, omega, k, 1e-5)), 1e-4)
            << "layer " << i << " coordinate " << k;
      }
    }
  }
}

TEST(Network, ParameterGradientsMatchFiniteDifferences) {
  const SegmentedNetwork base = mixed_net(41);
  Rng rng = make_rng(42);
  const Tensor x = random_image(base.input_shape(), rng);
  const Tensor c = random_tensor({base.embedding_dim()}, rng);
  std::vector<LayerGrads> grads = zero_grads(base);
  backward_params(base, forward_injected(base, x, {}, {}, 0.0), c, grads);
  for (std::size_t li = 0; li < base.size(); ++li) {
    if (!has_parameters(base.layers()[li].spec.kind)) continue;
    for (int which = 0; which < 2; ++which) {
      const Tensor& analytic = which == 0 ? grads[li].weight : grads[li].bias;
      for (int trial = 0; trial < 5; ++trial) {
        const std::size_t k = uniform_index(rng, analytic.size());
        auto f = [&](double delta) {
          SegmentedNetwork net = base;
          Layer& l = net.mutable_layers()[li];
          (which == 0 ? l.weight : l.bias)[k] += delta;
          return readout(net, x, c);
        };
        const double numeric = (f(1e-5) - f(-1e-5)) / 2e-5;
        EXPECT_LT(relative_error(analytic[k], numeric), 1e-4) << base.layers()[li].spec.name;
      }
    }
  }
}

TEST(Network, TracesAndBanksAreDeterministic) {
  const SegmentedNetwork net = mixed_net(51);
  Rng rng = make_rng(52);
  const Tensor x = random_image(net.input_shape(), rng);
  const Tensor c = random_tensor({net.embedding_dim()}, rng);
  const HookSet hooks = default_hooks(net);
  auto run = [&] {
    const ForwardTrace t = forward_injected(net, x, hooks, {}, 0.0);
    return backward(net, t, c, hooks);
  };
  const BackwardResult a = run(), b = run();
  EXPECT_EQ(a.input_grad, b.input_grad);
  EXPECT_EQ(a.bank.grads, b.bank.grads);
}

TEST(Network, BankBytesMatchClosedForm) {
  const SegmentedNetwork net = mixed_net(61);
  const HookSet hooks = make_hooks(net, {1, 4, 10});
  std::size_t expected = 0;
  for (auto i : hooks.indices) expected += numel(net.feature_shape(i)) * sizeof(double);
  EXPECT_EQ(feature_bytes(net, hooks), expected);

  Rng rng = make_rng(62);
  const ForwardTrace t = forward_injected(net, random_image(net.input_shape(), rng), hooks, {}, 0.0);
  EXPECT_EQ(backward(net, t, Tensor({net.embedding_dim()}, 1.0), hooks).bank.bytes(), expected);
}

TEST(ModelIo, RoundTripIsBitwise) {
  const SegmentedNetwork net = mixed_net(71);
  const fs::path p = temp_path("roundtrip.bin");
  save_model(net, p, R"({"architecture":"test"})");
  std::string meta;
  const SegmentedNetwork back = load_model(p, &meta);
  EXPECT_EQ(meta, R"({"architecture":"test"})");
  ASSERT_EQ(back.size(), net.size());
  Rng rng = make_rng(72);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = random_image(net.input_shape(), rng);
    EXPECT_EQ(forward_plain(back, x), forward_plain(net, x));
  }
}

TEST(ModelIo, CorruptionIsRejected) {
  const SegmentedNetwork net = mixed_net(73);
  const fs::path p = temp_path("corrupt.bin");
  save_model(net, p);
  std::string bytes;
  {
    std::ifstream in(p, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
  };

  std::string bad = bytes;
  bad[0] = 'X';
  write(bad);
  EXPECT_EQ(error_kind([&] { load_model(p); }), ErrorKind::Format);

  bad = bytes;
  bad[8] = 9;  // version
  write(bad);
  EXPECT_EQ(error_kind([&] { load_model(p); }), ErrorKind::Format);

  write(bytes.substr(0, bytes.size() / 2));
  EXPECT_EQ(error_kind([&] { load_model(p); }), ErrorKind::Format);

  bad = bytes;
  bad[bytes.size() - 20] ^= 0x10;  // inside the last weights
  write(bad);
  EXPECT_EQ(error_kind([&] { load_model(p); }), ErrorKind::Format);

  write("");
  EXPECT_EQ(error_kind([&] { load_model(p); }), ErrorKind::Format);

  EXPECT_EQ(error_kind([&] { load_model(temp_path("missing.bin")); }), ErrorKind::Io);
}

TEST(FeatureDump, ValuesAreEtaTimesSign) {
  GradientBank bank;
  Tensor g({3, 2, 4});
  for (std::size_t k = 0; k < 8; ++k) {
    g[k] = 0.5 + static_cast<double>(k);       // channel 0 all positive
    g[16 + k] = k % 2 ? -1e-9 : 2.0;           // channel 2 mixed
  }
  bank.grads[4] = g;
  const fs::path p = temp_path("dump.csv");
  dump_feature_perturbation(bank, 4, 0.25, p);
  const Tensor back = load_feature_perturbation(p);
  ASSERT_EQ(back.shape(), (Shape{3, 2, 4}));
  std::set<double> distinct;
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_EQ(back[k], 0.25);
    EXPECT_EQ(back[8 + k], 0.0);
    EXPECT_EQ(back[16 + k], k % 2 ? -0.25 : 0.25);
  }
  for (double v : back.data()) distinct.insert(v);
  EXPECT_LE(distinct.size(), 3u);
  EXPECT_EQ(error_kind([&] { dump_feature_perturbation(bank, 5, 0.25, p); }), ErrorKind::Precondition);
}

TEST(FeatureDump, VectorMapsUseOneLine) {
  GradientBank bank;
  bank.grads[2] = Tensor::vector({1, -1, 0});
  const fs::path p = temp_path("dump_vec.csv");
  dump_feature_perturbation(bank, 2, 0.5, p);
  EXPECT_EQ(load_feature_perturbation(p), Tensor({1, 1, 3}, std::vector<double>{0.5, -0.5, 0.0}));
}

}  // namespace
}  // namespace bpfa
