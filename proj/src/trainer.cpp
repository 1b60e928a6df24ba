#include "bpfa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "bpfa/attacks.hpp"
#include "bpfa/error.hpp"
#include "bpfa/random.hpp"

namespace bpfa {

void TrainConfig::validate() const {
  if (epochs == 0) fail(ErrorKind::Config, "epochs must be positive");
  if (!(learning_rate > 0.0)) fail(ErrorKind::Config, "learning rate must be positive");
  if (batch_size == 0) fail(ErrorKind::Config, "batch size must be positive");
  if (embedding_dim == 0) fail(ErrorKind::Config, "embedding_dim must be positive");
  if (adversarial_training && !(adv_epsilon > 0.0)) {
    fail(ErrorKind::Config, "adversarial training needs adv_epsilon > 0");
  }
}

void recompute_batchnorm_statistics(SegmentedNetwork& net, const IdentityDataset& ds,
                                    const std::vector<std::size_t>& indices) {
  if (indices.empty()) return;
  for (std::size_t i = 1; i <= net.size(); ++i) {
    if (net.layer(i).spec.kind != LayerKind::BatchNorm) continue;
    const std::size_t C = net.layer(i).spec.features;
    std::vector<double> sum(C, 0.0), sumsq(C, 0.0);
    std::size_t per = 0;
    for (auto idx : indices) {
      const Tensor h = forward_segment(net, 1, i - 1, ds.images[idx]);
      per = h.size() / C;
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t k = 0; k < per; ++k) {
          const double v = h[c * per + k];
          sum[c] += v;
          sumsq[c] += v * v;
        }
      }
    }
    Layer& bn = net.mutable_layers()[i - 1];
    const double n = static_cast<double>(indices.size() * per);
    for (std::size_t c = 0; c < C; ++c) {
      const double m = sum[c] / n;
      bn.running_mean[c] = m;
      bn.running_var[c] = std::max(sumsq[c] / n - m * m, 0.0);
    }
  }
}

namespace {

struct CosineHead {
  Tensor weight;  // [K, d]
};

struct HeadLoss {
  double loss = 0.0;
  bool correct = false;
  Tensor grad_emb;
  Tensor grad_head;
};

HeadLoss cosine_softmax(const CosineHead& head, const Tensor& emb, std::size_t label, double s, double m) {
  const std::size_t K = head.weight.shape()[0], d = head.weight.shape()[1];
  const double enorm = l2_norm(emb);
  if (!(enorm > 0.0)) fail(ErrorKind::Numeric, "training produced a zero embedding");
  std::vector<double> u(d), wnorm(K), cos(K), logits(K);
  for (std::size_t j = 0; j < d; ++j) u[j] = emb[j] / enorm;
  for (std::size_t k = 0; k < K; ++k) {
    double nn = 0.0, c = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double w = head.weight[k * d + j];
      nn += w * w;
      c += w * u[j];
    }
    wnorm[k] = std::sqrt(nn);
    cos[k] = c / wnorm[k];
    logits[k] = s * (cos[k] - (k == label ? m : 0.0));
  }
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double zsum = 0.0;
  for (auto z : logits) zsum += std::exp(z - zmax);

  HeadLoss out;
  out.loss = -(logits[label] - zmax - std::log(zsum));
  out.correct = std::max_element(cos.begin(), cos.end()) - cos.begin() == static_cast<long>(label);
  out.grad_head = Tensor(head.weight.shape());
  std::vector<double> du(d, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double p = std::exp(logits[k] - zmax) / zsum;
    const double dcos = s * (p - (k == label ? 1.0 : 0.0));
    // d cos_k / d w_k = (u - cos_k w_hat_k) / |w_k|
    for (std::size_t j = 0; j < d; ++j) {
      const double what = head.weight[k * d + j] / wnorm[k];
      du[j] += dcos * what;
      out.grad_head[k * d + j] = dcos * (u[j] - cos[k] * what) / wnorm[k];
    }
  }
  double radial = 0.0;
  for (std::size_t j = 0; j < d; ++j) radial += du[j] * u[j];
  out.grad_emb = Tensor(emb.shape());
  for (std::size_t j = 0; j < d; ++j) out.grad_emb[j] = (du[j] - radial * u[j]) / enorm;
  return out;
}

void sgd_update(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum,
                double weight_decay, double grad_scale, bool decay) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] * grad_scale + (decay ? weight_decay * param[i] : 0.0);
    velocity[i] = momentum * velocity[i] + g;
    param[i] -= lr * velocity[i];
  }
}

Tensor craft_training_example(const SegmentedNetwork& net, const Tensor& x, const TrainConfig& cfg,
                              std::uint64_t seed) {
  AttackConfig acfg;
  acfg.epsilon = cfg.adv_epsilon;
  acfg.n_max = cfg.adv_steps;
  acfg.beta = 2.5 * cfg.adv_epsilon / static_cast<double>(cfg.adv_steps);
  acfg.mode = AttackMode::Dodging;
  acfg.random_start = cfg.adv_epsilon;
  acfg.seed = seed;
  return craft(net, x, forward_plain(net, x), acfg).x_adv;
}

TrainResult train_impl(const IdentityDataset& ds, const TrainConfig& cfg, bool adversarial) {
  cfg.validate();
  const std::size_t K = ds.params.num_identities;
  if (K < 2) fail(ErrorKind::Precondition, "training needs at least two identities");
  std::vector<std::size_t> train_idx = ds.train_indices();
  if (train_idx.empty()) fail(ErrorKind::Precondition, "empty training split");

  TrainResult result;
  result.net = build_architecture(cfg.architecture, ds.image_shape(), cfg.embedding_dim, cfg.seed);
  SegmentedNetwork& net = result.net;

  CosineHead head{Tensor({K, cfg.embedding_dim})};
  {
    Rng rng = make_rng(derive_seed(cfg.seed, "head"));
    for (double& w : head.weight.data()) w = standard_normal(rng);
  }

  std::vector<LayerGrads> velocity = zero_grads(net);
  Tensor head_velocity(head.weight.shape());
  Rng shuffle_rng = make_rng(derive_seed(cfg.seed, "shuffle"));
  const bool has_bn = std::any_of(net.layers().begin(), net.layers().end(),
                                  [](const Layer& l) { return l.spec.kind == LayerKind::BatchNorm; });
  const bool craft_adv = adversarial && cfg.adv_steps > 0;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.learning_rate;
    if (epoch >= cfg.epochs / 2) lr *= 0.1;
    if (epoch >= (3 * cfg.epochs) / 4) lr *= 0.1;
    if (has_bn) recompute_batchnorm_statistics(net, ds, train_idx);

    for (std::size_t k = train_idx.size(); k > 1; --k) {
      std::swap(train_idx[k - 1], train_idx[uniform_index(shuffle_rng, k)]);
    }

    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, train_idx.size());
      std::vector<LayerGrads> grads = zero_grads(net);
      Tensor head_grad(head.weight.shape());
      double loss_sum = 0.0;
      std::size_t correct = 0, count = 0;

      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = train_idx[b];
        std::vector<Tensor> inputs{ds.images[idx]};
        if (craft_adv) {
          inputs.push_back(craft_training_example(net, ds.images[idx], cfg,
                                                  derive_seed(cfg.seed, step * 100003 + b)));
        }
        for (const Tensor& x : inputs) {
          const ForwardTrace trace = forward_injected(net, x, HookSet{}, GradientBank{}, 0.0);
          const HeadLoss hl = cosine_softmax(head, trace.embedding, ds.labels[idx], cfg.cosine_scale,
                                             cfg.cosine_margin);
          backward_params(net, trace, hl.grad_emb, grads);
          for (std::size_t i = 0; i < head_grad.size(); ++i) head_grad[i] += hl.grad_head[i];
          loss_sum += hl.loss;
          correct += hl.correct;
          ++count;
        }
      }
      if (!std::isfinite(loss_sum)) {
        fail(ErrorKind::Numeric, "training diverged at step " + std::to_string(step));
      }
      const double inv = 1.0 / static_cast<double>(count);
      auto layers = net.mutable_layers();
      for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!has_parameters(layers[i].spec.kind)) continue;
        sgd_update(layers[i].weight, grads[i].weight, velocity[i].weight, lr, cfg.momentum,
                   cfg.weight_decay, inv, layers[i].spec.kind != LayerKind::BatchNorm);
        sgd_update(layers[i].bias, grads[i].bias, velocity[i].bias, lr, cfg.momentum,
                   cfg.weight_decay, inv, false);
      }
      sgd_update(head.weight, head_grad, head_velocity, lr, cfg.momentum, 0.0, inv, false);
      result.log.push_back({step, loss_sum * inv, static_cast<double>(correct) * inv});
      ++step;
    }
  }

  for (const auto& l : net.layers()) {
    for (const Tensor* t : {&l.weight, &l.bias, &l.running_mean, &l.running_var}) {
      check_finite(*t, "trained weights of " + l.spec.name);
    }
  }
  result.verification = verification_accuracy(net, ds);
  if (result.verification.accuracy < cfg.accuracy_floor) {
    std::ostringstream os;
    os << "architecture " << to_string(cfg.architecture) << " reached held-out pair accuracy "
       << result.verification.accuracy << " (floor " << cfg.accuracy_floor << "), triplet accuracy "
       << result.verification.triplet_accuracy << ", final batch loss "
       << (result.log.empty() ? 0.0 : result.log.back().loss);
    fail(ErrorKind::Quality, os.str());
  }
  return result;
}

}  // namespace

TrainResult train(const IdentityDataset& ds, const TrainConfig& cfg) {
  return train_impl(ds, cfg, false);
}

TrainResult adversarial_train(const IdentityDataset& ds, const TrainConfig& cfg) {
  if (!cfg.adversarial_training) fail(ErrorKind::Config, "adversarial_train needs adversarial_training = true");
  return train_impl(ds, cfg, true);
}

void write_train_log_csv(const std::vector<TrainLogEntry>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
  out.precision(17);
  out << "step,loss,accuracy\n";
  for (const auto& e : log) out << e.step << ',' << e.loss << ',' << e.accuracy << '\n';
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

double false_accept_rate(const std::vector<double>& distances, double threshold) {
  if (distances.empty()) return 0.0;
  const auto n = std::count_if(distances.begin(), distances.end(), [&](double d) { return d < threshold; });
  return static_cast<double>(n) / static_cast<double>(distances.size());
}

Threshold calibrate_from_distances(std::vector<double> d, double far_target) {
  if (!(far_target > 0.0 && far_target <= 1.0)) {
    fail(ErrorKind::Precondition, "far_target must lie in (0, 1]");
  }
  const auto needed = static_cast<std::size_t>(std::ceil(1.0 / far_target - 1e-9));
  if (d.size() < needed) {
    fail(ErrorKind::Precondition, "calibration at FAR " + std::to_string(far_target) + " needs " +
                                      std::to_string(needed) + " negative pairs, got " +
                                      std::to_string(d.size()));
  }
  std::sort(d.begin(), d.end());
  const std::size_t n = d.size();
  const auto k = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(far_target * n)));
  Threshold t;
  t.far_target = far_target;
  t.n_negatives = n;
  if (k == n) {
    t.value = std::nextafter(d.back(), std::numeric_limits<double>::infinity());
  } else if (k == 0) {
    t.value = d.front();
  } else {
    t.value = 0.5 * (d[k - 1] + d[k]);
  }
  t.achieved_far = false_accept_rate(d, t.value);
  return t;
}

Threshold calibrate_threshold(const SegmentedNetwork& net, const IdentityDataset& ds, double far_target,
                              DistanceMetric metric) {
  Threshold t = calibrate_from_distances(negative_pair_distances(net, ds), far_target);
  t.metric = metric;
  return t;
}

void save_threshold(const Threshold& t, const std::filesystem::path& path) {
  nlohmann::json j{{"format", "bpfa-threshold"},
                   {"version", 1},
                   {"value", t.value},
                   {"far_target", t.far_target},
                   {"achieved_far", t.achieved_far},
                   {"n_negatives", t.n_negatives},
                   {"metric", "normalized_sq_euclidean"}};
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

Threshold load_threshold(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open for reading: " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != "bpfa-threshold" || j.at("version") != 1) {
      fail(ErrorKind::Format, "not a threshold record: " + path.string());
    }
    if (j.at("metric") != "normalized_sq_euclidean") fail(ErrorKind::Format, "unknown distance metric");
    Threshold t;
    t.value = j.at("value");
    t.far_target = j.at("far_target");
    t.achieved_far = j.at("achieved_far");
    t.n_negatives = j.at("n_negatives");
    return t;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("bad threshold record: ") + e.what());
  }
}

}  // namespace bpfa
