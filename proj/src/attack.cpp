#include <cmath>
#include <fstream>

#include "bpfa/attacks.hpp"
#include "bpfa/error.hpp"

namespace bpfa {

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) fail(ErrorKind::Config, "epsilon must be >= 0");
  if (!(beta > 0.0)) fail(ErrorKind::Config, "beta must be > 0");
  if (n_max < 1) fail(ErrorKind::Config, "n_max must be >= 1");
  if (!std::isfinite(eta)) fail(ErrorKind::Config, "eta must be finite");
  if (!(dfanet.drop_rate >= 0.0 && dfanet.drop_rate < 1.0)) {
    fail(ErrorKind::Config, "drop_rate must lie in [0, 1)");
  }
  if (!(di.transform_prob >= 0.0 && di.transform_prob <= 1.0)) {
    fail(ErrorKind::Config, "transform_prob must lie in [0, 1]");
  }
  if (!(di.min_scale > 0.0 && di.min_scale <= 1.0)) fail(ErrorKind::Config, "min_scale must lie in (0, 1]");
  if (!(random_start >= 0.0)) fail(ErrorKind::Config, "random_start must be >= 0");
}

namespace {

Tensor box_lo(const Tensor& source, double epsilon) {
  Tensor lo = source;
  for (double& v : lo.data()) v = std::max(v - epsilon, 0.0);
  return lo;
}

Tensor box_hi(const Tensor& source, double epsilon) {
  Tensor hi = source;
  for (double& v : hi.data()) v = std::min(v + epsilon, 255.0);
  return hi;
}

}  // namespace

AttackState init_attack_state(const Tensor& source, const AttackConfig& cfg) {
  cfg.validate();
  AttackState s;
  s.x_adv = source;
  s.momentum = Tensor(source.shape());
  s.di_rng = make_rng(derive_seed(cfg.seed, "di"));
  s.dropout_rng = make_rng(derive_seed(cfg.seed, "dropout"));
  if (cfg.random_start > 0.0) {
    Rng rng = make_rng(derive_seed(cfg.seed, "random-start"));
    for (double& v : s.x_adv.data()) v += cfg.random_start * (2.0 * uniform01(rng) - 1.0);
    s.x_adv = clip_box(s.x_adv, box_lo(source, cfg.epsilon), box_hi(source, cfg.epsilon));
  }
  return s;
}

AttackState attack_step(const SegmentedNetwork& net, AttackState state, const AttackConfig& cfg,
                        const Tensor& source, const Tensor& ref_emb, bool probe_plain) {
  if (state.t == 1 ? !state.bank.empty() : state.bank.empty() != cfg.hooks.empty()) {
    fail(ErrorKind::Precondition, "attack state: bank must be empty exactly at t == 1");
  }
  // (a) input diversity
  const DiWarp warp = cfg.di.enabled
                          ? draw_di_warp(state.x_adv.shape(), cfg.di.transform_prob, state.di_rng,
                                         cfg.di.min_scale)
                          : DiWarp{state.x_adv.shape(), {}};
  const Tensor x_in = warp.apply(state.x_adv);

  // (b) injected forward; the bank is empty at t == 1 so nothing is injected then
  FeatureMasks masks;
  if (cfg.dfanet.enabled) masks = draw_dropout_masks(net, cfg.dfanet.drop_rate, state.dropout_rng);
  const ForwardTrace trace = forward_injected(net, x_in, cfg.hooks, state.bank, cfg.eta, &masks);

  // (c) loss
  const LossValue loss = attack_loss(cfg.mode, trace.embedding, ref_emb);
  state.last_loss = loss.value;
  state.last_plain_loss.reset();
  if (probe_plain) {
    const ForwardTrace plain = forward_injected(net, x_in, cfg.hooks, GradientBank{}, 0.0, &masks);
    state.last_plain_loss = attack_loss(cfg.mode, plain.embedding, ref_emb).value;
  }

  // (d) single backward: input gradient and the next bank
  BackwardResult back = backward(net, trace, loss.grad, cfg.hooks);
  Tensor g = warp.pullback(back.input_grad);

  // (e) momentum
  if (cfg.mi.enabled) {
    const double l1 = l1_norm(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      state.momentum[i] = cfg.mi.decay * state.momentum[i] + (l1 > 0.0 ? g[i] / l1 : 0.0);
    }
    g = state.momentum;
  }

  // (f, g) descend and project
  state.x_adv = clip_box(axpy_sign_step(state.x_adv, g, -cfg.beta), box_lo(source, cfg.epsilon),
                         box_hi(source, cfg.epsilon));

  // (h) the bank is consumed by exactly one forward and then replaced
  back.bank.iteration_tag = static_cast<int>(state.t);
  state.bank = std::move(back.bank);
  ++state.t;
  return state;
}

AttackResult craft(const SegmentedNetwork& net, const Tensor& source, const Tensor& ref_emb,
                   const AttackConfig& cfg, const RunOptions& opts) {
  AttackState state = init_attack_state(source, cfg);
  AttackResult result;
  result.log.reserve(cfg.n_max);
  auto snapshot = [&](std::size_t n) {
    for (auto s : opts.snapshot_at) {
      if (s == n) result.snapshots.emplace(n, state.x_adv);
    }
  };
  snapshot(0);
  for (std::size_t t = 1; t <= cfg.n_max; ++t) {
    state = attack_step(net, std::move(state), cfg, source, ref_emb, opts.probe_plain_loss);
    result.log.push_back({t, state.last_loss, state.last_plain_loss, state.bank.bytes()});
    snapshot(t);
  }
  result.x_adv = std::move(state.x_adv);
  return result;
}

AttackResult run_attack(const SegmentedNetwork& net, const IdentityDataset& ds, const FacePair& pair,
                        const AttackConfig& cfg, const RunOptions& opts) {
  if (pair.attacker_index >= ds.size() || pair.target_index >= ds.size()) {
    fail(ErrorKind::Precondition, "pair index outside the dataset");
  }
  const Tensor& source = ds.images[pair.attacker_index];
  Tensor ref_emb;
  if (cfg.mode == AttackMode::Impersonation) {
    if (pair.polarity != Polarity::Negative || ds.labels[pair.attacker_index] == ds.labels[pair.target_index]) {
      fail(ErrorKind::Precondition, "impersonation requires a negative pair");
    }
    ref_emb = forward_plain(net, ds.images[pair.target_index]);
  } else {
    ref_emb = forward_plain(net, source);
  }
  return craft(net, source, ref_emb, cfg, opts);
}

std::size_t bank_bytes(const AttackConfig& cfg, const SegmentedNetwork& net) {
  return feature_bytes(net, cfg.hooks);
}

void write_trajectory_csv(const std::vector<IterationRecord>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
  const bool probed = !log.empty() && log.back().plain_loss.has_value();
  out.precision(17);
  out << "t,loss,bank_bytes" << (probed ? ",plain_loss" : "") << '\n';
  for (const auto& r : log) {
    out << r.t << ',' << r.loss << ',' << r.bank_bytes;
    if (probed) {
      out << ',';
      if (r.plain_loss) out << *r.plain_loss;
    }
    out << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace bpfa
