#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include "bpfa/network.hpp"
#include "bpfa/random.hpp"
#include "bpfa/synth_faces.hpp"

namespace bpfa {

enum class AttackMode { Impersonation, Dodging };

std::string_view to_string(AttackMode mode);
AttackMode parse_attack_mode(std::string_view text);

struct MomentumConfig {
  bool enabled = false;
  double decay = 1.0;
};

struct DiversityConfig {
  bool enabled = false;
  double transform_prob = 0.5;
  double min_scale = 0.8;  // smallest resize factor before padding back
};

struct FeatureDropoutConfig {
  bool enabled = false;
  double drop_rate = 0.1;
};

/// Iterative sign-gradient attack with optional feature-map injection.
/// eta > 0 injects beneficial perturbations, eta < 0 adversarial ones,
/// eta == 0 disables injection.
struct AttackConfig {
  double epsilon = 10.0;  // L-inf budget in pixel units
  double beta = 1.0;      // input step size
  std::size_t n_max = 100;
  AttackMode mode = AttackMode::Impersonation;
  double eta = 0.0;
  HookSet hooks;
  MomentumConfig mi;
  DiversityConfig di;
  FeatureDropoutConfig dfanet;
  /// Uniform start in [-random_start, random_start] around the source; 0 starts at the source.
  double random_start = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossValue {
  double value = 0.0;
  Tensor grad;  // with respect to the raw (unnormalized) network output
};

/// || phi(out) - phi(target) ||^2 where phi is L2 normalization.
LossValue loss_impersonation(const Tensor& net_out, const Tensor& target_emb);

/// Negated impersonation loss against the source embedding.
LossValue loss_dodging(const Tensor& net_out, const Tensor& source_emb);

LossValue attack_loss(AttackMode mode, const Tensor& net_out, const Tensor& ref_emb);

/// Random resize-then-pad as a pixel gather. `source[k]` is the input pixel
/// feeding output pixel k, or -1 for padding (value 0).
struct DiWarp {
  Shape shape;
  std::vector<std::ptrdiff_t> source;  // empty for the identity warp

  bool identity() const noexcept { return source.empty(); }
  Tensor apply(const Tensor& x) const;
  /// Gradient with respect to the warp input given the gradient at its output.
  Tensor pullback(const Tensor& grad) const;
};

/// With probability p a nearest-neighbour resize to a random size in
/// [min_scale * H, H] placed at a random offset; otherwise the identity.
DiWarp draw_di_warp(const Shape& shape, double p, Rng& rng, double min_scale = 0.8);

Tensor di_transform(const Tensor& x, double p, Rng& rng);

/// Mask with entries 0 (probability rate) or 1 / (1 - rate).
Tensor draw_dropout_mask(const Shape& shape, double rate, Rng& rng);

Tensor dfanet_dropout(const Tensor& activation, double drop_rate, Rng& rng);

/// Layers whose outputs receive feature dropout: convolutions, or the
/// hidden dense layers when the network has no convolution.
std::vector<std::size_t> dropout_layers(const SegmentedNetwork& net);

FeatureMasks draw_dropout_masks(const SegmentedNetwork& net, double drop_rate, Rng& rng);

struct AttackState {
  Tensor x_adv;
  GradientBank bank;
  Tensor momentum;
  std::size_t t = 1;  // iteration about to run
  Rng di_rng;
  Rng dropout_rng;

  double last_loss = 0.0;
  std::optional<double> last_plain_loss;  // loss of the un-injected model on the same input
};

AttackState init_attack_state(const Tensor& source, const AttackConfig& cfg);

/// One iteration: optional DI, injected forward, loss, single backward
/// (input gradient and new bank), optional momentum, sign step and clip to
/// the epsilon box around `source` intersected with [0, 255].
AttackState attack_step(const SegmentedNetwork& net, AttackState state, const AttackConfig& cfg,
                        const Tensor& source, const Tensor& ref_emb, bool probe_plain = false);

struct IterationRecord {
  std::size_t t = 0;
  double loss = 0.0;
  std::optional<double> plain_loss;
  std::size_t bank_bytes = 0;
};

struct RunOptions {
  bool probe_plain_loss = false;
  /// Iteration counts at which to keep a copy of x_adv (0 = the start point).
  std::vector<std::size_t> snapshot_at;
};

struct AttackResult {
  Tensor x_adv;
  std::vector<IterationRecord> log;
  std::map<std::size_t, Tensor> snapshots;
};

/// Runs cfg.n_max iterations from `source` against a fixed reference embedding.
AttackResult craft(const SegmentedNetwork& net, const Tensor& source, const Tensor& ref_emb,
                   const AttackConfig& cfg, const RunOptions& opts = {});

/// Full attack on a face pair. The reference embedding is computed once on the
/// clean network: F(target) for impersonation, F(source) for dodging.
/// Impersonation requires a negative pair.
AttackResult run_attack(const SegmentedNetwork& net, const IdentityDataset& ds, const FacePair& pair,
                        const AttackConfig& cfg, const RunOptions& opts = {});

/// Closed-form gradient-bank size for cfg.hooks on `net`.
std::size_t bank_bytes(const AttackConfig& cfg, const SegmentedNetwork& net);

/// CSV "t,loss,bank_bytes[,plain_loss]".
void write_trajectory_csv(const std::vector<IterationRecord>& log, const std::filesystem::path& path);

}  // namespace bpfa
