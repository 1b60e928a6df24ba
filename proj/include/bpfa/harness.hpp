#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bpfa/attacks.hpp"
#include "bpfa/network.hpp"
#include "bpfa/synth_faces.hpp"
#include "bpfa/trainer.hpp"

namespace bpfa {

/// Fraction of distances strictly below the threshold (impersonation
/// success) or strictly above it (dodging success).
double asr_from_distances(const std::vector<double>& distances, double threshold, AttackMode mode);

/// Success rate of adversarial images against `targets` on the victim:
/// D(F(x_adv), F(x_t)) < threshold.
double asr_impersonation(const std::vector<Tensor>& adv_images, const std::vector<Tensor>& targets,
                         const SegmentedNetwork& victim, double threshold);

/// D(F(x_adv), F(x_s)) > threshold.
double asr_dodging(const std::vector<Tensor>& adv_images, const std::vector<Tensor>& sources,
                   const SegmentedNetwork& victim, double threshold);

struct ZooModel {
  std::string name;
  SegmentedNetwork net;
  std::optional<Threshold> impersonation;
  std::optional<Threshold> dodging;
};

enum class HookPolicy { None, Default, Conv, BatchNorm, Relu };

std::string_view to_string(HookPolicy policy);
HookPolicy parse_hook_policy(std::string_view text);
HookSet resolve_hooks(const SegmentedNetwork& net, HookPolicy policy);

/// An attack recipe independent of the surrogate. Hooks and, when
/// eta_relative is set, eta are resolved per surrogate:
/// eta = eta_relative * activation_scale(surrogate, hooks). An entry in
/// eta_relative_per_surrogate overrides eta_relative for that surrogate.
struct NamedAttack {
  std::string name;
  AttackConfig config;
  HookPolicy hooks = HookPolicy::None;
  std::optional<double> eta_relative;
  std::map<std::string, double> eta_relative_per_surrogate;
};

/// Root-mean-square value of the hooked feature maps over the training split.
double activation_scale(const SegmentedNetwork& net, const HookSet& hooks, const IdentityDataset& ds);

AttackConfig resolve_attack(const NamedAttack& attack, const SegmentedNetwork& surrogate,
                            const IdentityDataset& ds, const std::string& surrogate_name = {});

/// Relative eta values tried by select_eta and the eta sweeps.
std::vector<double> default_eta_grid();

struct Experiment {
  IdentityDataset dataset;
  std::vector<ZooModel> zoo;
  std::vector<FacePair> pairs;
  std::vector<std::string> surrogates;
  std::vector<std::string> victims;
  std::vector<NamedAttack> attacks;
  AttackMode mode = AttackMode::Impersonation;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = hardware concurrency

  const ZooModel& model(const std::string& name) const;
};

struct EvalRow {
  std::string surrogate;
  std::string victim;
  std::string attack;
  AttackMode mode = AttackMode::Impersonation;
  double asr = 0.0;
  std::size_t n_pairs = 0;
  double threshold = 0.0;
  bool is_whitebox = false;

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct EvalReport {
  std::vector<EvalRow> rows;
};

struct CraftedSet {
  std::string surrogate;
  std::string attack;
  AttackConfig config;  // as resolved for this surrogate
  std::vector<Tensor> images;
  std::vector<std::vector<IterationRecord>> logs;
};

struct CellDistances {
  std::string surrogate;
  std::string attack;
  std::string victim;
  double threshold = 0.0;
  std::vector<double> distances;
};

struct MatrixResult {
  EvalReport report;
  std::vector<CraftedSet> crafted;
  std::vector<CellDistances> cells;
};

/// Checks that every surrogate and victim exists and that every victim
/// carries a threshold for the experiment mode.
void validate_experiment(const Experiment& exp);

/// Per-pair attack seed, derived from the experiment seed and the cell name
/// so any cell can be re-run on its own.
std::uint64_t pair_seed(std::uint64_t base, const std::string& surrogate, const std::string& attack,
                        std::size_t pair_index);

/// Crafts adversarial examples for every pair on one surrogate.
CraftedSet craft_for_surrogate(const Experiment& exp, const std::string& surrogate,
                               const NamedAttack& attack, const RunOptions& opts = {},
                               std::vector<std::map<std::size_t, Tensor>>* snapshots = nullptr);

/// Victim distances for a set of images (parallel to exp.pairs).
std::vector<double> victim_distances(const Experiment& exp, const ZooModel& victim,
                                     const std::vector<Tensor>& images);

/// Rows ordered by surrogate, attack, victim in experiment order. Images are
/// crafted once per (surrogate, attack) and reused for every victim.
MatrixResult run_transfer_matrix(const Experiment& exp);

/// Mean ASR over cells with surrogate != victim for one attack.
double mean_blackbox_asr(const EvalReport& report, const std::string& attack);

struct EtaPoint {
  double eta_relative = 0.0;
  double blackbox_asr = 0.0;
  double whitebox_asr = 0.0;
};

/// Sweeps the relative eta of the first attack with a hook policy; negative
/// values inject adversarial feature perturbations.
std::vector<EtaPoint> sweep_eta(const Experiment& exp, const std::vector<double>& grid);

struct IterationPoint {
  std::size_t iterations = 0;
  std::string attack;
  double blackbox_asr = 0.0;
  double whitebox_asr = 0.0;
};

/// ASR against iteration count for every attack of the experiment, taken
/// from snapshots of a single run to max(grid).
std::vector<IterationPoint> sweep_iterations(const Experiment& exp, const std::vector<std::size_t>& grid);

struct EtaChoice {
  std::string surrogate;
  double eta_relative = 0.0;
  double blackbox_asr = 0.0;
  double whitebox_asr = 0.0;
  double baseline_blackbox_asr = 0.0;  // same attack with injection off
  double baseline_whitebox_asr = 0.0;
};

/// Per-surrogate choice of eta_relative for `attack` (which needs a hook
/// policy): among grid values whose white-box ASR is not below the
/// un-injected attack's, the one with the highest mean black-box ASR over
/// exp.victims. Ties go to the smaller value. Meant to run on pairs disjoint
/// from the evaluation pairs.
std::vector<EtaChoice> select_eta(const Experiment& exp, const NamedAttack& attack, const std::vector<double>& grid);

/// Copies the choices into attack.eta_relative_per_surrogate.
void apply_eta_choices(NamedAttack& attack, const std::vector<EtaChoice>& choices);

void write_eta_curve_csv(const std::vector<EtaPoint>& curve, const std::filesystem::path& path);
void write_iteration_curve_csv(const std::vector<IterationPoint>& curve, const std::filesystem::path& path);

}  // namespace bpfa
