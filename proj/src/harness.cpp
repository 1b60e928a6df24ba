#include "bpfa/harness.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <fstream>
#include <limits>

#include "bpfa/error.hpp"
#include "bpfa/metrics.hpp"
#include "bpfa/parallel.hpp"

namespace bpfa {

double asr_from_distances(const std::vector<double>& distances, double threshold, AttackMode mode) {
  if (distances.empty()) fail(ErrorKind::Precondition, "ASR over an empty pair set");
  std::size_t hits = 0;
  for (double d : distances) {
    hits += mode == AttackMode::Impersonation ? d < threshold : d > threshold;
  }
  return static_cast<double>(hits) / static_cast<double>(distances.size());
}

namespace {

std::vector<double> paired_distances(const std::vector<Tensor>& adv, const std::vector<Tensor>& refs,
                                     const SegmentedNetwork& victim) {
  if (adv.size() != refs.size()) fail(ErrorKind::Precondition, "adversarial and reference sets differ in size");
  std::vector<double> d(adv.size());
  for (std::size_t i = 0; i < adv.size(); ++i) {
    d[i] = normalized_sq_distance(forward_plain(victim, adv[i]), forward_plain(victim, refs[i]));
  }
  return d;
}

}  // namespace

double asr_impersonation(const std::vector<Tensor>& adv_images, const std::vector<Tensor>& targets,
                         const SegmentedNetwork& victim, double threshold) {
  return asr_from_distances(paired_distances(adv_images, targets, victim), threshold,
                            AttackMode::Impersonation);
}

double asr_dodging(const std::vector<Tensor>& adv_images, const std::vector<Tensor>& sources,
                   const SegmentedNetwork& victim, double threshold) {
  return asr_from_distances(paired_distances(adv_images, sources, victim), threshold, AttackMode::Dodging);
}

std::string_view to_string(HookPolicy policy) {
  switch (policy) {
    case HookPolicy::None: return "none";
    case HookPolicy::Default: return "default";
    case HookPolicy::Conv: return "conv";
    case HookPolicy::BatchNorm: return "batchnorm";
    case HookPolicy::Relu: return "relu";
  }
  return "none";
}

HookPolicy parse_hook_policy(std::string_view text) {
  for (auto p : {HookPolicy::None, HookPolicy::Default, HookPolicy::Conv, HookPolicy::BatchNorm,
                 HookPolicy::Relu}) {
    if (to_string(p) == text) return p;
  }
  fail(ErrorKind::Config, "unknown hook policy '" + std::string(text) + "'");
}

HookSet resolve_hooks(const SegmentedNetwork& net, HookPolicy policy) {
  switch (policy) {
    case HookPolicy::None: return {};
    case HookPolicy::Default: return default_hooks(net);
    case HookPolicy::Conv: return hooks_for_kind(net, LayerKind::Conv2d);
    case HookPolicy::BatchNorm: return hooks_for_kind(net, LayerKind::BatchNorm);
    case HookPolicy::Relu: return hooks_for_kind(net, LayerKind::Relu);
  }
  return {};
}

double activation_scale(const SegmentedNetwork& net, const HookSet& hooks, const IdentityDataset& ds) {
  if (hooks.empty()) fail(ErrorKind::Config, "activation scale needs at least one hook");
  const auto train = ds.train_indices();
  const std::size_t stride = std::max<std::size_t>(1, train.size() / 64);
  double sumsq = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < train.size(); k += stride) {
    const ForwardTrace trace = forward_injected(net, ds.images[train[k]], hooks, GradientBank{}, 0.0);
    for (const auto& [index, a] : trace.activations) {
      for (double v : a.data()) sumsq += v * v;
      count += a.size();
    }
  }
  return std::sqrt(sumsq / static_cast<double>(count));
}

AttackConfig resolve_attack(const NamedAttack& attack, const SegmentedNetwork& surrogate,
                            const IdentityDataset& ds, const std::string& surrogate_name) {
  AttackConfig cfg = attack.config;
  cfg.hooks = resolve_hooks(surrogate, attack.hooks);
  std::optional<double> relative = attack.eta_relative;
  if (const auto it = attack.eta_relative_per_surrogate.find(surrogate_name);
      it != attack.eta_relative_per_surrogate.end()) {
    relative = it->second;
  }
  if (relative) {
    cfg.eta = *relative == 0.0 || cfg.hooks.empty() ? 0.0 : *relative * activation_scale(surrogate, cfg.hooks, ds);
  }
  cfg.validate();
  return cfg;
}

const ZooModel& Experiment::model(const std::string& name) const {
  for (const auto& m : zoo) {
    if (m.name == name) return m;
  }
  fail(ErrorKind::Config, "model '" + name + "' is not in the zoo");
}

void validate_experiment(const Experiment& exp) {
  if (exp.pairs.empty()) fail(ErrorKind::Config, "experiment has no pairs");
  if (exp.surrogates.empty() || exp.victims.empty()) fail(ErrorKind::Config, "experiment needs surrogates and victims");
  if (exp.attacks.empty()) fail(ErrorKind::Config, "experiment has no attacks");
  for (const auto& s : exp.surrogates) exp.model(s);
  for (const auto& v : exp.victims) {
    const auto& m = exp.model(v);
    const auto& t = exp.mode == AttackMode::Impersonation ? m.impersonation : m.dodging;
    if (!t) {
      fail(ErrorKind::Config, "victim '" + v + "' has no " + std::string(to_string(exp.mode)) + " threshold");
    }
  }
  for (const auto& p : exp.pairs) {
    if (p.attacker_index >= exp.dataset.size() || p.target_index >= exp.dataset.size()) {
      fail(ErrorKind::Config, "pair references an image outside the dataset");
    }
    if (exp.mode == AttackMode::Impersonation && p.polarity != Polarity::Negative) {
      fail(ErrorKind::Config, "impersonation experiments need negative pairs");
    }
  }
  for (const auto& a : exp.attacks) {
    if (a.config.mode != exp.mode) {
      fail(ErrorKind::Config, "attack '" + a.name + "' mode disagrees with the experiment mode");
    }
  }
}

std::uint64_t pair_seed(std::uint64_t base, const std::string& surrogate, const std::string& attack,
                        std::size_t pair_index) {
  return derive_seed(derive_seed(base, surrogate + "/" + attack), pair_index);
}

CraftedSet craft_for_surrogate(const Experiment& exp, const std::string& surrogate,
                               const NamedAttack& attack, const RunOptions& opts,
                               std::vector<std::map<std::size_t, Tensor>>* snapshots) {
  const ZooModel& model = exp.model(surrogate);
  CraftedSet set;
  set.surrogate = surrogate;
  set.attack = attack.name;
  set.config = resolve_attack(attack, model.net, exp.dataset, surrogate);
  set.images.resize(exp.pairs.size());
  set.logs.resize(exp.pairs.size());
  if (snapshots) snapshots->assign(exp.pairs.size(), {});
  parallel_for(exp.pairs.size(), exp.threads, [&](std::size_t i) {
    AttackConfig cfg = set.config;
    cfg.seed = pair_seed(exp.seed, surrogate, attack.name, i);
    AttackResult r = run_attack(model.net, exp.dataset, exp.pairs[i], cfg, opts);
    set.images[i] = std::move(r.x_adv);
    set.logs[i] = std::move(r.log);
    if (snapshots) (*snapshots)[i] = std::move(r.snapshots);
  });
  return set;
}

std::vector<double> victim_distances(const Experiment& exp, const ZooModel& victim,
                                     const std::vector<Tensor>& images) {
  if (images.size() != exp.pairs.size()) fail(ErrorKind::Precondition, "one image per pair required");
  std::vector<double> d(images.size());
  parallel_for(images.size(), exp.threads, [&](std::size_t i) {
    const auto& p = exp.pairs[i];
    const Tensor& ref = exp.mode == AttackMode::Impersonation ? exp.dataset.images[p.target_index]
                                                              : exp.dataset.images[p.attacker_index];
    d[i] = normalized_sq_distance(forward_plain(victim.net, images[i]), forward_plain(victim.net, ref));
  });
  return d;
}

namespace {

double victim_threshold(const Experiment& exp, const ZooModel& victim) {
  return (exp.mode == AttackMode::Impersonation ? *victim.impersonation : *victim.dodging).value;
}

EvalRow evaluate_cell(const Experiment& exp, const std::string& surrogate, const std::string& attack,
                      const ZooModel& victim, const std::vector<Tensor>& images, CellDistances* cell) {
  const double t = victim_threshold(exp, victim);
  std::vector<double> d = victim_distances(exp, victim, images);
  EvalRow row{surrogate, victim.name, attack, exp.mode, asr_from_distances(d, t, exp.mode),
              images.size(), t, surrogate == victim.name};
  if (cell) *cell = CellDistances{surrogate, attack, victim.name, t, std::move(d)};
  return row;
}

double mean_or_nan(double sum, std::size_t n) {
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

MatrixResult run_transfer_matrix(const Experiment& exp) {
  validate_experiment(exp);
  MatrixResult result;
  for (const auto& s : exp.surrogates) {
    for (const auto& attack : exp.attacks) {
      CraftedSet set = craft_for_surrogate(exp, s, attack);
      for (const auto& v : exp.victims) {
        CellDistances cell;
        result.report.rows.push_back(evaluate_cell(exp, s, attack.name, exp.model(v), set.images, &cell));
        result.cells.push_back(std::move(cell));
      }
      result.crafted.push_back(std::move(set));
    }
  }
  return result;
}

double mean_blackbox_asr(const EvalReport& report, const std::string& attack) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : report.rows) {
    if (r.attack == attack && !r.is_whitebox) {
      sum += r.asr;
      ++n;
    }
  }
  return mean_or_nan(sum, n);
}

std::vector<EtaPoint> sweep_eta(const Experiment& exp, const std::vector<double>& grid) {
  validate_experiment(exp);
  const auto it = std::find_if(exp.attacks.begin(), exp.attacks.end(),
                               [](const NamedAttack& a) { return a.hooks != HookPolicy::None; });
  if (it == exp.attacks.end()) fail(ErrorKind::Config, "eta sweep needs an attack with a hook policy");
  const NamedAttack& base = *it;
  std::vector<EtaPoint> curve;
  for (double eta : grid) {
    NamedAttack attack = base;
    attack.eta_relative = eta;
    attack.eta_relative_per_surrogate.clear();
    double bb = 0.0, wb = 0.0;
    std::size_t nbb = 0, nwb = 0;
    for (const auto& s : exp.surrogates) {
      const CraftedSet set = craft_for_surrogate(exp, s, attack);
      for (const auto& v : exp.victims) {
        const EvalRow row = evaluate_cell(exp, s, attack.name, exp.model(v), set.images, nullptr);
        (row.is_whitebox ? wb : bb) += row.asr;
        ++(row.is_whitebox ? nwb : nbb);
      }
    }
    curve.push_back({eta, mean_or_nan(bb, nbb), mean_or_nan(wb, nwb)});
  }
  return curve;
}

std::vector<double> default_eta_grid() { return {0.01, 0.02, 0.04, 0.08, 0.16}; }

std::vector<EtaChoice> select_eta(const Experiment& exp, const NamedAttack& attack, const std::vector<double>& grid) {
  validate_experiment(exp);
  if (attack.hooks == HookPolicy::None) fail(ErrorKind::Config, "eta selection needs an attack with a hook policy");
  if (grid.empty()) fail(ErrorKind::Config, "eta selection needs a non-empty grid");
  // Mean black-box and white-box ASR of one surrogate at one eta.
  auto score = [&](const std::string& s, double eta) {
    NamedAttack a = attack;
    a.eta_relative = eta;
    a.eta_relative_per_surrogate.clear();
    const CraftedSet set = craft_for_surrogate(exp, s, a);
    double bb = 0.0, wb = 0.0;
    std::size_t nbb = 0, nwb = 0;
    for (const auto& v : exp.victims) {
      const EvalRow row = evaluate_cell(exp, s, a.name, exp.model(v), set.images, nullptr);
      (row.is_whitebox ? wb : bb) += row.asr;
      ++(row.is_whitebox ? nwb : nbb);
    }
    return std::pair{mean_or_nan(bb, nbb), mean_or_nan(wb, nwb)};
  };
  std::vector<EtaChoice> out;
  for (const auto& s : exp.surrogates) {
    EtaChoice c;
    c.surrogate = s;
    std::tie(c.baseline_blackbox_asr, c.baseline_whitebox_asr) = score(s, 0.0);
    bool have = false;
    EtaChoice fallback = c;
    for (double eta : grid) {
      const auto [bb, wb] = score(s, eta);
      const bool keeps_whitebox = std::isnan(wb) || std::isnan(c.baseline_whitebox_asr) || wb >= c.baseline_whitebox_asr;
      if (keeps_whitebox && (!have || bb > c.blackbox_asr)) {
        c.eta_relative = eta;
        c.blackbox_asr = bb;
        c.whitebox_asr = wb;
        have = true;
      }
      // Without any value that keeps the white-box rate, take the one that loses least.
      if (fallback.eta_relative == 0.0 || wb > fallback.whitebox_asr) {
        fallback.eta_relative = eta;
        fallback.blackbox_asr = bb;
        fallback.whitebox_asr = wb;
      }
    }
    out.push_back(have ? c : fallback);
  }
  return out;
}

void apply_eta_choices(NamedAttack& attack, const std::vector<EtaChoice>& choices) {
  for (const auto& c : choices) attack.eta_relative_per_surrogate[c.surrogate] = c.eta_relative;
}

std::vector<IterationPoint> sweep_iterations(const Experiment& exp, const std::vector<std::size_t>& grid) {
  validate_experiment(exp);
  if (grid.empty()) return {};
  const std::size_t n_max = std::max<std::size_t>(1, *std::max_element(grid.begin(), grid.end()));
  std::vector<IterationPoint> curve;
  for (const auto& base : exp.attacks) {
    NamedAttack attack = base;
    attack.config.n_max = n_max;
    RunOptions opts;
    opts.snapshot_at = grid;
    std::vector<std::vector<double>> bb(grid.size()), wb(grid.size());
    for (const auto& s : exp.surrogates) {
      std::vector<std::map<std::size_t, Tensor>> snaps;
      craft_for_surrogate(exp, s, attack, opts, &snaps);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        std::vector<Tensor> images;
        for (auto& snap : snaps) images.push_back(snap.at(grid[g]));
        for (const auto& v : exp.victims) {
          const EvalRow row = evaluate_cell(exp, s, attack.name, exp.model(v), images, nullptr);
          (row.is_whitebox ? wb : bb)[g].push_back(row.asr);
        }
      }
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
      double sbb = 0.0, swb = 0.0;
      for (double a : bb[g]) sbb += a;
      for (double a : wb[g]) swb += a;
      curve.push_back({grid[g], base.name, mean_or_nan(sbb, bb[g].size()), mean_or_nan(swb, wb[g].size())});
    }
  }
  return curve;
}

void write_eta_curve_csv(const std::vector<EtaPoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
  out.precision(17);
  out << "eta_relative,blackbox_asr,whitebox_asr\n";
  for (const auto& p : curve) out << p.eta_relative << ',' << p.blackbox_asr << ',' << p.whitebox_asr << '\n';
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

void write_iteration_curve_csv(const std::vector<IterationPoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
  out.precision(17);
  out << "iterations,attack,blackbox_asr,whitebox_asr\n";
  for (const auto& p : curve) {
    out << p.iterations << ',' << p.attack << ',' << p.blackbox_asr << ',' << p.whitebox_asr << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace bpfa
