// Command-line front end: dataset generation, training, calibration,
// single-model attacks, transfer matrices, sweeps and report rendering.

#include <algorithm>
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "bpfa/error.hpp"
#include "bpfa/feature_dump.hpp"
#include "bpfa/harness.hpp"
#include "bpfa/model_io.hpp"
#include "bpfa/plan.hpp"
#include "bpfa/report.hpp"

namespace fs = std::filesystem;
using namespace bpfa;

namespace {

struct AttackFlags {
  AttackConfig cfg;
  std::string mode = "impersonation";
  std::string hooks = "none";
  std::optional<double> eta_relative;
  std::string config_path;
};

void add_attack_flags(CLI::App* app, AttackFlags& f) {
  app->add_option("--epsilon", f.cfg.epsilon, "L-inf budget in pixels")->capture_default_str();
  app->add_option("--beta", f.cfg.beta, "input step size")->capture_default_str();
  app->add_option("--n-max", f.cfg.n_max, "iterations")->capture_default_str();
  app->add_option("--mode", f.mode, "impersonation or dodging")->capture_default_str();
  app->add_option("--eta", f.cfg.eta, "absolute feature step")->capture_default_str();
  app->add_option("--eta-relative", f.eta_relative, "feature step relative to the activation RMS");
  app->add_option("--hooks", f.hooks, "none, default, conv, batchnorm or relu")->capture_default_str();
  app->add_flag("--momentum", f.cfg.mi.enabled, "momentum iterative (MI)");
  app->add_option("--momentum-decay", f.cfg.mi.decay)->capture_default_str();
  app->add_flag("--diversity", f.cfg.di.enabled, "input diversity (DI)");
  app->add_option("--diversity-prob", f.cfg.di.transform_prob)->capture_default_str();
  app->add_option("--diversity-min-scale", f.cfg.di.min_scale)->capture_default_str();
  app->add_flag("--dropout", f.cfg.dfanet.enabled, "feature-map dropout (DFANet)");
  app->add_option("--drop-rate", f.cfg.dfanet.drop_rate)->capture_default_str();
  app->add_option("--random-start", f.cfg.random_start, "uniform start radius in pixels")->capture_default_str();
  app->add_option("--seed", f.cfg.seed)->capture_default_str();
  app->add_option("--config", f.config_path, "JSON attack config; its keys override flags");
}

NamedAttack resolve_flags(const AttackFlags& f) {
  NamedAttack a;
  a.name = "cli";
  a.config = f.cfg;
  a.config.mode = parse_attack_mode(f.mode);
  a.hooks = parse_hook_policy(f.hooks);
  a.eta_relative = f.eta_relative;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) fail(ErrorKind::Io, "cannot open " + f.config_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Config, "attack config is not valid JSON: " + std::string(e.what()));
    }
    merge_attack_config(a.config, j);
    if (j.contains("hooks")) a.hooks = parse_hook_policy(j.at("hooks").get<std::string>());
    if (j.contains("eta_relative")) a.eta_relative = j.at("eta_relative").get<double>();
    if (j.contains("name")) a.name = j.at("name").get<std::string>();
  }
  return a;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "bad grid value '" + item + "'");
    }
  }
  if (out.empty()) fail(ErrorKind::Config, "empty grid");
  return out;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bpfa: transfer attacks with feature-map perturbations on a toy face-embedding zoo"};
  app.require_subcommand(1);

  // gen-data
  DatasetParams dp;
  std::string data_out, pairs_out;
  std::size_t n_pairs = 200;
  std::string polarity = "negative";
  std::uint64_t pair_seed_value = 11;
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic identity dataset and a pair list");
  gen->add_option("--out", data_out, "dataset container")->required();
  gen->add_option("--identities", dp.num_identities)->capture_default_str();
  gen->add_option("--per-identity", dp.images_per_identity)->capture_default_str();
  gen->add_option("--height", dp.height)->capture_default_str();
  gen->add_option("--width", dp.width)->capture_default_str();
  gen->add_option("--seed", dp.seed)->capture_default_str();
  gen->add_option("--prototype-frequencies", dp.prototype_frequencies)->capture_default_str();
  gen->add_option("--prototype-amplitude", dp.prototype_amplitude)->capture_default_str();
  gen->add_option("--jitter-frequencies", dp.jitter_frequencies)->capture_default_str();
  gen->add_option("--jitter", dp.jitter)->capture_default_str();
  gen->add_option("--max-shift", dp.max_shift)->capture_default_str();
  gen->add_option("--noise", dp.noise)->capture_default_str();
  gen->add_option("--holdout", dp.holdout_per_identity)->capture_default_str();
  gen->add_option("--pairs-out", pairs_out, "pair list CSV");
  gen->add_option("--pairs", n_pairs)->capture_default_str();
  gen->add_option("--polarity", polarity)->capture_default_str();
  gen->add_option("--pair-seed", pair_seed_value)->capture_default_str();

  // train
  TrainConfig tc;
  std::string data_path, model_out, arch = "C", log_path;
  auto* tr = app.add_subcommand("train", "train one embedding network");
  tr->add_option("--data", data_path)->required();
  tr->add_option("--out", model_out)->required();
  tr->add_option("--arch", arch, "A, B, C or D")->capture_default_str();
  tr->add_option("--epochs", tc.epochs)->capture_default_str();
  tr->add_option("--lr", tc.learning_rate)->capture_default_str();
  tr->add_option("--batch", tc.batch_size)->capture_default_str();
  tr->add_option("--seed", tc.seed)->capture_default_str();
  tr->add_option("--embedding-dim", tc.embedding_dim)->capture_default_str();
  tr->add_option("--momentum", tc.momentum)->capture_default_str();
  tr->add_option("--weight-decay", tc.weight_decay)->capture_default_str();
  tr->add_flag("--adversarial", tc.adversarial_training, "augment every sample with a FIM dodging example");
  tr->add_option("--adv-epsilon", tc.adv_epsilon)->capture_default_str();
  tr->add_option("--adv-steps", tc.adv_steps)->capture_default_str();
  tr->add_option("--accuracy-floor", tc.accuracy_floor)->capture_default_str();
  tr->add_option("--log", log_path, "training log CSV");

  // calibrate
  std::string model_path, thr_out;
  double far = 0.001;
  auto* cal = app.add_subcommand("calibrate", "calibrate a verification threshold at a target FAR");
  cal->add_option("--data", data_path)->required();
  cal->add_option("--model", model_path)->required();
  cal->add_option("--far", far)->capture_default_str();
  cal->add_option("--out", thr_out)->required();

  // attack
  AttackFlags af;
  std::string pairs_path, adv_out, trajectory_dir, dump_out;
  std::optional<std::size_t> dump_layer;
  auto* at = app.add_subcommand("attack", "craft adversarial examples on one surrogate");
  at->add_option("--data", data_path)->required();
  at->add_option("--model", model_path)->required();
  at->add_option("--pairs", pairs_path)->required();
  at->add_option("--out", adv_out, "image container for the crafted examples")->required();
  at->add_option("--trajectory-dir", trajectory_dir, "per-pair loss trajectories");
  at->add_option("--dump-layer", dump_layer, "write the final feature perturbation of this layer (first pair)");
  at->add_option("--dump-out", dump_out, "CSV path for --dump-layer");
  add_attack_flags(at, af);

  // matrix / sweeps
  std::string plan_path, grid_text, out_path;
  bool dump_images = false;
  auto* mx = app.add_subcommand("matrix", "run the surrogate x attack x victim transfer matrix");
  mx->add_option("--plan", plan_path)->required();
  mx->add_flag("--dump-images", dump_images, "store crafted images per (surrogate, attack)");
  auto* se = app.add_subcommand("sweep-eta", "black-box ASR against the relative feature step");
  se->add_option("--plan", plan_path)->required();
  se->add_option("--grid", grid_text, "comma separated relative eta values")->required();
  se->add_option("--out", out_path)->required();
  auto* si = app.add_subcommand("sweep-iters", "ASR against the iteration budget");
  si->add_option("--plan", plan_path)->required();
  si->add_option("--grid", grid_text, "comma separated iteration counts")->required();
  si->add_option("--out", out_path)->required();

  std::string select_pairs, select_attack;
  auto* sl = app.add_subcommand("select-eta", "choose eta_relative per surrogate on validation pairs");
  sl->add_option("--plan", plan_path)->required();
  sl->add_option("--pairs", select_pairs, "validation pair list (defaults to the plan's pairs)");
  sl->add_option("--attack", select_attack, "attack to tune (first one with hooks when omitted)");
  sl->add_option("--grid", grid_text, "comma separated relative eta values");
  sl->add_option("--out", out_path, "plan file to write with the chosen values")->required();

  // report
  std::string report_in, format = "markdown";
  auto* rp = app.add_subcommand("report", "render a CSV report as csv, json or markdown");
  rp->add_option("--in", report_in)->required();
  rp->add_option("--format", format)->capture_default_str();
  rp->add_option("--out", out_path, "output file (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const IdentityDataset ds = generate(dp);
      ensure_parent(data_out);
      save_dataset(ds, data_out);
      std::printf("dataset: %zu images, within %.1f, between %.1f%s\n", ds.size(), ds.mean_within_distance,
                  ds.mean_between_distance, ds.degenerate ? " (degenerate)" : "");
      if (!pairs_out.empty()) {
        ensure_parent(pairs_out);
        save_pairs(sample_pairs(ds, n_pairs, parse_polarity(polarity), pair_seed_value), pairs_out);
      }
    } else if (tr->parsed()) {
      const IdentityDataset ds = load_dataset(data_path);
      tc.architecture = parse_architecture(arch);
      const TrainResult r = tc.adversarial_training ? adversarial_train(ds, tc) : train(ds, tc);
      nlohmann::json meta{{"architecture", arch},
                          {"adversarial", tc.adversarial_training},
                          {"seed", tc.seed},
                          {"accuracy", r.verification.accuracy}};
      ensure_parent(model_out);
      save_model(r.net, model_out, meta.dump());
      if (!log_path.empty()) write_train_log_csv(r.log, log_path);
      std::printf("%s: held-out accuracy %.4f, triplet accuracy %.4f\n", arch.c_str(), r.verification.accuracy,
                  r.verification.triplet_accuracy);
    } else if (cal->parsed()) {
      const IdentityDataset ds = load_dataset(data_path);
      const Threshold t = calibrate_threshold(load_model(model_path), ds, far);
      ensure_parent(thr_out);
      save_threshold(t, thr_out);
      std::printf("threshold %.17g at FAR %.4g (achieved %.6f over %zu negatives)\n", t.value, t.far_target,
                  t.achieved_far, t.n_negatives);
    } else if (at->parsed()) {
      const IdentityDataset ds = load_dataset(data_path);
      const SegmentedNetwork net = load_model(model_path);
      const auto pairs = load_pairs(ds, pairs_path);
      const NamedAttack attack = resolve_flags(af);
      const AttackConfig base = resolve_attack(attack, net, ds);
      ImageContainer out;
      out.header_json = nlohmann::json{{"model", model_path}, {"mode", std::string(to_string(base.mode))},
                                       {"epsilon", base.epsilon}, {"eta", base.eta}}
                            .dump();
      if (!trajectory_dir.empty()) fs::create_directories(trajectory_dir);
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        AttackConfig cfg = base;
        cfg.seed = derive_seed(base.seed, i);
        if (dump_layer && i == 0) {
          AttackState s = init_attack_state(ds.images[pairs[i].attacker_index], cfg);
          const Tensor src = ds.images[pairs[i].attacker_index];
          const Tensor ref = forward_plain(
              net, cfg.mode == AttackMode::Impersonation ? ds.images[pairs[i].target_index] : src);
          for (std::size_t t = 0; t < cfg.n_max; ++t) s = attack_step(net, std::move(s), cfg, src, ref);
          if (dump_out.empty()) fail(ErrorKind::Config, "--dump-layer needs --dump-out");
          dump_feature_perturbation(s.bank, *dump_layer, cfg.eta, dump_out);
        }
        const AttackResult r = run_attack(net, ds, pairs[i], cfg);
        if (!trajectory_dir.empty()) {
          write_trajectory_csv(r.log, fs::path(trajectory_dir) / ("pair_" + std::to_string(i) + ".csv"));
        }
        out.images.push_back(r.x_adv);
        out.labels.push_back(pairs[i].attacker_id);
      }
      ensure_parent(adv_out);
      save_images(out, adv_out);
      std::printf("crafted %zu examples (eta %.6g, bank %zu bytes)\n", out.images.size(), base.eta,
                  bank_bytes(base, net));
    } else if (mx->parsed()) {
      const ExperimentPlan plan = load_plan(plan_path);
      const Experiment exp = load_experiment(plan);
      const MatrixResult m = run_transfer_matrix(exp);
      fs::create_directories(plan.output_dir);
      write_report(m.report, ReportFormat::Csv, plan.output_dir / "report.csv");
      write_report(m.report, ReportFormat::Json, plan.output_dir / "report.json");
      write_report(m.report, ReportFormat::Markdown, plan.output_dir / "report.md");
      if (dump_images) {
        for (const auto& set : m.crafted) {
          ImageContainer c;
          c.header_json = nlohmann::json{{"surrogate", set.surrogate}, {"attack", set.attack}}.dump();
          c.images = set.images;
          for (const auto& p : exp.pairs) c.labels.push_back(p.attacker_id);
          save_images(c, plan.output_dir / ("adv_" + set.surrogate + "_" + set.attack + ".bin"));
        }
      }
      std::cout << render_markdown(m.report);
    } else if (se->parsed()) {
      const Experiment exp = load_experiment(load_plan(plan_path));
      const auto curve = sweep_eta(exp, parse_grid(grid_text));
      ensure_parent(out_path);
      write_eta_curve_csv(curve, out_path);
    } else if (si->parsed()) {
      const Experiment exp = load_experiment(load_plan(plan_path));
      std::vector<std::size_t> grid;
      for (double v : parse_grid(grid_text)) {
        if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
          fail(ErrorKind::Config, "iteration counts must be non-negative integers");
        }
        grid.push_back(static_cast<std::size_t>(v));
      }
      const auto curve = sweep_iterations(exp, grid);
      ensure_parent(out_path);
      write_iteration_curve_csv(curve, out_path);
    } else if (sl->parsed()) {
      ExperimentPlan plan = load_plan(plan_path);
      Experiment exp = load_experiment(plan);
      if (!select_pairs.empty()) exp.pairs = load_pairs(exp.dataset, select_pairs);
      auto it = std::find_if(plan.attacks.begin(), plan.attacks.end(), [&](const NamedAttack& a) {
        return select_attack.empty() ? a.hooks != HookPolicy::None : a.name == select_attack;
      });
      if (it == plan.attacks.end()) fail(ErrorKind::Config, "no attack to tune");
      const auto choices =
          select_eta(exp, *it, grid_text.empty() ? default_eta_grid() : parse_grid(grid_text));
      apply_eta_choices(*it, choices);
      for (const auto& c : choices) {
        std::printf("%s: eta_relative %g, black-box %.3f (baseline %.3f), white-box %.3f (baseline %.3f)\n",
                    c.surrogate.c_str(), c.eta_relative, c.blackbox_asr, c.baseline_blackbox_asr, c.whitebox_asr,
                    c.baseline_whitebox_asr);
      }
      ensure_parent(out_path);
      save_plan(plan, out_path);
    } else if (rp->parsed()) {
      const EvalReport report = load_report_csv(report_in);
      const ReportFormat f = parse_report_format(format);
      if (out_path.empty()) {
        std::cout << render_report(report, f);
      } else {
        write_report(report, f, out_path);
      }
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error[%s]: %s\n", std::string(to_string(e.kind())).c_str(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[internal]: %s\n", e.what());
    return 1;
  }
  return 0;
}
