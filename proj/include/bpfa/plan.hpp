#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpfa/harness.hpp"

namespace bpfa {

inline constexpr int kPlanSchemaVersion = 1;

struct ModelRef {
  std::string name;
  std::filesystem::path path;
  std::optional<std::filesystem::path> impersonation_threshold;
  std::optional<std::filesystem::path> dodging_threshold;
};

/// Experiment plan as stored on disk. Relative paths resolve against the
/// directory holding the plan file.
struct ExperimentPlan {
  std::filesystem::path dataset;
  std::filesystem::path pairs;
  std::vector<ModelRef> models;
  std::vector<std::string> surrogates;
  std::vector<std::string> victims;
  std::vector<NamedAttack> attacks;
  AttackMode mode = AttackMode::Impersonation;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::filesystem::path output_dir = "out";
};

/// Attack fields: name, epsilon, beta, n_max, eta, eta_relative, hooks,
/// eta_relative_per_surrogate{name: value}, random_start, momentum{enabled,decay}, diversity{enabled,transform_prob,min_scale},
/// dropout{enabled,drop_rate}. Missing keys keep their defaults; unknown
/// keys are rejected.
NamedAttack attack_from_json(const nlohmann::json& j, AttackMode mode);
nlohmann::ordered_json attack_to_json(const NamedAttack& attack);

/// Applies the keys present in `j` on top of `cfg` (same keys as above,
/// minus name and hooks).
void merge_attack_config(AttackConfig& cfg, const nlohmann::json& j);

ExperimentPlan parse_plan(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentPlan load_plan(const std::filesystem::path& path);
nlohmann::ordered_json plan_to_json(const ExperimentPlan& plan);
void save_plan(const ExperimentPlan& plan, const std::filesystem::path& path);

/// Loads every artifact the plan references and validates the result.
Experiment load_experiment(const ExperimentPlan& plan);

}  // namespace bpfa
