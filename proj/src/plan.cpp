#include "bpfa/plan.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "bpfa/error.hpp"
#include "bpfa/model_io.hpp"

namespace bpfa {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::Config, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) fail(ErrorKind::Config, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("bad value for '") + key + "': " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  return p.is_absolute() ? p : base / p;
}

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) fail(ErrorKind::Config, std::string("plan is missing '") + key + "'");
  T out{};
  read_if(j, key, out);
  return out;
}

}  // namespace

void merge_attack_config(AttackConfig& cfg, const json& j) {
  reject_unknown(j,
                 {"name", "hooks", "eta_relative", "eta_relative_per_surrogate", "epsilon", "beta", "n_max", "eta", "random_start", "seed",
                  "momentum", "diversity", "dropout", "mode"},
                 "attack config");
  read_if(j, "epsilon", cfg.epsilon);
  read_if(j, "beta", cfg.beta);
  read_if(j, "n_max", cfg.n_max);
  read_if(j, "eta", cfg.eta);
  read_if(j, "random_start", cfg.random_start);
  read_if(j, "seed", cfg.seed);
  if (j.contains("mode")) cfg.mode = parse_attack_mode(j.at("mode").get<std::string>());
  if (j.contains("momentum")) {
    const json& m = j.at("momentum");
    reject_unknown(m, {"enabled", "decay"}, "momentum");
    cfg.mi.enabled = true;
    read_if(m, "enabled", cfg.mi.enabled);
    read_if(m, "decay", cfg.mi.decay);
  }
  if (j.contains("diversity")) {
    const json& d = j.at("diversity");
    reject_unknown(d, {"enabled", "transform_prob", "min_scale"}, "diversity");
    cfg.di.enabled = true;
    read_if(d, "enabled", cfg.di.enabled);
    read_if(d, "transform_prob", cfg.di.transform_prob);
    read_if(d, "min_scale", cfg.di.min_scale);
  }
  if (j.contains("dropout")) {
    const json& d = j.at("dropout");
    reject_unknown(d, {"enabled", "drop_rate"}, "dropout");
    cfg.dfanet.enabled = true;
    read_if(d, "enabled", cfg.dfanet.enabled);
    read_if(d, "drop_rate", cfg.dfanet.drop_rate);
  }
}

NamedAttack attack_from_json(const json& j, AttackMode mode) {
  NamedAttack a;
  a.config.mode = mode;
  merge_attack_config(a.config, j);
  if (a.config.mode != mode) fail(ErrorKind::Config, "attack mode disagrees with the plan mode");
  a.name = required<std::string>(j, "name");
  if (a.name.empty()) fail(ErrorKind::Config, "attack name is empty");
  if (j.contains("hooks")) a.hooks = parse_hook_policy(j.at("hooks").get<std::string>());
  if (j.contains("eta_relative")) a.eta_relative = j.at("eta_relative").get<double>();
  if (j.contains("eta_relative_per_surrogate")) {
    const json& m = j.at("eta_relative_per_surrogate");
    if (!m.is_object()) fail(ErrorKind::Config, "eta_relative_per_surrogate must map surrogate names to numbers");
    for (const auto& [name, v] : m.items()) {
      if (!v.is_number()) fail(ErrorKind::Config, "eta_relative_per_surrogate." + name + " is not a number");
      a.eta_relative_per_surrogate[name] = v.get<double>();
    }
  }
  const bool any_relative = std::any_of(a.eta_relative_per_surrogate.begin(), a.eta_relative_per_surrogate.end(),
                                        [](const auto& kv) { return kv.second != 0.0; });
  if (a.hooks == HookPolicy::None &&
      (a.config.eta != 0.0 || (a.eta_relative && *a.eta_relative != 0.0) || any_relative)) {
    fail(ErrorKind::Config, "attack '" + a.name + "' sets eta without a hook policy");
  }
  return a;
}

nlohmann::ordered_json attack_to_json(const NamedAttack& a) {
  nlohmann::ordered_json j;
  j["name"] = a.name;
  j["epsilon"] = a.config.epsilon;
  j["beta"] = a.config.beta;
  j["n_max"] = a.config.n_max;
  j["hooks"] = std::string(to_string(a.hooks));
  if (a.eta_relative) {
    j["eta_relative"] = *a.eta_relative;
  } else {
    j["eta"] = a.config.eta;
  }
  if (!a.eta_relative_per_surrogate.empty()) {
    nlohmann::ordered_json m = nlohmann::ordered_json::object();
    for (const auto& [name, v] : a.eta_relative_per_surrogate) m[name] = v;
    j["eta_relative_per_surrogate"] = m;
  }
  j["random_start"] = a.config.random_start;
  j["momentum"] = {{"enabled", a.config.mi.enabled}, {"decay", a.config.mi.decay}};
  j["diversity"] = {{"enabled", a.config.di.enabled},
                    {"transform_prob", a.config.di.transform_prob},
                    {"min_scale", a.config.di.min_scale}};
  j["dropout"] = {{"enabled", a.config.dfanet.enabled}, {"drop_rate", a.config.dfanet.drop_rate}};
  return j;
}

ExperimentPlan parse_plan(const json& j, const std::filesystem::path& base_dir) {
  reject_unknown(j,
                 {"schema_version", "dataset", "pairs", "mode", "seed", "threads", "output_dir", "models",
                  "surrogates", "victims", "attacks"},
                 "plan");
  const int version = required<int>(j, "schema_version");
  if (version != kPlanSchemaVersion) {
    fail(ErrorKind::Config, "unsupported plan schema_version " + std::to_string(version));
  }
  ExperimentPlan plan;
  plan.dataset = resolve(base_dir, required<std::string>(j, "dataset"));
  plan.pairs = resolve(base_dir, required<std::string>(j, "pairs"));
  if (j.contains("mode")) plan.mode = parse_attack_mode(j.at("mode").get<std::string>());
  read_if(j, "seed", plan.seed);
  read_if(j, "threads", plan.threads);
  if (j.contains("output_dir")) plan.output_dir = j.at("output_dir").get<std::string>();
  plan.output_dir = resolve(base_dir, plan.output_dir);

  if (!j.contains("models") || !j.at("models").is_array()) fail(ErrorKind::Config, "plan needs a models array");
  for (const auto& m : j.at("models")) {
    reject_unknown(m, {"name", "path", "thresholds"}, "model");
    ModelRef ref;
    ref.name = required<std::string>(m, "name");
    ref.path = resolve(base_dir, required<std::string>(m, "path"));
    if (m.contains("thresholds")) {
      const json& t = m.at("thresholds");
      reject_unknown(t, {"impersonation", "dodging"}, "thresholds");
      if (t.contains("impersonation")) {
        ref.impersonation_threshold = resolve(base_dir, t.at("impersonation").get<std::string>());
      }
      if (t.contains("dodging")) ref.dodging_threshold = resolve(base_dir, t.at("dodging").get<std::string>());
    }
    plan.models.push_back(std::move(ref));
  }
  plan.surrogates = required<std::vector<std::string>>(j, "surrogates");
  plan.victims = required<std::vector<std::string>>(j, "victims");
  if (!j.contains("attacks") || !j.at("attacks").is_array()) fail(ErrorKind::Config, "plan needs an attacks array");
  for (const auto& a : j.at("attacks")) plan.attacks.push_back(attack_from_json(a, plan.mode));
  return plan;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open plan " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, "plan is not valid JSON: " + std::string(e.what()));
  }
  return parse_plan(j, std::filesystem::absolute(path).parent_path());
}

nlohmann::ordered_json plan_to_json(const ExperimentPlan& plan) {
  nlohmann::ordered_json j;
  j["schema_version"] = kPlanSchemaVersion;
  j["dataset"] = plan.dataset.string();
  j["pairs"] = plan.pairs.string();
  j["mode"] = std::string(to_string(plan.mode));
  j["seed"] = plan.seed;
  j["threads"] = plan.threads;
  j["output_dir"] = plan.output_dir.string();
  j["models"] = nlohmann::ordered_json::array();
  for (const auto& m : plan.models) {
    nlohmann::ordered_json mj{{"name", m.name}, {"path", m.path.string()}};
    nlohmann::ordered_json t = nlohmann::ordered_json::object();
    if (m.impersonation_threshold) t["impersonation"] = m.impersonation_threshold->string();
    if (m.dodging_threshold) t["dodging"] = m.dodging_threshold->string();
    mj["thresholds"] = t;
    j["models"].push_back(mj);
  }
  j["surrogates"] = plan.surrogates;
  j["victims"] = plan.victims;
  j["attacks"] = nlohmann::ordered_json::array();
  for (const auto& a : plan.attacks) j["attacks"].push_back(attack_to_json(a));
  return j;
}

void save_plan(const ExperimentPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
  out << plan_to_json(plan).dump(2) << '\n';
}

Experiment load_experiment(const ExperimentPlan& plan) {
  Experiment exp;
  exp.dataset = load_dataset(plan.dataset);
  exp.pairs = load_pairs(exp.dataset, plan.pairs);
  for (const auto& m : plan.models) {
    ZooModel z{m.name, load_model(m.path), std::nullopt, std::nullopt};
    if (m.impersonation_threshold) z.impersonation = load_threshold(*m.impersonation_threshold);
    if (m.dodging_threshold) z.dodging = load_threshold(*m.dodging_threshold);
    exp.zoo.push_back(std::move(z));
  }
  exp.surrogates = plan.surrogates;
  exp.victims = plan.victims;
  exp.attacks = plan.attacks;
  exp.mode = plan.mode;
  exp.seed = plan.seed;
  exp.threads = plan.threads;
  validate_experiment(exp);
  return exp;
}

}  // namespace bpfa
