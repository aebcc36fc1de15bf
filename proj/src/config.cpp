#include "metafl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace metafl {

namespace {

using Json = nlohmann::ordered_json;

void reject_unknown(const Json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
  require(obj.is_object(), Errc::config, "config: section '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    require(allowed.count(key) > 0, Errc::config,
            "config: unknown key '" + key + "' in section '" + where + "'");
  }
}

template <typename T>
void read_field(const Json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

AttackType parse_attack(const Json& j, const std::string& where) {
  reject_unknown(j, {"method", "objective", "config", "weight"}, where);
  require(j.contains("method"), Errc::config, "config: " + where + " needs a method");
  std::map<std::string, double> cfg;
  if (j.contains("config")) {
    require(j.at("config").is_object(), Errc::config,
            "config: " + where + ".config must be an object");
    for (const auto& [key, value] : j.at("config").items())
      cfg[key] = value.get<double>();
  }
  return AttackType::make(attack_method_from_name(j.at("method").get<std::string>()),
                          std::move(cfg));
}

Json attack_to_json(const AttackType& t, std::optional<double> weight) {
  Json j;
  j["method"] = attack_method_name(t.method);
  if (weight) j["weight"] = *weight;
  if (!t.config.empty()) {
    Json c;
    for (const auto& [k, v] : t.config) c[k] = v;
    j["config"] = std::move(c);
  }
  return j;
}

}  // namespace

void ExperimentConfig::validate() const {
  game.validate();
  train.validate();
  require(adapt.adapt_rounds >= 1, Errc::config, "config: adapt.adapt_rounds must be positive");
  if (adapt.attack) adapt.attack->validate();
  require(!output.dir.empty(), Errc::config, "config: output.dir must not be empty");
}

ExperimentConfig parse_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const std::exception& e) {
    fail(Errc::config, std::string("config: JSON parse error: ") + e.what());
  }
  reject_unknown(root, {"seed", "fl", "game", "attack_domain", "defense", "train", "adapt",
                        "output"},
                 "<root>");

  ExperimentConfig c;
  read_field(root, "seed", c.seed);

  if (root.contains("fl")) {
    const Json& j = root.at("fl");
    reject_unknown(j,
                   {"n_clients", "m1", "m2", "subsample_rate", "local_lr", "local_iters",
                    "batch_size", "rounds", "non_iid_q"},
                   "fl");
    FLConfig& f = c.game.fl;
    read_field(j, "n_clients", f.n_clients);
    read_field(j, "m1", f.m1);
    read_field(j, "m2", f.m2);
    read_field(j, "subsample_rate", f.subsample_rate);
    read_field(j, "local_lr", f.local_lr);
    read_field(j, "local_iters", f.local_iters);
    read_field(j, "batch_size", f.batch_size);
    read_field(j, "rounds", f.rounds);
    read_field(j, "non_iid_q", f.non_iid_q);
  }

  if (root.contains("game")) {
    const Json& j = root.at("game");
    reject_unknown(j,
                   {"gamma", "horizon", "server_lr", "n_classes", "data_dim",
                    "class_separation", "train_examples", "eval_examples", "model", "hidden1",
                    "hidden2", "root_examples", "q_root", "trigger_len", "target_label",
                    "policy_hidden", "backdoor_penalty", "blackbox", "shared_eval"},
                   "game");
    BSMGConfig& g = c.game;
    read_field(j, "gamma", g.gamma);
    read_field(j, "horizon", g.horizon);
    read_field(j, "server_lr", g.server_lr);
    read_field(j, "n_classes", g.n_classes);
    read_field(j, "data_dim", g.data_dim);
    read_field(j, "class_separation", g.class_separation);
    read_field(j, "train_examples", g.train_examples);
    read_field(j, "eval_examples", g.eval_examples);
    if (j.contains("model")) {
      const std::string m = j.at("model").get<std::string>();
      require(m == "softmax" || m == "mlp", Errc::config, "config: game.model must be softmax|mlp");
      g.model = m == "softmax" ? ModelKind::softmax : ModelKind::mlp;
    }
    read_field(j, "hidden1", g.hidden1);
    read_field(j, "hidden2", g.hidden2);
    read_field(j, "root_examples", g.root_examples);
    read_field(j, "q_root", g.q_root);
    read_field(j, "trigger_len", g.trigger_len);
    read_field(j, "target_label", g.target_label);
    read_field(j, "policy_hidden", g.policy_hidden);
    read_field(j, "backdoor_penalty", g.backdoor_penalty);
    read_field(j, "blackbox", g.blackbox);
    read_field(j, "shared_eval", g.shared_eval);
  }

  require(root.contains("attack_domain") && root.at("attack_domain").is_array() &&
              !root.at("attack_domain").empty(),
          Errc::config, "config: attack_domain must be a nonempty array");
  double total = 0.0;
  for (std::size_t i = 0; i < root.at("attack_domain").size(); ++i) {
    const Json& j = root.at("attack_domain").at(i);
    AttackType t = parse_attack(j, "attack_domain[" + std::to_string(i) + "]");
    double w = j.contains("weight") ? j.at("weight").get<double>() : 1.0;
    require(w > 0.0, Errc::config, "config: attack weights must be positive");
    c.game.type_prior.push_back({std::move(t), w});
    total += w;
  }
  // Prior weights normalize; skip the division when they already sum to 1 so
  // parse -> serialize -> parse is an exact fixed point.
  if (std::abs(total - 1.0) > 1e-9)
    for (auto& [t, w] : c.game.type_prior) w /= total;

  if (root.contains("defense")) {
    const Json& j = root.at("defense");
    reject_unknown(j, {"posttrain_mode", "psi_min", "psi_max"}, "defense");
    if (j.contains("posttrain_mode")) {
      const std::string m = j.at("posttrain_mode").get<std::string>();
      require(m == "clip" || m == "prune", Errc::config,
              "config: defense.posttrain_mode must be clip|prune");
      c.game.posttrain_mode = m == "clip" ? PostTrainMode::clip : PostTrainMode::prune;
    }
    read_field(j, "psi_min", c.game.psi_min);
    read_field(j, "psi_max", c.game.psi_max);
  }

  if (root.contains("train")) {
    const Json& j = root.at("train");
    reject_unknown(j,
                   {"variant", "n_outer", "n_inner", "k_types", "kappa_d", "kappa_a", "eta",
                    "adapt_steps", "batch_size", "pg_mode", "param_box", "grad_clip"},
                   "train");
    MetaTrainConfig& t = c.train;
    if (j.contains("variant")) t.variant = meta_variant_from_name(j.at("variant").get<std::string>());
    read_field(j, "n_outer", t.n_outer);
    read_field(j, "n_inner", t.n_inner);
    read_field(j, "k_types", t.k_types);
    read_field(j, "kappa_d", t.kappa_d);
    read_field(j, "kappa_a", t.kappa_a);
    read_field(j, "eta", t.eta);
    read_field(j, "adapt_steps", t.adapt_steps);
    read_field(j, "batch_size", t.batch_size);
    read_field(j, "param_box", t.param_box);
    read_field(j, "grad_clip", t.grad_clip);
    if (j.contains("pg_mode")) {
      const std::string m = j.at("pg_mode").get<std::string>();
      require(m == "vanilla" || m == "rtg", Errc::config,
              "config: train.pg_mode must be vanilla|rtg");
      t.pg_mode = m == "vanilla" ? PgMode::vanilla : PgMode::reward_to_go_baseline;
    }
  }
  c.train.seed = c.seed;

  if (root.contains("adapt")) {
    const Json& j = root.at("adapt");
    reject_unknown(j, {"attack", "adapt_rounds", "l", "eta", "batch_size"}, "adapt");
    if (j.contains("attack")) c.adapt.attack = parse_attack(j.at("attack"), "adapt.attack");
    read_field(j, "adapt_rounds", c.adapt.adapt_rounds);
    read_field(j, "l", c.adapt.l);
    read_field(j, "eta", c.adapt.eta);
    read_field(j, "batch_size", c.adapt.batch_size);
  }

  if (root.contains("output")) {
    const Json& j = root.at("output");
    reject_unknown(j, {"dir"}, "output");
    read_field(j, "dir", c.output.dir);
  }

  c.game.fl.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  Json root;
  root["seed"] = c.seed;

  {
    Json j;
    const FLConfig& f = c.game.fl;
    j["n_clients"] = f.n_clients;
    j["m1"] = f.m1;
    j["m2"] = f.m2;
    j["subsample_rate"] = f.subsample_rate;
    j["local_lr"] = f.local_lr;
    j["local_iters"] = f.local_iters;
    j["batch_size"] = f.batch_size;
    j["rounds"] = f.rounds;
    j["non_iid_q"] = f.non_iid_q;
    root["fl"] = std::move(j);
  }
  {
    Json j;
    const BSMGConfig& g = c.game;
    j["gamma"] = g.gamma;
    j["horizon"] = g.horizon;
    j["server_lr"] = g.server_lr;
    j["n_classes"] = g.n_classes;
    j["data_dim"] = g.data_dim;
    j["class_separation"] = g.class_separation;
    j["train_examples"] = g.train_examples;
    j["eval_examples"] = g.eval_examples;
    j["model"] = g.model == ModelKind::softmax ? "softmax" : "mlp";
    j["hidden1"] = g.hidden1;
    j["hidden2"] = g.hidden2;
    j["root_examples"] = g.root_examples;
    j["q_root"] = g.q_root;
    j["trigger_len"] = g.trigger_len;
    j["target_label"] = g.target_label;
    j["policy_hidden"] = g.policy_hidden;
    j["backdoor_penalty"] = g.backdoor_penalty;
    j["blackbox"] = g.blackbox;
    j["shared_eval"] = g.shared_eval;
    root["game"] = std::move(j);
  }
  {
    Json arr = Json::array();
    for (const auto& [t, w] : c.game.type_prior) arr.push_back(attack_to_json(t, w));
    root["attack_domain"] = std::move(arr);
  }
  {
    Json j;
    j["posttrain_mode"] = c.game.posttrain_mode == PostTrainMode::clip ? "clip" : "prune";
    j["psi_min"] = c.game.psi_min;
    j["psi_max"] = c.game.psi_max;
    root["defense"] = std::move(j);
  }
  {
    Json j;
    const MetaTrainConfig& t = c.train;
    j["variant"] = meta_variant_name(t.variant);
    j["n_outer"] = t.n_outer;
    j["n_inner"] = t.n_inner;
    j["k_types"] = t.k_types;
    j["kappa_d"] = t.kappa_d;
    j["kappa_a"] = t.kappa_a;
    j["eta"] = t.eta;
    j["adapt_steps"] = t.adapt_steps;
    j["batch_size"] = t.batch_size;
    j["pg_mode"] = t.pg_mode == PgMode::vanilla ? "vanilla" : "rtg";
    j["param_box"] = t.param_box;
    j["grad_clip"] = t.grad_clip;
    root["train"] = std::move(j);
  }
  {
    Json j;
    if (c.adapt.attack) j["attack"] = attack_to_json(*c.adapt.attack, std::nullopt);
    j["adapt_rounds"] = c.adapt.adapt_rounds;
    j["l"] = c.adapt.l;
    j["eta"] = c.adapt.eta;
    j["batch_size"] = c.adapt.batch_size;
    root["adapt"] = std::move(j);
  }
  {
    Json j;
    j["dir"] = c.output.dir;
    root["output"] = std::move(j);
  }
  return root.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
  // The output directory is a run location, not experiment identity.
  ExperimentConfig canonical = config;
  canonical.output.dir = ".";
  const std::string text = serialize_config(canonical);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace metafl
