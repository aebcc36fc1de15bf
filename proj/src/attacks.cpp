#include "metafl/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace metafl {

std::string attack_method_name(AttackMethod m) {
  switch (m) {
    case AttackMethod::NA: return "na";
    case AttackMethod::IPM: return "ipm";
    case AttackMethod::LMP: return "lmp";
    case AttackMethod::BFL: return "bfl";
    case AttackMethod::DBA: return "dba";
    case AttackMethod::RL: return "rl";
    case AttackMethod::BRL: return "brl";
  }
  fail(Errc::config, "unknown attack method");
}

AttackMethod attack_method_from_name(const std::string& name) {
  if (name == "na") return AttackMethod::NA;
  if (name == "ipm") return AttackMethod::IPM;
  if (name == "lmp") return AttackMethod::LMP;
  if (name == "bfl") return AttackMethod::BFL;
  if (name == "dba") return AttackMethod::DBA;
  if (name == "rl") return AttackMethod::RL;
  if (name == "brl") return AttackMethod::BRL;
  fail(Errc::config, "unknown attack method: " + name);
}

double AttackType::get(const std::string& key, double fallback) const {
  auto it = config.find(key);
  return it == config.end() ? fallback : it->second;
}

namespace {

const std::set<std::string>& allowed_keys(AttackMethod m) {
  static const std::set<std::string> na = {};
  static const std::set<std::string> ipm = {"epsilon"};
  static const std::set<std::string> lmp = {"lambda_max", "tol"};
  static const std::set<std::string> bfl = {"rho", "scale", "trigger_id", "target_label"};
  static const std::set<std::string> dba = {"rho", "scale", "trigger_id", "target_label"};
  static const std::set<std::string> rl = {"lambda3_max", "blackbox"};
  static const std::set<std::string> brl = {"lambda",      "rho",      "trigger_id",
                                            "target_label", "scale_max", "blackbox",
                                            "lambda3_max"};
  switch (m) {
    case AttackMethod::NA: return na;
    case AttackMethod::IPM: return ipm;
    case AttackMethod::LMP: return lmp;
    case AttackMethod::BFL: return bfl;
    case AttackMethod::DBA: return dba;
    case AttackMethod::RL: return rl;
    case AttackMethod::BRL: return brl;
  }
  fail(Errc::config, "unknown attack method");
}

}  // namespace

void AttackType::validate() const {
  const auto& allowed = allowed_keys(method);
  for (const auto& [key, value] : config) {
    (void)value;
    require(allowed.count(key) > 0, Errc::config,
            "attack type " + attack_method_name(method) + ": unknown config key '" + key + "'");
  }
  const bool targeted = objective == AttackObjective::targeted;
  switch (method) {
    case AttackMethod::NA:
      require(config.empty(), Errc::config, "na carries no configuration");
      break;
    case AttackMethod::IPM:
    case AttackMethod::LMP:
    case AttackMethod::RL:
      require(!targeted, Errc::config,
              attack_method_name(method) + " is an untargeted method");
      break;
    case AttackMethod::BFL:
    case AttackMethod::DBA:
    case AttackMethod::BRL:
      require(targeted, Errc::config, attack_method_name(method) + " is a targeted method");
      require(config.count("rho") > 0 && config.count("trigger_id") > 0 &&
                  config.count("target_label") > 0,
              Errc::config,
              attack_method_name(method) + " needs rho, trigger_id and target_label");
      break;
  }
}

AttackType AttackType::make(AttackMethod method, std::map<std::string, double> config) {
  AttackType t;
  t.method = method;
  t.objective = (method == AttackMethod::BFL || method == AttackMethod::DBA ||
                 method == AttackMethod::BRL)
                    ? AttackObjective::targeted
                    : AttackObjective::untargeted;
  t.config = std::move(config);
  t.validate();
  return t;
}

AttackAction ipm_update(const Vec& benign_mean_estimate, double eps, std::size_t n_malicious) {
  require(eps >= 0.0, Errc::config, "ipm_update: epsilon must be >= 0");
  AttackAction a;
  a.updates.assign(n_malicious, scaled(benign_mean_estimate, -eps));
  return a;
}

namespace {

std::vector<Vec> lmp_family(const Vec& mu, double lambda, std::size_t n_malicious) {
  Vec crafted = mu;
  for (std::size_t i = 0; i < crafted.size(); ++i) {
    double s = mu[i] > 0.0 ? 1.0 : (mu[i] < 0.0 ? -1.0 : 0.0);
    crafted[i] = mu[i] - lambda * s;
  }
  return std::vector<Vec>(n_malicious, crafted);
}

}  // namespace

LmpResult lmp_update(const std::vector<Vec>& benign_updates, const ProbeAggregator& probe,
                     double lambda_max, double tol, std::size_t n_malicious) {
  require(!benign_updates.empty(), Errc::data, "lmp_update: needs at least one benign update");
  require(lambda_max > 0.0 && tol > 0.0, Errc::config, "lmp_update: bad lambda_max or tol");

  const Vec mu = mean(benign_updates);
  LmpResult res;
  if (norm2(mu) == 0.0) {
    res.action.updates.assign(n_malicious, Vec(mu.size(), 0.0));
    res.lambda = 0.0;
    return res;
  }

  auto probe_at = [&](double lambda) {
    std::vector<Vec> all = benign_updates;
    auto crafted = lmp_family(mu, lambda, n_malicious);
    all.insert(all.end(), crafted.begin(), crafted.end());
    return probe(all);
  };
  const Vec baseline = probe_at(0.0);
  auto passes = [&](double lambda) {
    Vec moved = probe_at(lambda);
    axpy(-1.0, baseline, moved);
    return dot(moved, mu) < 0.0;
  };

  if (passes(lambda_max)) {
    res.lambda = lambda_max;
  } else {
    // Locate the first contiguous passing run on a fine grid walking up from
    // zero, then bisect its upper boundary. Selection-based aggregators can
    // admit spurious passing pockets at large lambda; those are ignored.
    const int grid = 512;
    int first_pass = -1;
    int first_fail_after = -1;
    for (int i = 1; i <= grid; ++i) {
      const bool ok = passes(lambda_max * static_cast<double>(i) / grid);
      if (ok && first_pass < 0) first_pass = i;
      if (!ok && first_pass >= 0) {
        first_fail_after = i;
        break;
      }
    }
    if (first_pass < 0) {
      res.lambda = lambda_max;
      res.unbracketed = true;
      res.action.updates = lmp_family(mu, lambda_max, n_malicious);
      return res;
    }
    double lo = lambda_max * static_cast<double>(first_fail_after - 1) / grid;
    double hi = lambda_max * static_cast<double>(first_fail_after) / grid;
    while (hi - lo > tol) {
      const double mid = 0.5 * (lo + hi);
      if (passes(mid))
        lo = mid;
      else
        hi = mid;
    }
    res.lambda = lo;
  }
  res.action.updates = lmp_family(mu, res.lambda, n_malicious);
  return res;
}

ClientDataset poison_dataset(const ClientDataset& client_data, const Trigger& trigger,
                             double rho, Rng& rng) {
  require(rho >= 0.0 && rho <= 1.0, Errc::config, "poison_dataset: rho must lie in [0,1]");
  ClientDataset out = client_data;
  const std::size_t n = out.data.size();
  const std::size_t n_poison = static_cast<std::size_t>(rho * static_cast<double>(n));

  PoisonMeta meta;
  meta.trigger_indices = trigger.indices;
  meta.trigger_value = trigger.value;
  meta.target_label = trigger.target_label;
  meta.ratio = rho;
  meta.poisoned_rows = rng.sample_without_replacement(n, n_poison);
  std::sort(meta.poisoned_rows.begin(), meta.poisoned_rows.end());

  for (std::size_t r : meta.poisoned_rows) {
    double* row = out.data.features.data() + r * out.data.dim;
    for (std::size_t j : trigger.indices) {
      require(j < out.data.dim, Errc::shape, "poison_dataset: trigger index out of range");
      row[j] = trigger.value;
    }
    out.data.labels[r] = trigger.target_label;
  }
  out.poison = std::move(meta);
  return out;
}

Vec backdoor_update(const ModelParams& model, const ClientDataset& poisoned, double scale,
                    const LocalParams& local, Rng& rng) {
  require(scale >= 1.0, Errc::config, "backdoor_update: scale must be >= 1");
  Vec g = local_update(model, poisoned.data, local.lr, local.iters, local.batch_size, rng);
  for (double& v : g) v *= scale;
  return g;
}

std::vector<Trigger> dba_assign(const Trigger& trigger, std::size_t m1, Rng& rng) {
  require(trigger.indices.size() >= 4, Errc::config,
          "dba_assign: trigger needs at least 4 indices");

  std::vector<Trigger> blocks(4);
  const std::size_t n = trigger.indices.size();
  for (std::size_t b = 0; b < 4; ++b) {
    const std::size_t lo = b * n / 4;
    const std::size_t hi = (b + 1) * n / 4;
    blocks[b].indices.assign(trigger.indices.begin() + lo, trigger.indices.begin() + hi);
    blocks[b].value = trigger.value;
    blocks[b].target_label = trigger.target_label;
  }

  std::vector<Trigger> assigned;
  assigned.reserve(m1);
  for (std::size_t i = 0; i < m1; ++i) assigned.push_back(blocks[i % 4]);
  rng.shuffle(assigned);
  return assigned;
}

AttackAction rl_attack_action_to_updates(const Vec& a3, AttackObjective objective,
                                         const RlAttackContext& ctx, std::size_t n_malicious) {
  require(a3.size() == 3, Errc::shape, "rl attack action must be a 3-vector");
  for (double v : a3)
    require(v >= 0.0 && v <= 1.0, Errc::shape, "rl attack action outside [0,1]^3");

  const Vec& mu = ctx.benign_mean_estimate;
  require(!mu.empty(), Errc::config, "rl attack: missing benign mean estimate");
  const double mu_norm = norm2(mu);

  Vec update;
  if (objective == AttackObjective::untargeted) {
    const double l1 = a3[0];
    const double l2 = a3[1];
    const double l3 = a3[2] * ctx.lambda3_max;

    // Seeded unit perturbation direction; fixed for the episode.
    Rng zr(derive_seed(ctx.perturb_seed, 0x7065727475726241ULL));
    Vec z(mu.size());
    for (double& v : z) v = zr.normal();
    const double zn = norm2(z);
    if (zn > 0.0) scale(z, 1.0 / zn);

    update = scaled(mu, -l1);
    axpy(l2, z, update);
    const double target_norm = l3 * mu_norm;
    const double un = norm2(update);
    update = un > 0.0 ? scaled(update, target_norm / un) : Vec(mu.size(), 0.0);
  } else {
    require(ctx.model != nullptr && ctx.poisoned_data != nullptr, Errc::config,
            "rl attack (targeted): missing model or poisoned data in context");
    const double l1 = 1.0 + a3[0] * (ctx.brl_scale_max - 1.0);
    const double l2 = a3[1];
    const double l3 = a3[2] * ctx.lambda3_max;

    Rng br(derive_seed(ctx.perturb_seed, 0x62646c6f63616cULL));
    update = backdoor_update(*ctx.model, *ctx.poisoned_data, l1, ctx.local, br);
    scale(update, 1.0 - l2);
    axpy(l2, mu, update);
    const double cap = l3 * mu_norm;
    const double un = norm2(update);
    if (un > cap) update = un > 0.0 ? scaled(update, cap / un) : Vec(mu.size(), 0.0);
  }

  AttackAction a;
  a.updates.assign(n_malicious, update);
  return a;
}

double attack_reward(const AttackType& xi, const ModelParams& post_train_model,
                     const AttackEvalAssets& assets) {
  const std::size_t m1 = assets.targeted_poisoned.size();
  const std::size_t m2 = assets.untargeted_clean.size();
  require(m1 + m2 > 0, Errc::config, "attack_reward: no evaluation assets");

  double targeted_term = 0.0;
  for (const Dataset& d : assets.targeted_poisoned)
    targeted_term += forward_loss(post_train_model, d);
  if (m1 > 0) targeted_term /= static_cast<double>(m1);

  double untargeted_term = 0.0;
  for (const Dataset& d : assets.untargeted_clean)
    untargeted_term += forward_loss(post_train_model, d);
  if (m2 > 0) untargeted_term /= static_cast<double>(m2);

  if (xi.method == AttackMethod::BRL) {
    double stealth = 0.0;
    if (assets.malicious_update && assets.benign_mean) {
      Vec gap = *assets.malicious_update;
      axpy(-1.0, *assets.benign_mean, gap);
      stealth = norm2(gap);
    }
    return -(targeted_term + xi.get("lambda", 0.5) * stealth);
  }
  return -(targeted_term - untargeted_term);
}

SurrogateReward surrogate_reward_blackbox(const ModelParams& post_train_model,
                                          const Dataset& triggered_eval_set,
                                          std::size_t n_classes,
                                          const std::vector<Dataset>& untargeted_sets) {
  require(triggered_eval_set.size() > 0, Errc::data,
          "surrogate_reward_blackbox: empty triggered set");

  double best_loss = 0.0;
  int best_label = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    Dataset relabeled = triggered_eval_set;
    std::fill(relabeled.labels.begin(), relabeled.labels.end(), static_cast<int>(c));
    const double loss = forward_loss(post_train_model, relabeled);
    if (c == 0 || loss < best_loss) {  // strict: ties keep the lowest label
      best_loss = loss;
      best_label = static_cast<int>(c);
    }
  }

  double untargeted_term = 0.0;
  for (const Dataset& d : untargeted_sets) untargeted_term += forward_loss(post_train_model, d);
  if (!untargeted_sets.empty()) untargeted_term /= static_cast<double>(untargeted_sets.size());

  SurrogateReward out;
  out.chosen_label = best_label;
  out.reward = -(best_loss - untargeted_term);
  return out;
}

}  // namespace metafl
