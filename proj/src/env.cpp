#include "metafl/env.hpp"

#include <algorithm>
#include <cmath>

namespace metafl {

namespace {

constexpr std::uint64_t kStreamInit = 0x696e6974ULL;
constexpr std::uint64_t kStreamSubsample = 0x737562ULL;
constexpr std::uint64_t kStreamLocal = 0x6c6f63ULL;
constexpr std::uint64_t kStreamAttack = 0x61747431ULL;

}  // namespace

void BSMGConfig::validate() const {
  fl.validate(n_classes);
  require(gamma > 0.0 && gamma <= 1.0, Errc::config, "game: gamma must lie in (0,1]");
  require(horizon >= 1, Errc::config, "game: horizon must be at least 1");
  require(!type_prior.empty(), Errc::config, "game: empty attack-type prior");
  double total = 0.0;
  for (const auto& [type, w] : type_prior) {
    type.validate();
    require(w >= 0.0, Errc::config, "game: negative type weight");
    total += w;
  }
  require(std::abs(total - 1.0) <= 1e-9, Errc::config, "game: type prior must sum to 1");
  require(trigger_len >= 1 && trigger_len <= data_dim, Errc::config,
          "game: trigger length out of range");
  require(target_label >= 0 && static_cast<std::size_t>(target_label) < n_classes,
          Errc::config, "game: target label out of range");
  require(psi_min > 0.0 && psi_max >= psi_min, Errc::config, "game: bad psi range");
  require(root_examples >= 1, Errc::config, "game: need root data");
}

FLGameEnv::FLGameEnv(const BSMGConfig& config) : config_(config) {
  config_.validate();

  layout_ = config_.model == ModelKind::softmax
                ? ModelLayout::softmax_regression(config_.data_dim, config_.n_classes)
                : ModelLayout::mlp(config_.data_dim, config_.hidden1, config_.hidden2,
                                   config_.n_classes);
  initial_model_ = init_model(layout_, derive_seed(config_.fl.seed, kStreamInit));

  train_pool_ = generate_synthetic_dataset(config_.train_examples, config_.n_classes,
                                           config_.data_dim, config_.class_separation,
                                           derive_seed(config_.fl.seed, 1));
  test_data_ = generate_synthetic_dataset(config_.eval_examples, config_.n_classes,
                                          config_.data_dim, config_.class_separation,
                                          derive_seed(config_.fl.seed, 2));

  clients_ = partition_non_iid(train_pool_, config_.fl.n_clients, config_.fl.non_iid_q,
                               config_.n_classes, derive_seed(config_.fl.seed, 3));

  // Root data: biased label sampling from the training pool.
  {
    const double q_root =
        config_.q_root > 0.0 ? config_.q_root : 1.0 / static_cast<double>(config_.n_classes);
    Rng rng(derive_seed(config_.fl.seed, 4));
    std::vector<std::size_t> rows;
    const std::size_t n = std::min<std::size_t>(config_.root_examples, train_pool_.size());
    while (rows.size() < n) {
      const std::size_t cand = rng.uniform_index(train_pool_.size());
      const bool is_ref = train_pool_.labels[cand] == 0;
      const double keep =
          is_ref ? q_root : (1.0 - q_root) / static_cast<double>(config_.n_classes - 1);
      const double uniform = 1.0 / static_cast<double>(config_.n_classes);
      if (rng.uniform01() < keep / std::max(uniform, q_root)) rows.push_back(cand);
    }
    root_data_ = train_pool_.subset(rows);
  }

  // Master trigger on the trailing features.
  trigger_.indices.clear();
  for (std::size_t j = config_.data_dim - config_.trigger_len; j < config_.data_dim; ++j)
    trigger_.indices.push_back(j);
  trigger_.value = 1.0;
  trigger_.target_label = config_.target_label;

  triggered_root_ = root_data_;
  for (std::size_t i = 0; i < triggered_root_.size(); ++i) {
    double* row = triggered_root_.features.data() + i * triggered_root_.dim;
    for (std::size_t j : trigger_.indices) row[j] = trigger_.value;
  }

  // Poisoned client-data variants and reward assets per type.
  poisoned_per_type_.resize(config_.type_prior.size());
  assets_per_type_.resize(config_.type_prior.size());
  for (std::size_t k = 0; k < config_.type_prior.size(); ++k) {
    const AttackType& xi = config_.type_prior[k].first;
    const std::size_t m1 = m1_of(k);
    const std::size_t m2 = m2_of(k);

    if (m1 > 0) {
      const double rho = xi.get("rho", 0.5);
      std::vector<Trigger> per_client(m1, trigger_);
      if (xi.method == AttackMethod::DBA) {
        Rng rng(derive_seed(config_.fl.seed, 5));
        per_client = dba_assign(trigger_, m1, rng);
      }
      for (std::size_t i = 0; i < m1; ++i) {
        Rng rng(derive_seed(config_.fl.seed, derive_seed(6, k * 1000 + i)));
        poisoned_per_type_[k].push_back(poison_dataset(clients_[i], per_client[i], rho, rng));
      }
    }

    AttackEvalAssets assets;
    for (std::size_t i = 0; i < m1; ++i)
      assets.targeted_poisoned.push_back(poisoned_per_type_[k][i].data);
    for (std::size_t i = m1; i < m1 + m2; ++i)
      assets.untargeted_clean.push_back(config_.shared_eval ? root_data_ : clients_[i].data);
    assets_per_type_[k] = std::move(assets);
  }
}

std::size_t FLGameEnv::m1_of(std::size_t type) const {
  return config_.type_prior[type].first.objective == AttackObjective::targeted ? config_.fl.m1
                                                                               : 0;
}

std::size_t FLGameEnv::m2_of(std::size_t type) const {
  const AttackType& xi = config_.type_prior[type].first;
  if (xi.method == AttackMethod::NA) return 0;
  return xi.objective == AttackObjective::untargeted ? config_.fl.m2 : 0;
}

std::size_t FLGameEnv::obs_dim() const {
  const auto& layers = layout_.layers;
  std::size_t dim = 1;  // normalized round index
  const std::size_t first = layers.size() >= 2 ? layers.size() - 2 : 0;
  for (std::size_t i = first; i < layers.size(); ++i) dim += layers[i].param_count();
  return dim;
}

GameState FLGameEnv::initial_state(std::size_t type, std::uint64_t episode_seed) const {
  (void)type;  // the initial model is fixed across types and episodes
  GameState s;
  s.t = 0;
  s.model = initial_model_;
  s.prev_aggregate.assign(layout_.param_count(), 0.0);
  s.episode_seed = episode_seed;
  return s;
}

Metrics FLGameEnv::test_metrics(const ModelParams& model) const {
  PoisonMeta meta;
  meta.trigger_indices = trigger_.indices;
  meta.trigger_value = trigger_.value;
  meta.target_label = trigger_.target_label;
  return evaluate(model, test_data_, &meta);
}

FLGame::FLGame(const FLGameEnv& env, std::size_t type_index, std::uint64_t episode_seed,
               const GameState* resume_from)
    : env_(env), type_(type_index) {
  require(type_index < env.config().type_prior.size(), Errc::config, "bad attack type index");
  if (resume_from == nullptr) {
    state_ = env.initial_state(type_index, episode_seed);
  } else {
    state_ = *resume_from;
    state_.episode_seed = episode_seed;
  }
}

bool FLGame::done() const { return state_.t >= env_.config().horizon; }

Vec FLGame::observation() const {
  const auto& layers = env_.layout_.layers;
  const std::size_t first = layers.size() >= 2 ? layers.size() - 2 : 0;
  const std::size_t off = env_.layout_.layer_offset(first);
  Vec obs(state_.model.weights.begin() + off, state_.model.weights.end());
  obs.push_back(static_cast<double>(state_.t) / static_cast<double>(env_.config().horizon));
  return obs;
}

void FLGame::prepare_round() {
  if (round_prepared_) return;
  const auto& cfg = env_.config();
  const std::size_t n = cfg.fl.n_clients;
  const std::size_t k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(cfg.fl.subsample_rate * static_cast<double>(n))));

  Rng sub(derive_seed(derive_seed(state_.episode_seed, kStreamSubsample), state_.t));
  round_selected_ = sub.sample_without_replacement(n, k);
  std::sort(round_selected_.begin(), round_selected_.end());

  const std::size_t m1 = env_.m1_of(type_);
  const std::size_t m2 = env_.m2_of(type_);
  const std::size_t m = m1 + m2;

  round_benign_.clear();
  for (std::size_t id : round_selected_) {
    const bool malicious = id < m;
    if (malicious) continue;
    Rng rng(derive_seed(derive_seed(state_.episode_seed, kStreamLocal),
                        state_.t * 100000 + id));
    round_benign_.push_back(local_update(state_.model, env_.clients_[id].data, cfg.fl.local_lr,
                                         cfg.fl.local_iters, cfg.fl.batch_size, rng));
  }
  round_prepared_ = true;
}

Vec FLGame::benign_mean_estimate() const {
  if (env_.config().blackbox) return state_.prev_aggregate;
  if (round_benign_.empty()) return Vec(env_.layout_.param_count(), 0.0);
  return mean(round_benign_);
}

AttackAction FLGame::attacker_updates(const Vec* a3) {
  prepare_round();
  const auto& cfg = env_.config();
  const AttackType& xi = cfg.type_prior[type_].first;
  const std::size_t m1 = env_.m1_of(type_);
  const std::size_t m2 = env_.m2_of(type_);
  const std::size_t m = m1 + m2;

  AttackAction action;
  if (m == 0) return action;

  LocalParams local{cfg.fl.local_lr, cfg.fl.local_iters, cfg.fl.batch_size};
  const Vec mu = benign_mean_estimate();

  switch (xi.method) {
    case AttackMethod::NA:
      break;
    case AttackMethod::IPM:
      action = ipm_update(mu, xi.get("epsilon", 2.0), m);
      break;
    case AttackMethod::LMP: {
      // Probes a parameter-free robust rule; the defender's live pipeline is
      // not observable to the attacker. Black-box attackers only know mu.
      std::vector<Vec> known = (cfg.blackbox || round_benign_.empty())
                                   ? std::vector<Vec>{mu}
                                   : round_benign_;
      action = lmp_update(known, [](const std::vector<Vec>& u) { return coord_median(u); },
                          xi.get("lambda_max", 5.0), xi.get("tol", 1e-3), m)
                   .action;
      break;
    }
    case AttackMethod::BFL:
    case AttackMethod::DBA: {
      const double scale = xi.get("scale", 1.0);
      for (std::size_t i = 0; i < m; ++i) {
        Rng rng(derive_seed(derive_seed(state_.episode_seed, kStreamAttack),
                            state_.t * 100000 + i));
        action.updates.push_back(
            backdoor_update(state_.model, env_.poisoned_per_type_[type_][i], scale, local, rng));
      }
      break;
    }
    case AttackMethod::RL:
    case AttackMethod::BRL: {
      require(a3 != nullptr, Errc::protocol, "adaptive attack type needs a policy action");
      RlAttackContext ctx;
      ctx.benign_mean_estimate = mu;
      ctx.model = &state_.model;
      ctx.poisoned_data =
          xi.method == AttackMethod::BRL ? &env_.poisoned_per_type_[type_][0] : nullptr;
      ctx.local = local;
      ctx.perturb_seed = derive_seed(derive_seed(state_.episode_seed, kStreamAttack), state_.t);
      ctx.lambda3_max = xi.get("lambda3_max", 3.0);
      ctx.brl_scale_max = xi.get("scale_max", 3.0);
      action = rl_attack_action_to_updates(*a3, xi.objective, ctx, m);
      break;
    }
  }
  return action;
}

std::vector<Vec> FLGame::assemble_updates(const AttackAction& attack) const {
  const std::size_t m = env_.m1_of(type_) + env_.m2_of(type_);
  // Updates in client-id order: selected malicious clients contribute their
  // entry of the attack action, benign clients their local updates.
  std::vector<Vec> updates;
  std::size_t benign_idx = 0;
  for (std::size_t id : round_selected_) {
    if (id < m) {
      require(id < attack.updates.size(), Errc::shape,
              "attack action is missing updates for selected malicious clients");
      updates.push_back(attack.updates[id]);
    } else {
      updates.push_back(round_benign_[benign_idx++]);
    }
  }
  return updates;
}

StepResult FLGame::finish_round(StepResult out, const Vec& aggregated,
                                const PostTrainFn& post_train, const AttackAction& attack) {
  const auto& cfg = env_.config();
  const Vec mu = benign_mean_estimate();

  state_.model = global_step(state_.model, aggregated, cfg.server_lr);
  state_.prev_aggregate = aggregated;

  // Rewards come from the post-train variant; the transition never sees it.
  out.post_model = post_train(state_.model);
  PoisonMeta known_trigger;
  known_trigger.trigger_indices = env_.trigger_.indices;
  known_trigger.trigger_value = env_.trigger_.value;
  known_trigger.target_label = env_.trigger_.target_label;
  out.post_metrics = evaluate(out.post_model, env_.root_data_, &known_trigger);
  out.r_d =
      -out.post_metrics.clean_loss - cfg.backdoor_penalty * out.post_metrics.backdoor_accuracy;

  const AttackType& xi = cfg.type_prior[type_].first;
  const std::size_t m = env_.m1_of(type_) + env_.m2_of(type_);
  const std::size_t m2 = env_.m2_of(type_);
  (void)m2;
  if (m == 0) {
    out.r_a = 0.0;
  } else if (cfg.shared_eval && xi.objective == AttackObjective::untargeted) {
    // Shared evaluation assets make the stage game exactly zero-sum.
    out.r_a = out.post_metrics.clean_loss;
  } else if (cfg.blackbox) {
    if (xi.objective == AttackObjective::targeted) {
      out.r_a =
          surrogate_reward_blackbox(out.post_model, env_.triggered_root_, cfg.n_classes).reward;
    } else {
      // Untargeted term of F'' on the server-visible data.
      out.r_a = forward_loss(out.post_model, env_.root_data_);
    }
  } else {
    AttackEvalAssets assets = env_.assets_per_type_[type_];
    if (xi.method == AttackMethod::BRL && !attack.updates.empty()) {
      assets.malicious_update = attack.updates.front();
      assets.benign_mean = mu;
    }
    out.r_a = attack_reward(xi, out.post_model, assets);
  }

  ++state_.t;
  round_prepared_ = false;
  round_benign_.clear();
  round_selected_.clear();
  return out;
}

StepResult FLGame::step(const Vec& defense_a3, const AttackAction& attack) {
  const auto& cfg = env_.config();
  require(state_.t < cfg.horizon, Errc::episode, "step past the episode horizon");
  prepare_round();

  std::vector<Vec> updates = assemble_updates(attack);
  StepResult out;
  out.decoded = decode_defense_action(defense_a3, updates, cfg.posttrain_mode, cfg.psi_min,
                                      cfg.psi_max);
  DefenseOutcome defense = apply_defense_action(out.decoded, updates, env_.root_data_);
  out.audit = defense.audit;
  return finish_round(std::move(out), defense.aggregated, defense.post_train, attack);
}

StepResult FLGame::step_custom(const NamedAggregator& aggregator, const PostTrainFn& post_train,
                               const AttackAction& attack) {
  const auto& cfg = env_.config();
  require(state_.t < cfg.horizon, Errc::episode, "step past the episode horizon");
  prepare_round();

  std::vector<Vec> updates = assemble_updates(attack);
  StepResult out;
  out.audit.rule = "custom";
  Vec aggregated = aggregator(updates, state_.model);
  return finish_round(std::move(out), aggregated, post_train, attack);
}

Trajectory FLGameEnv::rollout(const StochasticPolicy& theta, const StochasticPolicy* phi,
                              std::size_t type, std::uint64_t seed) const {
  return rollout_with_metrics(theta, phi, type, seed).trajectory;
}

FLGameEnv::EvalRollout FLGameEnv::rollout_with_metrics(const StochasticPolicy& theta,
                                                       const StochasticPolicy* phi,
                                                       std::size_t type, std::uint64_t seed,
                                                       const GameState* resume_from,
                                                       std::size_t rounds) const {
  require(theta.obs_dim() == obs_dim() && theta.action_dim() == 3, Errc::shape,
          "defender policy does not match the environment");
  const bool adaptive = type_adaptive(type);
  if (adaptive)
    require(phi != nullptr, Errc::protocol, "adaptive attack type needs an attacker policy");

  EvalRollout out;
  FLGame game(*this, type, derive_seed(seed, 0x65706973ULL), resume_from);
  Rng policy_rng(derive_seed(seed, 0x61637473ULL));
  const std::size_t n_steps = rounds == 0 ? config_.horizon : rounds;
  out.trajectory.type_tag = attack_method_name(config_.type_prior[type].first.method);

  for (std::size_t k = 0; k < n_steps && !game.done(); ++k) {
    StepRecord rec;
    rec.obs = game.observation();
    auto [ad, logp_d] = theta.sample(rec.obs, policy_rng);
    rec.action_d = ad;
    rec.logp_d = logp_d;

    Vec a3;
    if (adaptive) {
      auto [aa, logp_a] = phi->sample(rec.obs, policy_rng);
      rec.action_a = aa;
      rec.logp_a = logp_a;
      a3 = aa;
    } else {
      rec.action_a = Vec(3, 0.0);
      rec.logp_a = 0.0;
    }

    AttackAction attack = game.attacker_updates(adaptive ? &a3 : nullptr);
    StepResult res = game.step(ad, attack);
    rec.r_d = res.r_d;
    rec.r_a = res.r_a;
    out.trajectory.steps.push_back(std::move(rec));
    out.details.push_back(std::move(res));
  }
  out.final_state = game.state();
  return out;
}

std::unique_ptr<StochasticPolicy> FLGameEnv::make_defender_policy(std::uint64_t seed) const {
  return std::make_unique<GaussianMlpPolicy>(obs_dim(), config_.policy_hidden, 3, seed);
}

std::unique_ptr<StochasticPolicy> FLGameEnv::make_attacker_policy(std::size_t type,
                                                                  std::uint64_t seed) const {
  (void)type;
  return std::make_unique<GaussianMlpPolicy>(obs_dim(), config_.policy_hidden, 3, seed);
}

}  // namespace metafl
