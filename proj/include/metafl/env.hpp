#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "metafl/attacks.hpp"
#include "metafl/defenses.hpp"
#include "metafl/fl_core.hpp"
#include "metafl/game_env.hpp"

namespace metafl {

enum class ModelKind { softmax, mlp };

struct BSMGConfig {
  FLConfig fl;
  std::size_t n_classes = 3;
  std::size_t data_dim = 8;
  double class_separation = 4.0;
  std::size_t train_examples = 2000;
  std::size_t eval_examples = 400;

  ModelKind model = ModelKind::mlp;
  std::size_t hidden1 = 16;
  std::size_t hidden2 = 16;

  double gamma = 0.99;
  std::size_t horizon = 50;
  double server_lr = 0.05;

  // Server-side evaluation assets: root data sampled from the training pool
  // with label bias q_root (1/C = unbiased).
  std::size_t root_examples = 100;
  double q_root = 0.0;  // 0 means 1/C

  std::vector<std::pair<AttackType, double>> type_prior;

  PostTrainMode posttrain_mode = PostTrainMode::prune;
  double psi_min = 0.01;
  double psi_max = 1.0;

  std::size_t trigger_len = 4;
  int target_label = 0;

  std::size_t policy_hidden = 16;
  double backdoor_penalty = 0.0;  // optional r_D penalty weight, default off
  bool blackbox = false;          // attacker reward via the label-surrogate
  bool shared_eval = false;       // untargeted attacker scores the defender's eval set

  void validate() const;
};

struct GameState {
  std::size_t t = 0;
  ModelParams model;
  Vec prev_aggregate;
  std::uint64_t episode_seed = 0;
};

struct StepResult {
  double r_d = 0.0;
  double r_a = 0.0;
  Metrics post_metrics;      // of the post-train model on the eval set
  DefenseAction decoded;
  AggregationAudit audit;
  ModelParams post_model;    // the post-train variant used for the rewards
};

// Named aggregation rule for fixed-defense runs; sees the update list and the
// current global model (FLTrust derives its root update from it).
using NamedAggregator = std::function<Vec(const std::vector<Vec>&, const ModelParams&)>;

// One FL episode under a fixed attack type: the playable BSMG. All heavy
// assets (datasets, poisoned variants, triggers) are owned by the shared
// immutable FLGameEnv; an FLGame is cheap per-episode state.
class FLGameEnv;

class FLGame {
 public:
  FLGame(const FLGameEnv& env, std::size_t type_index, std::uint64_t episode_seed,
         const GameState* resume_from = nullptr);

  const GameState& state() const { return state_; }
  Vec observation() const;
  bool done() const;

  // Builds the malicious updates for the current round. a3 is the compressed
  // action of an adaptive attacker; fixed methods ignore it.
  AttackAction attacker_updates(const Vec* a3);

  // Advances one FL round: subsample, local updates, defense pipeline,
  // global step, reward evaluation on the post-train model.
  StepResult step(const Vec& defense_a3, const AttackAction& attack);

  // Same round mechanics under a named aggregation rule and post-training
  // function; the fixed-defense baseline path.
  StepResult step_custom(const NamedAggregator& aggregator, const PostTrainFn& post_train,
                         const AttackAction& attack);

 private:
  const FLGameEnv& env_;
  std::size_t type_;
  GameState state_;
  std::vector<Vec> round_benign_;  // benign updates of the pending round
  std::vector<std::size_t> round_selected_;
  bool round_prepared_ = false;

  void prepare_round();
  Vec benign_mean_estimate() const;
  StepResult finish_round(StepResult out, const Vec& aggregated, const PostTrainFn& post_train,
                          const AttackAction& attack);
  std::vector<Vec> assemble_updates(const AttackAction& attack) const;
};

class FLGameEnv : public GameEnv {
 public:
  explicit FLGameEnv(const BSMGConfig& config);

  double gamma() const override { return config_.gamma; }
  std::size_t horizon() const override { return config_.horizon; }
  std::size_t obs_dim() const override;
  std::size_t defender_action_dim() const override { return 3; }
  std::size_t attacker_action_dim() const override { return 3; }
  std::size_t n_types() const override { return config_.type_prior.size(); }
  bool type_adaptive(std::size_t type) const override {
    return config_.type_prior[type].first.adaptive();
  }
  double type_weight(std::size_t type) const override {
    return config_.type_prior[type].second;
  }

  Trajectory rollout(const StochasticPolicy& theta, const StochasticPolicy* phi,
                     std::size_t type, std::uint64_t seed) const override;

  // Rollout that also materializes per-round metrics and starts from an
  // optional mid-training model state; the pipeline's evaluation path.
  struct EvalRollout {
    Trajectory trajectory;
    std::vector<StepResult> details;
    GameState final_state;
  };
  EvalRollout rollout_with_metrics(const StochasticPolicy& theta, const StochasticPolicy* phi,
                                   std::size_t type, std::uint64_t seed,
                                   const GameState* resume_from = nullptr,
                                   std::size_t rounds = 0) const;

  std::unique_ptr<StochasticPolicy> make_defender_policy(std::uint64_t seed) const override;
  std::unique_ptr<StochasticPolicy> make_attacker_policy(std::size_t type,
                                                         std::uint64_t seed) const override;

  GameState initial_state(std::size_t type, std::uint64_t episode_seed) const;

  const BSMGConfig& config() const { return config_; }
  const ModelLayout& model_layout() const { return layout_; }
  const Dataset& eval_set() const { return root_data_; }
  const Dataset& test_set() const { return test_data_; }
  const Trigger& master_trigger() const { return trigger_; }
  const std::vector<ClientDataset>& clients() const { return clients_; }

  // Clean accuracy / backdoor metrics of an arbitrary model on the held-out
  // test set, with the master trigger.
  Metrics test_metrics(const ModelParams& model) const;

 private:
  friend class FLGame;

  BSMGConfig config_;
  ModelLayout layout_;
  ModelParams initial_model_;
  Dataset train_pool_;
  Dataset test_data_;
  Dataset root_data_;
  Dataset triggered_root_;  // root data with the trigger applied, for F''
  Trigger trigger_;
  std::vector<ClientDataset> clients_;
  // Per type: poisoned data per targeted malicious client (empty when none).
  std::vector<std::vector<ClientDataset>> poisoned_per_type_;
  std::vector<AttackEvalAssets> assets_per_type_;

  std::size_t m1_of(std::size_t type) const;
  std::size_t m2_of(std::size_t type) const;
};

}  // namespace metafl
