#pragma once

#include <memory>
#include <string>
#include <vector>

#include "metafl/env.hpp"
#include "metafl/estimators.hpp"
#include "metafl/game_env.hpp"

namespace metafl {

enum class MetaVariant { meta_rl, reptile, debiased };

std::string meta_variant_name(MetaVariant v);
MetaVariant meta_variant_from_name(const std::string& name);

struct MetaTrainConfig {
  std::size_t n_outer = 100;     // N_D
  std::size_t n_inner = 10;      // N_A
  std::size_t k_types = 2;       // K
  double kappa_d = 1.0;
  double kappa_a = 0.5;
  double eta = 0.1;              // one-step adaptation rate
  std::size_t adapt_steps = 1;   // l
  std::size_t batch_size = 8;    // N_b
  MetaVariant variant = MetaVariant::reptile;
  PgMode pg_mode = PgMode::reward_to_go_baseline;
  std::uint64_t seed = 0;
  // Compact parameter domain: policy parameters are projected onto
  // [-param_box, param_box] after every update; 0 disables the projection.
  double param_box = 0.0;
  // Gradient-norm clip applied to every training step; 0 disables.
  double grad_clip = 0.0;

  void validate() const;
};

struct TrainLogRow {
  std::size_t iter = 0;
  double defender_return = 0.0;
  double attacker_return = 0.0;
  double defender_grad_norm = 0.0;
  double attacker_grad_norm = 0.0;
  double fose_defender = 0.0;
  double fose_attacker = 0.0;
  double wall_time_s = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  void check_finite() const;
  // wall_time_s is the one run-dependent column; determinism comparisons
  // strip it.
  void save_csv(const std::string& path) const;
};

struct MetaTrainResult {
  std::unique_ptr<StochasticPolicy> theta;
  std::vector<std::unique_ptr<StochasticPolicy>> attacker_policies;  // per type, null if fixed
  TrainLog log;
};

// Attacker ascent against a frozen adapted defender; the two-timescale inner
// loop. Rejects non-adaptive types. param_box > 0 projects onto the box.
std::unique_ptr<StochasticPolicy> inner_best_response(const GameEnv& env,
                                                      const StochasticPolicy& theta_adapted,
                                                      const StochasticPolicy& phi_init,
                                                      std::size_t type, std::size_t n_inner,
                                                      double kappa_a, std::size_t batch_size,
                                                      PgMode mode, std::uint64_t seed,
                                                      double param_box = 0.0,
                                                      double grad_clip = 0.0);

// Per-outer-iteration observer; receives the current meta policy and the
// per-type attacker policies (entries may be null).
using IterationHook =
    std::function<void(std::size_t iter, const StochasticPolicy& theta,
                       const std::vector<std::unique_ptr<StochasticPolicy>>& phis)>;

// Reptile meta-RL over non-adaptive types: l-step adaptation per sampled
// type, outer move toward the average adapted offset.
MetaTrainResult meta_rl_train(const MetaTrainConfig& config, const GameEnv& env,
                              const StochasticPolicy* init_theta = nullptr);

// Full two-timescale meta-Stackelberg loop; attacker policies persist across
// outer iterations. Non-adaptive types skip the inner loop and use their
// fixed strategies.
MetaTrainResult meta_sg_train(const MetaTrainConfig& config, const GameEnv& env,
                              const StochasticPolicy* init_theta = nullptr,
                              const std::vector<const StochasticPolicy*>* init_phis = nullptr,
                              const IterationHook& hook = nullptr);

struct OnlineAdaptResult {
  std::unique_ptr<StochasticPolicy> theta;
  TrainLog log;
  std::vector<StepResult> execution;  // per live FL round
  GameState final_state;
};

// Online stage: interleaves policy updates (from trajectories branched off
// the live model state, rewards estimated on server-side assets) with
// execution blocks of adapt_rounds FL rounds.
OnlineAdaptResult online_adapt(const StochasticPolicy& theta_meta, const FLGameEnv& live_env,
                               std::size_t type, const StochasticPolicy* live_phi,
                               std::size_t adapt_rounds, std::size_t l, double eta,
                               std::size_t batch_size, std::uint64_t seed,
                               PgMode mode = PgMode::reward_to_go_baseline,
                               double grad_clip = 0.0);

}  // namespace metafl
