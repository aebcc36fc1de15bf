#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metafl/common.hpp"
#include "metafl/fl_core.hpp"

namespace metafl {

enum class AttackObjective { untargeted, targeted };
enum class AttackMethod { NA, IPM, LMP, BFL, DBA, RL, BRL };

std::string attack_method_name(AttackMethod m);
AttackMethod attack_method_from_name(const std::string& name);

// One attacker scenario (omega1, omega2, omega3): objective, method and the
// method's configuration map, validated against a closed per-method schema.
struct AttackType {
  AttackObjective objective = AttackObjective::untargeted;
  AttackMethod method = AttackMethod::NA;
  std::map<std::string, double> config;

  bool adaptive() const { return method == AttackMethod::RL || method == AttackMethod::BRL; }
  double get(const std::string& key, double fallback) const;
  void validate() const;

  static AttackType make(AttackMethod method, std::map<std::string, double> config = {});
};

// Joint model updates of all attacker-controlled clients.
struct AttackAction {
  std::vector<Vec> updates;
};

struct Trigger {
  std::vector<std::size_t> indices;
  double value = 1.0;
  int target_label = 0;
};

struct LocalParams {
  double lr = 0.05;
  std::size_t iters = 1;
  std::size_t batch_size = 128;
};

// Every malicious update set to -eps times the (estimated) benign mean.
AttackAction ipm_update(const Vec& benign_mean_estimate, double eps, std::size_t n_malicious);

using ProbeAggregator = std::function<Vec(const std::vector<Vec>&)>;

struct LmpResult {
  AttackAction action;
  double lambda = 0.0;
  bool unbracketed = false;
};

// Directed deviation mu - lambda*sign(mu) with the largest lambda whose
// crafted updates still drag the probed aggregate against the benign mean,
// located by bisection. The probe test compares the aggregate against the
// lambda=0 baseline, so acceptance is monotone in lambda.
LmpResult lmp_update(const std::vector<Vec>& benign_updates, const ProbeAggregator& probe,
                     double lambda_max, double tol, std::size_t n_malicious);

// Exactly floor(rho*|D|) uniformly chosen rows get the trigger written over
// their features and the label replaced by the target.
ClientDataset poison_dataset(const ClientDataset& client_data, const Trigger& trigger,
                             double rho, Rng& rng);

Vec backdoor_update(const ModelParams& model, const ClientDataset& poisoned_client_data,
                    double scale, const LocalParams& local, Rng& rng);

// Splits the trigger into 4 contiguous sub-triggers and assigns one per
// attacker, round-robin then shuffled.
std::vector<Trigger> dba_assign(const Trigger& trigger, std::size_t m1, Rng& rng);

struct RlAttackContext {
  Vec benign_mean_estimate;
  const ModelParams* model = nullptr;
  const ClientDataset* poisoned_data = nullptr;
  LocalParams local;
  std::uint64_t perturb_seed = 0;
  double lambda3_max = 3.0;     // norm-cap scale relative to the benign mean
  double brl_scale_max = 3.0;   // upper end of the backdoor scaling map
};

// Decodes the compressed 3-d attack action. Untargeted: a blend of the
// negated benign mean and a seeded perturbation direction, rescaled to
// lambda3 * ||mu||. Targeted: a scaled backdoor update pulled toward the
// benign mean and norm-capped. All controlled clients share the action.
AttackAction rl_attack_action_to_updates(const Vec& a3, AttackObjective objective,
                                         const RlAttackContext& ctx, std::size_t n_malicious);

struct AttackEvalAssets {
  std::vector<Dataset> targeted_poisoned;  // D'_i for the M1 targeted clients
  std::vector<Dataset> untargeted_clean;   // D_i for the M2 untargeted clients
  // Stealth bookkeeping for the adaptive targeted attacker.
  std::optional<Vec> malicious_update;
  std::optional<Vec> benign_mean;
};

// r_xi = -F'(w_hat); degenerate M1=0 or M2=0 drops the absent term. For BRL a
// stealth penalty lambda * ||update - benign mean|| joins the backdoor term.
double attack_reward(const AttackType& xi, const ModelParams& post_train_model,
                     const AttackEvalAssets& assets);

struct SurrogateReward {
  double reward = 0.0;
  int chosen_label = 0;
};

// Black-box -F'': minimum over candidate labels of the mean loss on triggered
// inputs, minus the untargeted term; ties break toward the lowest label id.
SurrogateReward surrogate_reward_blackbox(const ModelParams& post_train_model,
                                          const Dataset& triggered_eval_set,
                                          std::size_t n_classes,
                                          const std::vector<Dataset>& untargeted_sets = {});

}  // namespace metafl
