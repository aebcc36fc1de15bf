#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metafl/config.hpp"

namespace metafl {

enum class Stage { pretrain, adapt, evaluate };

std::vector<Stage> parse_stages(const std::string& csv);

struct RunArtifact {
  std::string out_dir;
  std::string config_snapshot_path;
  std::string checkpoint_path;          // final policy (empty if none)
  std::string pretrain_log_path;        // empty if stage skipped
  std::string adapt_log_path;
  std::string metrics_path;             // per-round evaluation CSV
  std::string config_hash;
  std::uint64_t seed = 0;
  double final_defender_return = 0.0;
  Metrics final_test_metrics;
  std::string version = "metafl-1";
};

// Fixed-action policy: always plays the same compressed action. Serves as
// the no-learning baseline defense.
class FixedActionPolicy : public StochasticPolicy {
 public:
  FixedActionPolicy(std::size_t obs_dim, Vec action);
  std::size_t n_params() const override { return action_.size(); }
  const Vec& params() const override { return action_; }
  void set_params(const Vec& p) override { action_ = p; }
  std::size_t obs_dim() const override { return obs_dim_; }
  std::size_t action_dim() const override { return action_.size(); }
  std::pair<Vec, double> sample(const Vec&, Rng&) const override { return {action_, 0.0}; }
  double log_prob(const Vec&, const Vec&) const override { return 0.0; }
  Vec logprob_grad(const Vec&, const Vec&) const override {
    return Vec(action_.size(), 0.0);
  }
  std::unique_ptr<StochasticPolicy> clone() const override {
    return std::make_unique<FixedActionPolicy>(*this);
  }

 private:
  std::size_t obs_dim_;
  Vec action_;
};

// Runs the requested stages of Fig-1's pipeline: pretrain in the simulated
// domain, online adaptation against the live attack, evaluation with
// per-round metrics. init_mode: "checkpoint" (default) or "random".
RunArtifact run_pipeline(const ExperimentConfig& config, const std::vector<Stage>& stages,
                         const std::string& init_mode = "checkpoint",
                         const std::string& out_dir_override = "");

// One (defense, attack) accuracy/backdoor cell per pair over the configured
// rounds; both over-rounds means and final-round values are emitted.
struct MatrixCell {
  std::string attack;
  std::string defense;
  double acc_mean = 0.0;
  double acc_final = 0.0;
  double bac_mean = 0.0;
  double bac_final = 0.0;
};

std::vector<MatrixCell> run_baseline_matrix(const ExperimentConfig& config,
                                            const std::vector<std::string>& defenses,
                                            const std::vector<AttackType>& attacks);
void save_matrix_csv(const std::vector<MatrixCell>& cells,
                     const std::vector<std::string>& defenses, const std::string& path);

std::vector<std::string> builtin_matrix_defenses();

// Per-round metrics CSV (the schema every artifact shares).
void save_metrics_csv(const std::string& path, const std::string& run_id,
                      const std::vector<StepResult>& rounds);

// Trajectory dump: one row per step with rewards, action components, norms.
void save_trajectories_csv(const std::string& path, const std::vector<Trajectory>& trajs);

}  // namespace metafl
