#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "metafl/common.hpp"
#include "metafl/fl_core.hpp"
#include "metafl/rng.hpp"

namespace metafl {

enum class Player { defender, attacker };

// One environment step as recorded in a trajectory. Actions are stored as
// flat vectors; discrete actions carry the index in a 1-vector.
struct StepRecord {
  Vec obs;
  Vec action_d;
  Vec action_a;
  double r_d = 0.0;
  double r_a = 0.0;
  double logp_d = 0.0;
  double logp_a = 0.0;
};

struct Trajectory {
  std::vector<StepRecord> steps;
  std::string type_tag;

  std::size_t horizon() const { return steps.size(); }
  double reward(std::size_t t, Player p) const {
    return p == Player::defender ? steps[t].r_d : steps[t].r_a;
  }
  const Vec& action(std::size_t t, Player p) const {
    return p == Player::defender ? steps[t].action_d : steps[t].action_a;
  }
  double log_prob(std::size_t t, Player p) const {
    return p == Player::defender ? steps[t].logp_d : steps[t].logp_a;
  }
  // Discounted return sum_t gamma^t r_t with t counted from 0.
  double ret(Player p, double gamma) const;
};

// Stochastic policy over a box or discrete action space. Parameters live in a
// single flat vector so the estimators can treat every policy uniformly.
class StochasticPolicy {
 public:
  virtual ~StochasticPolicy() = default;

  virtual std::size_t n_params() const = 0;
  virtual const Vec& params() const = 0;
  virtual void set_params(const Vec& p) = 0;
  virtual std::size_t obs_dim() const = 0;
  virtual std::size_t action_dim() const = 0;

  virtual std::pair<Vec, double> sample(const Vec& obs, Rng& rng) const = 0;
  virtual double log_prob(const Vec& obs, const Vec& action) const = 0;
  virtual Vec logprob_grad(const Vec& obs, const Vec& action) const = 0;

  // Hessian of log pi wrt parameters. Policies without an analytic second
  // derivative fall back to directional differences of the exact gradient.
  virtual Mat logprob_hessian(const Vec& obs, const Vec& action) const;
  // Directional derivative of logprob_grad along v.
  virtual Vec logprob_grad_dir(const Vec& obs, const Vec& action, const Vec& v) const;

  virtual std::unique_ptr<StochasticPolicy> clone() const = 0;
};

// Dense tanh network emitting the mean of a diagonal Gaussian, squashed to
// the [0,1]^k box; per-dimension log-std parameters sit after the net
// weights and are clamped to [-5, 2] when used.
class GaussianMlpPolicy : public StochasticPolicy {
 public:
  GaussianMlpPolicy(std::size_t obs_dim, std::size_t hidden, std::size_t action_dim,
                    std::uint64_t seed, double init_scale = 0.1);

  std::size_t n_params() const override { return params_.size(); }
  const Vec& params() const override { return params_; }
  void set_params(const Vec& p) override;
  std::size_t obs_dim() const override { return layout_.input_dim(); }
  std::size_t action_dim() const override { return k_; }

  std::pair<Vec, double> sample(const Vec& obs, Rng& rng) const override;
  double log_prob(const Vec& obs, const Vec& action) const override;
  Vec logprob_grad(const Vec& obs, const Vec& action) const override;
  std::unique_ptr<StochasticPolicy> clone() const override;

  // Squashed mean action, the sigma -> 0 limit of sample().
  Vec mean_action(const Vec& obs) const;

  const ModelLayout& layout() const { return layout_; }

 private:
  ModelLayout layout_;
  std::size_t k_;
  Vec params_;  // [net weights..., log_std (k)]

  Vec net_mean(const Vec& obs) const;
  double effective_logstd(std::size_t dim, bool* active) const;
};

// Per-state softmax over discrete actions; the exact-enumeration policy
// class. Observations carry the state index in a 1-vector.
class TabularSoftmaxPolicy : public StochasticPolicy {
 public:
  TabularSoftmaxPolicy(std::size_t n_states, std::size_t n_actions);

  std::size_t n_params() const override { return params_.size(); }
  const Vec& params() const override { return params_; }
  void set_params(const Vec& p) override;
  std::size_t obs_dim() const override { return 1; }
  std::size_t action_dim() const override { return 1; }
  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }

  std::pair<Vec, double> sample(const Vec& obs, Rng& rng) const override;
  double log_prob(const Vec& obs, const Vec& action) const override;
  Vec logprob_grad(const Vec& obs, const Vec& action) const override;
  Mat logprob_hessian(const Vec& obs, const Vec& action) const override;
  Vec logprob_grad_dir(const Vec& obs, const Vec& action, const Vec& v) const override;
  std::unique_ptr<StochasticPolicy> clone() const override;

  Vec probs(std::size_t state) const;
  double prob(std::size_t state, std::size_t action) const { return probs(state)[action]; }

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  Vec params_;  // logits, state-major
};

// FNV-1a over the raw parameter bytes; used to tag batch provenance.
std::uint64_t params_checksum(const Vec& params);

// Checkpoint format: a text header describing the policy kind and shape,
// then one full-precision parameter per line.
void save_policy(const StochasticPolicy& policy, const std::string& path,
                 std::uint64_t seed, const std::string& config_hash);
std::unique_ptr<StochasticPolicy> load_policy(const std::string& path);

}  // namespace metafl
