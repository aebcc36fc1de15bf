#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "metafl/game_env.hpp"
#include "metafl/policy.hpp"

namespace metafl {

// A small discrete Bayesian Stackelberg Markov game with enumerable
// trajectories; the ground truth every estimator is checked against.
struct TabularBSMG {
  std::size_t n_states = 2;
  std::size_t n_ad = 2;
  std::size_t n_aa = 2;
  std::size_t horizon = 2;
  double gamma = 0.99;
  std::size_t initial_state = 0;

  // transition[(s * n_ad + ad) * n_aa + aa][s'], rows sum to 1.
  std::vector<Vec> transition;
  // Per-type reward tables, flat over (s, ad, aa).
  struct TypeRewards {
    Vec r_d;
    Vec r_a;
  };
  std::vector<TypeRewards> types;

  std::size_t joint_index(std::size_t s, std::size_t ad, std::size_t aa) const {
    return (s * n_ad + ad) * n_aa + aa;
  }
  double r_d(std::size_t type, std::size_t s, std::size_t ad, std::size_t aa) const {
    return types[type].r_d[joint_index(s, ad, aa)];
  }
  double r_a(std::size_t type, std::size_t s, std::size_t ad, std::size_t aa) const {
    return types[type].r_a[joint_index(s, ad, aa)];
  }

  void check() const;
  // Verifies r_d = c * r_a + d entrywise for every type.
  bool strictly_competitive(double c, double d, double tol = 0.0) const;

  std::size_t trajectory_count() const;

  // Uniform-random instance; rewards drawn from [r_lo, r_hi].
  static TabularBSMG random(std::uint64_t seed, std::size_t n_states, std::size_t n_ad,
                            std::size_t n_aa, std::size_t n_types, std::size_t horizon,
                            double gamma, double r_lo, double r_hi);
  // Zero-sum variant: r_a = -r_d.
  static TabularBSMG zero_sum(std::uint64_t seed, std::size_t n_states, std::size_t n_ad,
                              std::size_t n_aa, std::size_t horizon, double gamma,
                              double r_scale);
  // The canonical defender-only MDP (3 states, 2 actions, H = 3, seed 42)
  // used by the estimator cross-checks, with its rewards shifted by a
  // constant so the reference policy's value is zero. Constant shifts leave
  // every gradient unchanged and keep the score-term variance small.
  static TabularBSMG reference_mdp();
};

// The reference policy paired with reference_mdp().
TabularSoftmaxPolicy reference_policy();

// One enumerated trajectory: (s_t, ad_t, aa_t) for t = 0..H-1, s_0 fixed.
struct TrajSkeleton {
  std::vector<std::array<std::size_t, 3>> steps;
};

// Canonical enumeration order shared by every exact computation, so that
// probability vectors over trajectories are index-compatible.
std::vector<TrajSkeleton> enumerate_skeletons(const TabularBSMG& game);

double skeleton_prob(const TabularBSMG& game, const TrajSkeleton& tau,
                     const TabularSoftmaxPolicy& theta, const TabularSoftmaxPolicy& phi);
// The residue factors after removing the defender policy: product of the
// attacker policy and transition terms.
double skeleton_residue(const TabularBSMG& game, const TrajSkeleton& tau,
                        const TabularSoftmaxPolicy& phi);
double skeleton_return(const TabularBSMG& game, const TrajSkeleton& tau, std::size_t type,
                       Player player);
// Sum over steps of grad log pi for the given player's policy.
Vec skeleton_score(const TabularBSMG& game, const TrajSkeleton& tau,
                   const TabularSoftmaxPolicy& policy, Player player);

// Exact trajectory distribution q(theta, phi); sums to 1 within 1e-12.
Vec enumerate_traj_dist(const TabularBSMG& game, const TabularSoftmaxPolicy& theta,
                        const TabularSoftmaxPolicy& phi);

// Theta-independent marginal residue table d_i over the same index space.
Vec marginal_residue(const TabularBSMG& game, const TabularSoftmaxPolicy& phi);

struct ValueGrad {
  double value = 0.0;
  Vec grad;
};

// Exact J and its exact policy gradient for one player, by enumeration.
ValueGrad exact_value_and_grad(const TabularBSMG& game, const TabularSoftmaxPolicy& theta,
                               const TabularSoftmaxPolicy& phi, std::size_t type,
                               Player player);

// Exact meta value E_tau[ J_D(theta + eta * g(tau; theta)) ] with
// single-trajectory adaptation, enumerated without sampling.
double exact_meta_value(const TabularBSMG& game, const TabularSoftmaxPolicy& theta,
                        const TabularSoftmaxPolicy& phi, std::size_t type, double eta);

// Exact gradient of exact_meta_value in theta (the defender's L_D gradient).
Vec exact_meta_grad_defender(const TabularBSMG& game, const TabularSoftmaxPolicy& theta,
                             const TabularSoftmaxPolicy& phi, std::size_t type, double eta);

// Exact gradient in phi of L_A = E_tau[ J_A(theta + eta * g_D(tau), phi) ].
Vec exact_meta_grad_attacker(const TabularBSMG& game, const TabularSoftmaxPolicy& theta,
                             const TabularSoftmaxPolicy& phi, std::size_t type, double eta);

// Total variation (1/2) sum |p - q| over a shared support index.
double tv_distance(const Vec& p, const Vec& q);

struct BoundCheck {
  double lhs = 0.0;
  double bound = 0.0;
  double grad_bound = 0.0;  // the G used inside the bound
  bool holds = false;
};

// Proposition-style generalization check: |V_hat_{m+1} - V_hat| against the
// TV-based distance C(d_{m+1}, {d_i}). Defender rewards of `type` are shared
// by all attacker policies.
BoundCheck generalization_bound_check(const TabularBSMG& game,
                                      const TabularSoftmaxPolicy& theta,
                                      const std::vector<TabularSoftmaxPolicy>& phis,
                                      const TabularSoftmaxPolicy& phi_new, double eta,
                                      std::size_t type = 0);

struct FoseResidual {
  double defender = 0.0;
  double attacker = 0.0;  // max over adaptive types
};

// Exact first-order equilibrium residuals: norm of the Q-averaged defender
// meta gradient and the max attacker meta-gradient norm.
FoseResidual fose_residual_exact(const TabularBSMG& game, const TabularSoftmaxPolicy& theta,
                                 const std::vector<TabularSoftmaxPolicy>& phis,
                                 const Vec& type_weights, double eta);

struct PlProbe {
  double mu_defender = 0.0;
  double mu_attacker = 0.0;
};

// Largest mu satisfying the gradient-dominance inequality over the sampled
// (value, grad-norm) pairs; +inf when every gap is negligible.
double pl_mu_from_samples(const std::vector<std::pair<double, double>>& value_and_gradsq,
                          double gap_tol = 1e-9);

// Grid probe of the gradient-dominance constant for L_D and L_A in phi.
PlProbe pl_probe(const TabularBSMG& game, const std::vector<TabularSoftmaxPolicy>& theta_grid,
                 const std::vector<TabularSoftmaxPolicy>& phi_grid, std::size_t type,
                 double eta);

// Samples one trajectory; the bridge between the exact world and the
// sampling estimators.
Trajectory sample_tabular_trajectory(const TabularBSMG& game, const TabularSoftmaxPolicy& theta,
                                     const TabularSoftmaxPolicy& phi, std::size_t type,
                                     Rng& rng);

// GameEnv adapter so the meta-training loops can run on tabular games.
class TabularGameEnv : public GameEnv {
 public:
  TabularGameEnv(TabularBSMG game, Vec type_weights, bool adaptive_types = true);

  double gamma() const override { return game_.gamma; }
  std::size_t horizon() const override { return game_.horizon; }
  std::size_t obs_dim() const override { return 1; }
  std::size_t defender_action_dim() const override { return 1; }
  std::size_t attacker_action_dim() const override { return 1; }
  std::size_t n_types() const override { return game_.types.size(); }
  bool type_adaptive(std::size_t) const override { return adaptive_; }
  double type_weight(std::size_t type) const override { return weights_[type]; }

  Trajectory rollout(const StochasticPolicy& theta, const StochasticPolicy* phi,
                     std::size_t type, std::uint64_t seed) const override;

  std::unique_ptr<StochasticPolicy> make_defender_policy(std::uint64_t seed) const override;
  std::unique_ptr<StochasticPolicy> make_attacker_policy(std::size_t type,
                                                         std::uint64_t seed) const override;

  const TabularBSMG& game() const { return game_; }
  // Fixed strategy used when a type is driven without a policy.
  void set_fixed_attacker(std::size_t type, TabularSoftmaxPolicy phi);
  const TabularSoftmaxPolicy& fixed_attacker(std::size_t type) const;

 private:
  TabularBSMG game_;
  Vec weights_;
  bool adaptive_;
  std::vector<TabularSoftmaxPolicy> fixed_;
};

}  // namespace metafl
