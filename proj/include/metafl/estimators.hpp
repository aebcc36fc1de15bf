#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "metafl/policy.hpp"

namespace metafl {

struct GradEstimate {
  Vec grad;
  std::size_t batch_size = 0;
  std::string tag;
};

enum class PgMode { vanilla, reward_to_go_baseline };

double batch_mean_return(const std::vector<Trajectory>& trajs, Player player, double gamma);

// Monte-Carlo policy gradient. Vanilla is the literal score-times-return
// estimator; reward_to_go_baseline keeps per-step returns and subtracts a
// leave-one-out batch baseline, same expectation with less variance.
GradEstimate pg_estimate(const std::vector<Trajectory>& trajs, const StochasticPolicy& policy,
                         Player player, double gamma, PgMode mode = PgMode::vanilla);

struct HessianEstimate {
  Mat hessian;  // symmetrized
  Mat raw;
  std::size_t batch_size = 0;
};

// Sample estimate of the value Hessian: mean of g(tau) score(tau)^T plus the
// pathwise R * sum_t Hess log pi term. Dense, guarded by the parameter cap.
HessianEstimate hessian_estimate(const std::vector<Trajectory>& trajs,
                                 const StochasticPolicy& policy, Player player, double gamma,
                                 std::size_t dense_cap = 2000);

// H^T v for the raw (unsymmetrized) Hessian estimate, without materializing
// the matrix; this is all the debiased meta gradient needs at scale.
Vec hessian_transpose_vp(const std::vector<Trajectory>& trajs, const StochasticPolicy& policy,
                         Player player, double gamma, const Vec& v);

using TrajectorySampler = std::function<std::vector<Trajectory>(const StochasticPolicy&)>;

// Rescales g to norm grad_clip when it exceeds it; 0 disables.
void clip_gradient(Vec& g, double grad_clip);

// l sequential policy-gradient ascent steps, fresh trajectories per step.
std::unique_ptr<StochasticPolicy> adapt(const StochasticPolicy& policy,
                                        const TrajectorySampler& fresh_batch, double eta,
                                        std::size_t steps, Player player, double gamma,
                                        PgMode mode = PgMode::reward_to_go_baseline,
                                        double grad_clip = 0.0);

// A trajectory batch stamped with the checksum of the policy that produced
// it, so estimator preconditions on batch provenance are checkable.
struct TaggedBatch {
  std::vector<Trajectory> trajs;
  std::uint64_t provenance = 0;
};

TaggedBatch tag_batch(std::vector<Trajectory> trajs, const StochasticPolicy& sampled_under);

// theta' = theta + eta * vanilla-pg(batch1); the adaptation map shared by the
// debiased estimator and its callers.
std::unique_ptr<StochasticPolicy> one_step_adapted(const StochasticPolicy& theta,
                                                   const TaggedBatch& batch1, double eta,
                                                   Player player, double gamma);

// Chain-rule meta-gradient estimate from two sampling rounds: batch1 under
// theta (adaptation and curvature), batch2 under theta' (inner gradient and
// value). The pathwise Jacobian uses the R * Hess log pi part of the
// curvature estimate; the score outer product belongs to the value Hessian
// but double-counts the distribution term here, so it is excluded unless
// paper_full_hessian is set. baseline_term2 opts into a leave-one-out value
// baseline and is excluded from unbiasedness checks.
GradEstimate debiased_meta_grad(const StochasticPolicy& theta, double eta,
                                const TaggedBatch& batch1, const TaggedBatch& batch2,
                                Player player, double gamma, bool paper_full_hessian = false,
                                bool baseline_term2 = false);

}  // namespace metafl
