#include "metafl/estimators.hpp"

#include <cmath>

namespace metafl {

namespace {

void check_batch(const std::vector<Trajectory>& trajs) {
  require(!trajs.empty(), Errc::data, "estimator: empty trajectory batch");
  const std::size_t h = trajs.front().horizon();
  for (const auto& t : trajs)
    require(t.horizon() == h, Errc::data, "estimator: mixed trajectory horizons");
}

Vec traj_score(const Trajectory& tau, const StochasticPolicy& policy, Player player) {
  Vec score(policy.n_params(), 0.0);
  for (std::size_t t = 0; t < tau.horizon(); ++t)
    axpy(1.0, policy.logprob_grad(tau.steps[t].obs, tau.action(t, player)), score);
  return score;
}

}  // namespace

double batch_mean_return(const std::vector<Trajectory>& trajs, Player player, double gamma) {
  double s = 0.0;
  for (const auto& t : trajs) s += t.ret(player, gamma);
  return s / static_cast<double>(trajs.size());
}

GradEstimate pg_estimate(const std::vector<Trajectory>& trajs, const StochasticPolicy& policy,
                         Player player, double gamma, PgMode mode) {
  check_batch(trajs);
  const std::size_t n = trajs.size();
  const std::size_t h = trajs.front().horizon();

  GradEstimate out;
  out.batch_size = n;
  out.grad.assign(policy.n_params(), 0.0);

  if (mode == PgMode::vanilla) {
    out.tag = "pg";
    for (const auto& tau : trajs)
      axpy(tau.ret(player, gamma) / static_cast<double>(n), traj_score(tau, policy, player),
           out.grad);
    return out;
  }

  out.tag = "pg-baseline";
  // Absolute-discount rewards-to-go G_t = sum_{t'>=t} gamma^{t'} r_{t'};
  // dropping the past-reward terms keeps the expectation of the vanilla form.
  std::vector<Vec> togo(n, Vec(h, 0.0));
  Vec totals(h, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    double disc = std::pow(gamma, static_cast<double>(h - 1));
    for (std::size_t t = h; t-- > 0;) {
      acc += disc * trajs[i].reward(t, player);
      togo[i][t] = acc;
      disc /= gamma > 0.0 ? gamma : 1.0;
    }
    for (std::size_t t = 0; t < h; ++t) totals[t] += togo[i][t];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& tau = trajs[i];
    for (std::size_t t = 0; t < h; ++t) {
      const double baseline =
          n > 1 ? (totals[t] - togo[i][t]) / static_cast<double>(n - 1) : 0.0;
      const double advantage = togo[i][t] - baseline;
      axpy(advantage / static_cast<double>(n),
           policy.logprob_grad(tau.steps[t].obs, tau.action(t, player)), out.grad);
    }
  }
  return out;
}

HessianEstimate hessian_estimate(const std::vector<Trajectory>& trajs,
                                 const StochasticPolicy& policy, Player player, double gamma,
                                 std::size_t dense_cap) {
  check_batch(trajs);
  const std::size_t p = policy.n_params();
  require(p <= dense_cap, Errc::capability,
          "hessian_estimate: parameter count exceeds the dense cap");

  HessianEstimate out;
  out.batch_size = trajs.size();
  out.raw = Mat(p, p);
  const double inv_n = 1.0 / static_cast<double>(trajs.size());

  for (const auto& tau : trajs) {
    const double R = tau.ret(player, gamma);
    Vec score = traj_score(tau, policy, player);
    // g(tau) score(tau)^T with g = score * R.
    for (std::size_t i = 0; i < p; ++i) {
      const double gi = score[i] * R;
      if (gi == 0.0) continue;
      for (std::size_t j = 0; j < p; ++j) out.raw.at(i, j) += inv_n * gi * score[j];
    }
    // Pathwise R * sum_t Hess log pi.
    for (std::size_t t = 0; t < tau.horizon(); ++t) {
      Mat Ht = policy.logprob_hessian(tau.steps[t].obs, tau.action(t, player));
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) out.raw.at(i, j) += inv_n * R * Ht.at(i, j);
    }
  }

  out.hessian = Mat(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j)
      out.hessian.at(i, j) = 0.5 * (out.raw.at(i, j) + out.raw.at(j, i));
  return out;
}

Vec hessian_transpose_vp(const std::vector<Trajectory>& trajs, const StochasticPolicy& policy,
                         Player player, double gamma, const Vec& v) {
  check_batch(trajs);
  require(v.size() == policy.n_params(), Errc::shape, "hessian_transpose_vp: bad vector size");
  Vec out(v.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(trajs.size());
  for (const auto& tau : trajs) {
    const double R = tau.ret(player, gamma);
    Vec score = traj_score(tau, policy, player);
    // (g score^T)^T v = score * (g . v) with g = score * R.
    axpy(inv_n * R * dot(score, v), score, out);
    for (std::size_t t = 0; t < tau.horizon(); ++t)
      axpy(inv_n * R, policy.logprob_grad_dir(tau.steps[t].obs, tau.action(t, player), v), out);
  }
  return out;
}

void clip_gradient(Vec& g, double grad_clip) {
  if (grad_clip <= 0.0) return;
  const double n = norm2(g);
  if (n > grad_clip) scale(g, grad_clip / n);
}

std::unique_ptr<StochasticPolicy> adapt(const StochasticPolicy& policy,
                                        const TrajectorySampler& fresh_batch, double eta,
                                        std::size_t steps, Player player, double gamma,
                                        PgMode mode, double grad_clip) {
  auto current = policy.clone();
  for (std::size_t k = 0; k < steps; ++k) {
    auto batch = fresh_batch(*current);
    GradEstimate g = pg_estimate(batch, *current, player, gamma, mode);
    clip_gradient(g.grad, grad_clip);
    Vec p = current->params();
    axpy(eta, g.grad, p);
    current->set_params(p);
  }
  return current;
}

TaggedBatch tag_batch(std::vector<Trajectory> trajs, const StochasticPolicy& sampled_under) {
  TaggedBatch b;
  b.trajs = std::move(trajs);
  b.provenance = params_checksum(sampled_under.params());
  return b;
}

std::unique_ptr<StochasticPolicy> one_step_adapted(const StochasticPolicy& theta,
                                                   const TaggedBatch& batch1, double eta,
                                                   Player player, double gamma) {
  require(batch1.provenance == params_checksum(theta.params()), Errc::protocol,
          "one_step_adapted: batch1 was not sampled under theta");
  GradEstimate g = pg_estimate(batch1.trajs, theta, player, gamma, PgMode::vanilla);
  auto adapted = theta.clone();
  Vec p = adapted->params();
  axpy(eta, g.grad, p);
  adapted->set_params(p);
  return adapted;
}

GradEstimate debiased_meta_grad(const StochasticPolicy& theta, double eta,
                                const TaggedBatch& batch1, const TaggedBatch& batch2,
                                Player player, double gamma, bool paper_full_hessian,
                                bool baseline_term2) {
  require(batch1.provenance == params_checksum(theta.params()), Errc::protocol,
          "debiased_meta_grad: batch1 was not sampled under theta");
  check_batch(batch1.trajs);
  check_batch(batch2.trajs);

  auto theta_prime = one_step_adapted(theta, batch1, eta, player, gamma);
  require(batch2.provenance == params_checksum(theta_prime->params()), Errc::protocol,
          "debiased_meta_grad: batch2 was not sampled under the adapted policy");

  // Term 1: (I + eta * Jacobian)^T grad J(theta').
  const Vec v2 = pg_estimate(batch2.trajs, *theta_prime, player, gamma, PgMode::vanilla).grad;
  Vec term1 = v2;
  {
    const double inv_n = 1.0 / static_cast<double>(batch1.trajs.size());
    Vec jv(v2.size(), 0.0);
    for (const auto& tau : batch1.trajs) {
      const double R = tau.ret(player, gamma);
      if (paper_full_hessian) {
        Vec score = traj_score(tau, theta, player);
        axpy(inv_n * R * dot(score, v2), score, jv);
      }
      for (std::size_t t = 0; t < tau.horizon(); ++t)
        axpy(inv_n * R, theta.logprob_grad_dir(tau.steps[t].obs, tau.action(t, player), v2),
             jv);
    }
    axpy(eta, jv, term1);
  }

  // Term 2: J(theta') times the score of the adaptation batch.
  const double j_prime = batch_mean_return(batch2.trajs, player, gamma);
  GradEstimate out;
  out.batch_size = batch1.trajs.size();
  out.tag = "debiased-meta";
  out.grad = term1;
  const std::size_t n1 = batch1.trajs.size();
  double return_total = 0.0;
  if (baseline_term2)
    for (const auto& tau : batch1.trajs) return_total += tau.ret(player, gamma);
  for (const auto& tau : batch1.trajs) {
    double value = j_prime;
    if (baseline_term2 && n1 > 1)
      value -= (return_total - tau.ret(player, gamma)) / static_cast<double>(n1 - 1);
    axpy(value, traj_score(tau, theta, player), out.grad);
  }
  return out;
}

}  // namespace metafl
