#include "metafl/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace metafl {

namespace {

constexpr std::size_t kEnumGuard = 1000000;
constexpr std::size_t kMetaGuard = 6000;  // meta computations are quadratic in this

Vec obs_of(std::size_t s) { return Vec{static_cast<double>(s)}; }
Vec act_of(std::size_t a) { return Vec{static_cast<double>(a)}; }

}  // namespace

void TabularBSMG::check() const {
  require(n_states > 0 && n_ad > 0 && n_aa > 0 && horizon >= 1, Errc::config,
          "tabular game: empty dimensions");
  require(gamma > 0.0 && gamma <= 1.0, Errc::config, "tabular game: gamma must lie in (0,1]");
  require(initial_state < n_states, Errc::config, "tabular game: bad initial state");
  require(transition.size() == n_states * n_ad * n_aa, Errc::config,
          "tabular game: transition table size mismatch");
  for (const Vec& row : transition) {
    require(row.size() == n_states, Errc::config, "tabular game: transition row size mismatch");
    double s = 0.0;
    for (double p : row) {
      require(p >= 0.0, Errc::config, "tabular game: negative transition probability");
      s += p;
    }
    require(std::abs(s - 1.0) <= 1e-9, Errc::config, "tabular game: transition row not normalized");
  }
  require(!types.empty(), Errc::config, "tabular game: needs at least one type");
  for (const auto& t : types)
    require(t.r_d.size() == n_states * n_ad * n_aa && t.r_a.size() == t.r_d.size(),
            Errc::config, "tabular game: reward table size mismatch");
}

bool TabularBSMG::strictly_competitive(double c, double d, double tol) const {
  for (const auto& t : types)
    for (std::size_t i = 0; i < t.r_d.size(); ++i)
      if (std::abs(t.r_d[i] - (c * t.r_a[i] + d)) > tol) return false;
  return true;
}

std::size_t TabularBSMG::trajectory_count() const {
  double count = 1.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    count *= static_cast<double>(n_ad * n_aa);
    if (t + 1 < horizon) count *= static_cast<double>(n_states);
  }
  require(count <= static_cast<double>(kEnumGuard), Errc::capability,
          "tabular game: trajectory space exceeds the enumeration guard");
  return static_cast<std::size_t>(count);
}

TabularBSMG TabularBSMG::random(std::uint64_t seed, std::size_t n_states, std::size_t n_ad,
                                std::size_t n_aa, std::size_t n_types, std::size_t horizon,
                                double gamma, double r_lo, double r_hi) {
  TabularBSMG g;
  g.n_states = n_states;
  g.n_ad = n_ad;
  g.n_aa = n_aa;
  g.horizon = horizon;
  g.gamma = gamma;
  Rng rng(derive_seed(seed, 0x67616d65ULL));
  g.transition.assign(n_states * n_ad * n_aa, Vec(n_states, 0.0));
  for (Vec& row : g.transition) {
    double sum = 0.0;
    for (double& p : row) {
      p = 0.05 + rng.uniform01();
      sum += p;
    }
    for (double& p : row) p /= sum;
  }
  g.types.resize(n_types);
  for (auto& t : g.types) {
    t.r_d.resize(n_states * n_ad * n_aa);
    t.r_a.resize(t.r_d.size());
    for (double& r : t.r_d) r = rng.uniform(r_lo, r_hi);
    for (double& r : t.r_a) r = rng.uniform(r_lo, r_hi);
  }
  g.check();
  return g;
}

TabularBSMG TabularBSMG::zero_sum(std::uint64_t seed, std::size_t n_states, std::size_t n_ad,
                                  std::size_t n_aa, std::size_t horizon, double gamma,
                                  double r_scale) {
  TabularBSMG g = random(seed, n_states, n_ad, n_aa, 1, horizon, gamma, -r_scale, r_scale);
  for (auto& t : g.types)
    for (std::size_t i = 0; i < t.r_d.size(); ++i) t.r_a[i] = -t.r_d[i];
  return g;
}

TabularSoftmaxPolicy reference_policy() {
  TabularSoftmaxPolicy p(3, 2);
  Rng rng(3);
  Vec logits(p.n_params());
  for (double& v : logits) v = 0.7 * rng.normal();
  p.set_params(logits);
  return p;
}

TabularBSMG TabularBSMG::reference_mdp() {
  TabularBSMG g = random(42, 3, 2, 1, 1, 3, 0.99, -0.5, 0.5);
  TabularSoftmaxPolicy theta = reference_policy();
  TabularSoftmaxPolicy phi(3, 1);
  const double value = exact_value_and_grad(g, theta, phi, 0, Player::defender).value;
  const double span = (1.0 - std::pow(g.gamma, static_cast<double>(g.horizon))) / (1.0 - g.gamma);
  for (auto& t : g.types)
    for (double& r : t.r_d) r -= value / span;
  return g;
}

std::vector<TrajSkeleton> enumerate_skeletons(const TabularBSMG& game) {
  game.check();
  const std::size_t count = game.trajectory_count();
  std::vector<TrajSkeleton> out;
  out.reserve(count);

  TrajSkeleton cur;
  cur.steps.resize(game.horizon);
  // DFS in canonical order: ad, then aa, then next state.
  auto rec = [&](auto&& self, std::size_t t, std::size_t s) -> void {
    if (t == game.horizon) {
      out.push_back(cur);
      return;
    }
    for (std::size_t ad = 0; ad < game.n_ad; ++ad) {
      for (std::size_t aa = 0; aa < game.n_aa; ++aa) {
        cur.steps[t] = {s, ad, aa};
        if (t + 1 == game.horizon) {
          self(self, t + 1, 0);
        } else {
          for (std::size_t sn = 0; sn < game.n_states; ++sn) self(self, t + 1, sn);
        }
      }
    }
  };
  rec(rec, 0, game.initial_state);
  return out;
}

double skeleton_prob(const TabularBSMG& game, const TrajSkeleton& tau,
                     const TabularSoftmaxPolicy& theta, const TabularSoftmaxPolicy& phi) {
  double p = 1.0;
  for (std::size_t t = 0; t < tau.steps.size(); ++t) {
    const auto [s, ad, aa] = tau.steps[t];
    p *= theta.prob(s, ad) * phi.prob(s, aa);
    if (t + 1 < tau.steps.size())
      p *= game.transition[game.joint_index(s, ad, aa)][tau.steps[t + 1][0]];
  }
  return p;
}

double skeleton_residue(const TabularBSMG& game, const TrajSkeleton& tau,
                        const TabularSoftmaxPolicy& phi) {
  double p = 1.0;
  for (std::size_t t = 0; t < tau.steps.size(); ++t) {
    const auto [s, ad, aa] = tau.steps[t];
    (void)ad;
    p *= phi.prob(s, aa);
    if (t + 1 < tau.steps.size())
      p *= game.transition[game.joint_index(s, ad, aa)][tau.steps[t + 1][0]];
  }
  return p;
}

double skeleton_return(const TabularBSMG& game, const TrajSkeleton& tau, std::size_t type,
                       Player player) {
  double total = 0.0;
  double disc = 1.0;
  for (const auto& [s, ad, aa] : tau.steps) {
    total += disc * (player == Player::defender ? game.r_d(type, s, ad, aa)
                                                : game.r_a(type, s, ad, aa));
    disc *= game.gamma;
  }
  return total;
}

Vec skeleton_score(const TabularBSMG& game, const TrajSkeleton& tau,
                   const TabularSoftmaxPolicy& policy, Player player) {
  (void)game;
  Vec score(policy.n_params(), 0.0);
  for (const auto& [s, ad, aa] : tau.steps) {
    const std::size_t a = player == Player::defender ? ad : aa;
    axpy(1.0, policy.logprob_grad(obs_of(s), act_of(a)), score);
  }
  return score;
}

Vec enumerate_traj_dist(const TabularBSMG& game, const TabularSoftmaxPolicy& theta,
                        const TabularSoftmaxPolicy& phi) {
  const auto skels = enumerate_skeletons(game);
  Vec probs(skels.size());
  for (std::size_t i = 0; i < skels.size(); ++i)
    probs[i] = skeleton_prob(game, skels[i], theta, phi);
  return probs;
}

Vec marginal_residue(const TabularBSMG& game, const TabularSoftmaxPolicy& phi) {
  const auto skels = enumerate_skeletons(game);
  Vec res(skels.size());
  for (std::size_t i = 0; i < skels.size(); ++i)
    res[i] = skeleton_residue(game, skels[i], phi);
  return res;
}

ValueGrad exact_value_and_grad(const TabularBSMG& game, const TabularSoftmaxPolicy& theta,
                               const TabularSoftmaxPolicy& phi, std::size_t type,
                               Player player) {
  const auto skels = enumerate_skeletons(game);
  const TabularSoftmaxPolicy& own = player == Player::defender ? theta : phi;
  ValueGrad out;
  out.grad.assign(own.n_params(), 0.0);
  for (const auto& tau : skels) {
    const double q = skeleton_prob(game, tau, theta, phi);
    if (q == 0.0) continue;
    const double R = skeleton_return(game, tau, type, player);
    out.value += q * R;
    axpy(q * R, skeleton_score(game, tau, own, player), out.grad);
  }
  return out;
}

namespace {

TabularSoftmaxPolicy adapted_defender(const TabularBSMG& game, const TrajSkeleton& tau,
                                      const TabularSoftmaxPolicy& theta, std::size_t type,
                                      double eta) {
  const double R = skeleton_return(game, tau, type, Player::defender);
  Vec g = skeleton_score(game, tau, theta, Player::defender);
  Vec p = theta.params();
  axpy(eta * R, g, p);
  TabularSoftmaxPolicy out = theta;
  out.set_params(p);
  return out;
}

void meta_guard(const TabularBSMG& game) {
  require(game.trajectory_count() <= kMetaGuard, Errc::capability,
          "tabular game: too large for exact meta-value enumeration");
}

}  // namespace

double exact_meta_value(const TabularBSMG& game, const TabularSoftmaxPolicy& theta,
                        const TabularSoftmaxPolicy& phi, std::size_t type, double eta) {
  meta_guard(game);
  const auto skels = enumerate_skeletons(game);
  double total = 0.0;
  for (const auto& tau : skels) {
    const double q = skeleton_prob(game, tau, theta, phi);
    if (q == 0.0) continue;
    TabularSoftmaxPolicy adapted = adapted_defender(game, tau, theta, type, eta);
    total += q * exact_value_and_grad(game, adapted, phi, type, Player::defender).value;
  }
  return total;
}

namespace {

// Exact gradient of J_{value_of}(defender_policy, phi) with respect to the
// player named by grad_wrt, holding the other policy fixed.
Vec exact_grad_wrt(const TabularBSMG& game, const std::vector<TrajSkeleton>& skels,
                   const TabularSoftmaxPolicy& defender_policy, const TabularSoftmaxPolicy& phi,
                   std::size_t type, Player grad_wrt, Player value_of) {
  const TabularSoftmaxPolicy& own = grad_wrt == Player::defender ? defender_policy : phi;
  Vec acc(own.n_params(), 0.0);
  for (const auto& tau : skels) {
    const double q = skeleton_prob(game, tau, defender_policy, phi);
    if (q == 0.0) continue;
    const double R = skeleton_return(game, tau, type, value_of);
    axpy(q * R, skeleton_score(game, tau, own, grad_wrt), acc);
  }
  return acc;
}

// Shared body for the meta-gradient combinations. The adaptation step is
// always the defender's single-trajectory gradient theta + eta * g_D(tau).
Vec exact_meta_grad(const TabularBSMG& game, const TabularSoftmaxPolicy& theta,
                    const TabularSoftmaxPolicy& phi, std::size_t type, double eta,
                    Player grad_wrt, Player value_of) {
  meta_guard(game);
  const auto skels = enumerate_skeletons(game);
  const TabularSoftmaxPolicy& own = grad_wrt == Player::defender ? theta : phi;
  Vec total(own.n_params(), 0.0);

  for (const auto& tau : skels) {
    const double q = skeleton_prob(game, tau, theta, phi);
    if (q == 0.0) continue;
    TabularSoftmaxPolicy adapted = adapted_defender(game, tau, theta, type, eta);
    const double inner_value =
        exact_value_and_grad(game, adapted, phi, type, value_of).value;

    // Distribution term: score of the differentiated player times the value.
    axpy(q * inner_value, skeleton_score(game, tau, own, grad_wrt), total);

    if (grad_wrt == Player::defender) {
      // Pathwise term (I + eta * dg_D/dtheta) v, where v is the exact
      // gradient of the inner value wrt the defender policy at the adapted
      // point, and dg_D/dtheta = R_D(tau) * sum_t Hess log pi_D.
      Vec v = exact_grad_wrt(game, skels, adapted, phi, type, Player::defender, value_of);
      Vec term = v;
      const double r_d = skeleton_return(game, tau, type, Player::defender);
      Vec hv(theta.n_params(), 0.0);
      for (const auto& [s, ad, aa] : tau.steps) {
        (void)aa;
        axpy(1.0, theta.logprob_grad_dir(obs_of(s), act_of(ad), v), hv);
      }
      axpy(eta * r_d, hv, term);
      axpy(q, term, total);
    } else {
      // phi reaches the inner value only through its own policy factors.
      Vec v = exact_grad_wrt(game, skels, adapted, phi, type, Player::attacker, value_of);
      axpy(q, v, total);
    }
  }
  return total;
}

}  // namespace

Vec exact_meta_grad_defender(const TabularBSMG& game, const TabularSoftmaxPolicy& theta,
                             const TabularSoftmaxPolicy& phi, std::size_t type, double eta) {
  return exact_meta_grad(game, theta, phi, type, eta, Player::defender, Player::defender);
}

Vec exact_meta_grad_attacker(const TabularBSMG& game, const TabularSoftmaxPolicy& theta,
                             const TabularSoftmaxPolicy& phi, std::size_t type, double eta) {
  return exact_meta_grad(game, theta, phi, type, eta, Player::attacker, Player::attacker);
}

double tv_distance(const Vec& p, const Vec& q) {
  require(p.size() == q.size(), Errc::shape, "tv_distance: support size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

BoundCheck generalization_bound_check(const TabularBSMG& game,
                                      const TabularSoftmaxPolicy& theta,
                                      const std::vector<TabularSoftmaxPolicy>& phis,
                                      const TabularSoftmaxPolicy& phi_new, double eta,
                                      std::size_t type) {
  require(!phis.empty(), Errc::config, "generalization_bound_check: need at least one type");
  meta_guard(game);
  for (double r : game.types[type].r_d)
    require(r >= 0.0 && r <= 1.0, Errc::config,
            "generalization_bound_check: defender rewards must lie in [0,1]");

  const auto skels = enumerate_skeletons(game);
  const std::size_t m = phis.size();

  // V-hat per attacker policy, plus the residue tables.
  auto v_hat = [&](const TabularSoftmaxPolicy& phi) {
    double total = 0.0;
    for (const auto& tau : skels) {
      const double q = skeleton_prob(game, tau, theta, phi);
      if (q == 0.0) continue;
      TabularSoftmaxPolicy adapted = adapted_defender(game, tau, theta, type, eta);
      total += q * exact_value_and_grad(game, adapted, phi, type, Player::defender).value;
    }
    return total;
  };

  double v_bar = 0.0;
  std::vector<Vec> residues;
  residues.reserve(m);
  for (const auto& phi : phis) {
    v_bar += v_hat(phi);
    residues.push_back(marginal_residue(game, phi));
  }
  v_bar /= static_cast<double>(m);
  const double v_new = v_hat(phi_new);
  const Vec residue_new = marginal_residue(game, phi_new);

  // G: enumerated maximum over per-trajectory defender gradient estimates at
  // theta and at every adapted point, together with the exact gradient norms.
  double G = 0.0;
  {
    auto max_traj_grad = [&](const TabularSoftmaxPolicy& pol) {
      double mx = 0.0;
      for (const auto& tau : skels) {
        const double R = skeleton_return(game, tau, type, Player::defender);
        mx = std::max(mx, std::abs(R) * norm2(skeleton_score(game, tau, pol, Player::defender)));
      }
      return mx;
    };
    G = max_traj_grad(theta);
    for (const auto& phi : phis)
      G = std::max(G, norm2(exact_value_and_grad(game, theta, phi, type, Player::defender).grad));
    G = std::max(G, norm2(exact_value_and_grad(game, theta, phi_new, type, Player::defender).grad));
    for (const auto& tau : skels) {
      TabularSoftmaxPolicy adapted = adapted_defender(game, tau, theta, type, eta);
      G = std::max(G, max_traj_grad(adapted));
      for (const auto& phi : phis)
        G = std::max(G,
                     norm2(exact_value_and_grad(game, adapted, phi, type, Player::defender).grad));
      G = std::max(
          G, norm2(exact_value_and_grad(game, adapted, phi_new, type, Player::defender).grad));
    }
  }

  BoundCheck out;
  out.lhs = std::abs(v_new - v_bar);
  out.grad_bound = G;

  double tv_sum = 0.0;
  for (const auto& d : residues) tv_sum += tv_distance(residue_new, d);
  Vec d_mean(residue_new.size(), 0.0);
  for (const auto& d : residues) axpy(1.0 / static_cast<double>(m), d, d_mean);

  const double reward_span =
      (1.0 - std::pow(game.gamma, static_cast<double>(game.horizon))) / (1.0 - game.gamma);
  out.bound = (2.0 * eta * G * G / static_cast<double>(m)) * tv_sum +
              reward_span * tv_distance(residue_new, d_mean);
  out.holds = out.lhs <= out.bound + 1e-12;
  return out;
}

FoseResidual fose_residual_exact(const TabularBSMG& game, const TabularSoftmaxPolicy& theta,
                                 const std::vector<TabularSoftmaxPolicy>& phis,
                                 const Vec& type_weights, double eta) {
  require(phis.size() == game.types.size() && type_weights.size() == phis.size(), Errc::config,
          "fose_residual_exact: one policy and weight per type");
  Vec defender_grad(theta.n_params(), 0.0);
  double attacker_worst = 0.0;
  for (std::size_t k = 0; k < phis.size(); ++k) {
    axpy(type_weights[k], exact_meta_grad_defender(game, theta, phis[k], k, eta),
         defender_grad);
    attacker_worst =
        std::max(attacker_worst, norm2(exact_meta_grad_attacker(game, theta, phis[k], k, eta)));
  }
  return {norm2(defender_grad), attacker_worst};
}

double pl_mu_from_samples(const std::vector<std::pair<double, double>>& value_and_gradsq,
                          double gap_tol) {
  double best_value = -std::numeric_limits<double>::infinity();
  for (const auto& [v, gsq] : value_and_gradsq) {
    (void)gsq;
    best_value = std::max(best_value, v);
  }
  double mu = std::numeric_limits<double>::infinity();
  for (const auto& [v, gsq] : value_and_gradsq) {
    const double gap = best_value - v;
    if (gap <= gap_tol) continue;
    mu = std::min(mu, gsq / (2.0 * gap));
  }
  return mu;
}

PlProbe pl_probe(const TabularBSMG& game, const std::vector<TabularSoftmaxPolicy>& theta_grid,
                 const std::vector<TabularSoftmaxPolicy>& phi_grid, std::size_t type,
                 double eta) {
  PlProbe out;
  std::vector<std::pair<double, double>> samples_d, samples_a;
  for (const auto& theta : theta_grid) {
    samples_d.clear();
    samples_a.clear();
    for (const auto& phi : phi_grid) {
      const double ld = exact_meta_value(game, theta, phi, type, eta);
      const Vec gd = exact_meta_grad(game, theta, phi, type, eta, Player::attacker,
                                     Player::defender);
      samples_d.push_back({ld, dot(gd, gd)});

      double la = 0.0;
      {
        const auto skels = enumerate_skeletons(game);
        for (const auto& tau : skels) {
          const double q = skeleton_prob(game, tau, theta, phi);
          if (q == 0.0) continue;
          TabularSoftmaxPolicy adapted = adapted_defender(game, tau, theta, type, eta);
          la += q * exact_value_and_grad(game, adapted, phi, type, Player::attacker).value;
        }
      }
      const Vec ga = exact_meta_grad_attacker(game, theta, phi, type, eta);
      samples_a.push_back({la, dot(ga, ga)});
    }
    const double mu_d = pl_mu_from_samples(samples_d);
    const double mu_a = pl_mu_from_samples(samples_a);
    if (&theta == &theta_grid.front()) {
      out.mu_defender = mu_d;
      out.mu_attacker = mu_a;
    } else {
      out.mu_defender = std::min(out.mu_defender, mu_d);
      out.mu_attacker = std::min(out.mu_attacker, mu_a);
    }
  }
  return out;
}

Trajectory sample_tabular_trajectory(const TabularBSMG& game, const TabularSoftmaxPolicy& theta,
                                     const TabularSoftmaxPolicy& phi, std::size_t type,
                                     Rng& rng) {
  Trajectory tau;
  tau.type_tag = "type" + std::to_string(type);
  std::size_t s = game.initial_state;
  for (std::size_t t = 0; t < game.horizon; ++t) {
    StepRecord rec;
    rec.obs = obs_of(s);
    auto [ad, logp_d] = theta.sample(rec.obs, rng);
    auto [aa, logp_a] = phi.sample(rec.obs, rng);
    rec.action_d = ad;
    rec.action_a = aa;
    rec.logp_d = logp_d;
    rec.logp_a = logp_a;
    const std::size_t adi = static_cast<std::size_t>(ad[0]);
    const std::size_t aai = static_cast<std::size_t>(aa[0]);
    rec.r_d = game.r_d(type, s, adi, aai);
    rec.r_a = game.r_a(type, s, adi, aai);
    tau.steps.push_back(std::move(rec));

    if (t + 1 < game.horizon) {
      const Vec& row = game.transition[game.joint_index(s, adi, aai)];
      double r = rng.uniform01();
      double acc = 0.0;
      std::size_t next = game.n_states - 1;
      for (std::size_t i = 0; i < game.n_states; ++i) {
        acc += row[i];
        if (r < acc) {
          next = i;
          break;
        }
      }
      s = next;
    }
  }
  return tau;
}

TabularGameEnv::TabularGameEnv(TabularBSMG game, Vec type_weights, bool adaptive_types)
    : game_(std::move(game)), weights_(std::move(type_weights)), adaptive_(adaptive_types) {
  game_.check();
  require(weights_.size() == game_.types.size(), Errc::config,
          "tabular env: one weight per type");
  double s = 0.0;
  for (double w : weights_) s += w;
  require(std::abs(s - 1.0) <= 1e-9, Errc::config, "tabular env: type weights must sum to 1");
  fixed_.assign(game_.types.size(), TabularSoftmaxPolicy(game_.n_states, game_.n_aa));
}

Trajectory TabularGameEnv::rollout(const StochasticPolicy& theta, const StochasticPolicy* phi,
                                   std::size_t type, std::uint64_t seed) const {
  const auto* td = dynamic_cast<const TabularSoftmaxPolicy*>(&theta);
  require(td != nullptr, Errc::protocol, "tabular env: defender policy must be tabular");
  const TabularSoftmaxPolicy* ta = phi == nullptr
                                       ? &fixed_[type]
                                       : dynamic_cast<const TabularSoftmaxPolicy*>(phi);
  require(ta != nullptr, Errc::protocol, "tabular env: attacker policy must be tabular");
  Rng rng(derive_seed(seed, 0x726f6c6cULL));
  return sample_tabular_trajectory(game_, *td, *ta, type, rng);
}

std::unique_ptr<StochasticPolicy> TabularGameEnv::make_defender_policy(
    std::uint64_t seed) const {
  auto p = std::make_unique<TabularSoftmaxPolicy>(game_.n_states, game_.n_ad);
  Rng rng(derive_seed(seed, 0x646566ULL));
  Vec logits(p->n_params());
  for (double& v : logits) v = 0.5 * rng.normal();
  p->set_params(logits);
  return p;
}

std::unique_ptr<StochasticPolicy> TabularGameEnv::make_attacker_policy(
    std::size_t type, std::uint64_t seed) const {
  auto p = std::make_unique<TabularSoftmaxPolicy>(game_.n_states, game_.n_aa);
  Rng rng(derive_seed(seed, derive_seed(0x617474ULL, type)));
  Vec logits(p->n_params());
  for (double& v : logits) v = 0.5 * rng.normal();
  p->set_params(logits);
  return p;
}

void TabularGameEnv::set_fixed_attacker(std::size_t type, TabularSoftmaxPolicy phi) {
  require(type < fixed_.size(), Errc::config, "tabular env: bad type index");
  fixed_[type] = std::move(phi);
}

const TabularSoftmaxPolicy& TabularGameEnv::fixed_attacker(std::size_t type) const {
  require(type < fixed_.size(), Errc::config, "tabular env: bad type index");
  return fixed_[type];
}

}  // namespace metafl
