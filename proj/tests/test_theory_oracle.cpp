#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metafl/tabular.hpp"

using namespace metafl;

namespace {

TabularSoftmaxPolicy seeded_policy(std::size_t states, std::size_t actions, std::uint64_t seed,
                                   double spread = 0.8) {
  TabularSoftmaxPolicy p(states, actions);
  Rng rng(seed);
  Vec logits(p.n_params());
  for (double& v : logits) v = spread * rng.normal();
  p.set_params(logits);
  return p;
}

TabularSoftmaxPolicy deterministic_policy(std::size_t states, std::size_t actions,
                                          std::size_t pick) {
  TabularSoftmaxPolicy p(states, actions);
  Vec logits(p.n_params(), 0.0);
  for (std::size_t s = 0; s < states; ++s) logits[s * actions + pick] = 60.0;
  p.set_params(logits);
  return p;
}

}  // namespace

TEST_CASE("enumerated distribution normalizes and handles determinism") {
  TabularBSMG g = TabularBSMG::random(7, 2, 2, 2, 2, 3, 0.95, 0.0, 1.0);
  auto th = seeded_policy(2, 2, 1);
  auto ph = seeded_policy(2, 2, 2);
  Vec q = enumerate_traj_dist(g, th, ph);
  double total = 0.0;
  for (double p : q) total += p;
  CHECK(std::abs(total - 1.0) <= 1e-12);

  // Deterministic policies and transitions: single trajectory with prob 1.
  TabularBSMG det = g;
  for (auto& row : det.transition) {
    std::fill(row.begin(), row.end(), 0.0);
    row[0] = 1.0;
  }
  auto thd = deterministic_policy(2, 2, 1);
  auto phd = deterministic_policy(2, 2, 0);
  Vec qd = enumerate_traj_dist(det, thd, phd);
  double max_p = 0.0, sum = 0.0;
  for (double p : qd) {
    max_p = std::max(max_p, p);
    sum += p;
  }
  CHECK(max_p == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

  // H = 1, uniform policies: uniform over joint actions.
  TabularBSMG h1 = TabularBSMG::random(9, 2, 3, 2, 1, 1, 1.0, 0.0, 1.0);
  TabularSoftmaxPolicy uth(2, 3), uph(2, 2);
  Vec qu = enumerate_traj_dist(h1, uth, uph);
  CHECK(qu.size() == 6);
  for (double p : qu) CHECK(p == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("exact value: constant-reward closed form and finite differences") {
  TabularBSMG g = TabularBSMG::random(11, 3, 2, 2, 1, 4, 0.9, 0.0, 1.0);
  for (auto& t : g.types) {
    std::fill(t.r_d.begin(), t.r_d.end(), 0.7);
    std::fill(t.r_a.begin(), t.r_a.end(), -0.7);
  }
  auto th = seeded_policy(3, 2, 3);
  auto ph = seeded_policy(3, 2, 4);
  auto vg = exact_value_and_grad(g, th, ph, 0, Player::defender);
  const double want = 0.7 * (1.0 - std::pow(0.9, 4.0)) / (1.0 - 0.9);
  CHECK(vg.value == doctest::Approx(want).epsilon(1e-12));
  CHECK(norm2(vg.grad) <= 1e-10);

  TabularBSMG gr = TabularBSMG::random(13, 2, 2, 3, 1, 3, 0.97, -1.0, 1.0);
  auto th2 = seeded_policy(2, 2, 5);
  auto ph2 = seeded_policy(2, 3, 6);
  auto vg2 = exact_value_and_grad(gr, th2, ph2, 0, Player::defender);
  const double step = 1e-6;
  for (std::size_t i = 0; i < th2.n_params(); ++i) {
    TabularSoftmaxPolicy hi = th2, lo = th2;
    Vec ph_ = th2.params(), pl = th2.params();
    ph_[i] += step;
    pl[i] -= step;
    hi.set_params(ph_);
    lo.set_params(pl);
    const double fd = (exact_value_and_grad(gr, hi, ph2, 0, Player::defender).value -
                       exact_value_and_grad(gr, lo, ph2, 0, Player::defender).value) /
                      (2.0 * step);
    CHECK(vg2.grad[i] == doctest::Approx(fd).epsilon(1e-6));
  }

  // Attacker-side gradient via the same oracle.
  auto va = exact_value_and_grad(gr, th2, ph2, 0, Player::attacker);
  for (std::size_t i = 0; i < ph2.n_params(); ++i) {
    TabularSoftmaxPolicy hi = ph2, lo = ph2;
    Vec ph_ = ph2.params(), pl = ph2.params();
    ph_[i] += step;
    pl[i] -= step;
    hi.set_params(ph_);
    lo.set_params(pl);
    const double fd = (exact_value_and_grad(gr, th2, hi, 0, Player::attacker).value -
                       exact_value_and_grad(gr, th2, lo, 0, Player::attacker).value) /
                      (2.0 * step);
    CHECK(va.grad[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("exact_meta_value reductions") {
  TabularBSMG g = TabularBSMG::random(17, 2, 2, 2, 1, 2, 0.99, -0.5, 0.5);
  auto th = seeded_policy(2, 2, 7);
  auto ph = seeded_policy(2, 2, 8);

  const double j = exact_value_and_grad(g, th, ph, 0, Player::defender).value;
  CHECK(exact_meta_value(g, th, ph, 0, 0.0) == doctest::Approx(j).epsilon(1e-12));

  TabularBSMG gz = g;
  for (auto& t : gz.types) {
    std::fill(t.r_d.begin(), t.r_d.end(), 0.0);
    std::fill(t.r_a.begin(), t.r_a.end(), 0.0);
  }
  CHECK(exact_meta_value(gz, th, ph, 0, 0.3) == doctest::Approx(0.0).epsilon(1e-15));

  // Meta value exceeds-or-matches nothing in particular, but its exact
  // gradient must match finite differences.
  const double eta = 0.15;
  Vec grad = exact_meta_grad_defender(g, th, ph, 0, eta);
  const double step = 1e-5;
  for (std::size_t i = 0; i < th.n_params(); ++i) {
    TabularSoftmaxPolicy hi = th, lo = th;
    Vec ph_ = th.params(), pl = th.params();
    ph_[i] += step;
    pl[i] -= step;
    hi.set_params(ph_);
    lo.set_params(pl);
    const double fd =
        (exact_meta_value(g, hi, ph, 0, eta) - exact_meta_value(g, lo, ph, 0, eta)) /
        (2.0 * step);
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
  }

  // Attacker meta gradient against finite differences of the attacker meta
  // value (same adaptation map, attacker rewards).
  Vec agrad = exact_meta_grad_attacker(g, th, ph, 0, eta);
  auto meta_value_attacker = [&](const TabularSoftmaxPolicy& phi) {
    const auto skels = enumerate_skeletons(g);
    double total = 0.0;
    for (const auto& tau : skels) {
      const double q = skeleton_prob(g, tau, th, phi);
      if (q == 0.0) continue;
      const double rd = skeleton_return(g, tau, 0, Player::defender);
      Vec p = th.params();
      axpy(eta * rd, skeleton_score(g, tau, th, Player::defender), p);
      TabularSoftmaxPolicy adapted = th;
      adapted.set_params(p);
      total += q * exact_value_and_grad(g, adapted, phi, 0, Player::attacker).value;
    }
    return total;
  };
  for (std::size_t i = 0; i < ph.n_params(); ++i) {
    TabularSoftmaxPolicy hi = ph, lo = ph;
    Vec ph_ = ph.params(), pl = ph.params();
    ph_[i] += step;
    pl[i] -= step;
    hi.set_params(ph_);
    lo.set_params(pl);
    const double fd = (meta_value_attacker(hi) - meta_value_attacker(lo)) / (2.0 * step);
    CHECK(agrad[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("tv_distance axioms") {
  CHECK(tv_distance({0.5, 0.5}, {0.5, 0.5}) == 0.0);
  CHECK(tv_distance({1.0, 0.0}, {0.0, 1.0}) == 1.0);

  Rng rng(20);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 4;
    Vec p(n), q(n), r(n);
    double sp = 0, sq = 0, sr = 0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform01();
      q[i] = rng.uniform01();
      r[i] = rng.uniform01();
      sp += p[i];
      sq += q[i];
      sr += r[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      p[i] /= sp;
      q[i] /= sq;
      r[i] /= sr;
    }
    // Definition re-sum.
    double direct = 0.0;
    for (std::size_t i = 0; i < n; ++i) direct += std::abs(p[i] - q[i]);
    CHECK(tv_distance(p, q) == doctest::Approx(0.5 * direct).epsilon(1e-15));
    // Symmetry, identity, triangle.
    CHECK(tv_distance(p, q) == doctest::Approx(tv_distance(q, p)).epsilon(1e-15));
    CHECK(tv_distance(p, p) == 0.0);
    CHECK(tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-15);
    CHECK(tv_distance(p, q) >= 0.0);
    CHECK(tv_distance(p, q) <= 1.0 + 1e-15);
  }

  CHECK_THROWS_AS(tv_distance({0.5, 0.5}, {1.0}), Error);
}

TEST_CASE("marginal residue and the factorization inequality") {
  TabularBSMG g = TabularBSMG::random(23, 2, 2, 2, 1, 3, 0.9, 0.0, 1.0);
  auto phi1 = seeded_policy(2, 2, 30);
  auto phi2 = seeded_policy(2, 2, 31);

  // Identical attacker policies: identical residues, TV zero.
  Vec d1 = marginal_residue(g, phi1);
  Vec d1b = marginal_residue(g, phi1);
  CHECK(tv_distance(d1, d1b) == 0.0);

  // The factorization inequality holds for random theta.
  Vec d2 = marginal_residue(g, phi2);
  for (std::uint64_t seed : {40u, 41u, 42u, 43u, 44u}) {
    auto th = seeded_policy(2, 2, seed);
    Vec q1 = enumerate_traj_dist(g, th, phi1);
    Vec q2 = enumerate_traj_dist(g, th, phi2);
    CHECK(tv_distance(q1, q2) <= tv_distance(d1, d2) + 1e-12);
  }

  // Deterministic transitions collapse the support.
  TabularBSMG det = g;
  for (auto& row : det.transition) {
    std::fill(row.begin(), row.end(), 0.0);
    row[1] = 1.0;
  }
  Vec dd = marginal_residue(det, phi1);
  std::size_t nonzero = 0;
  for (double v : dd)
    if (v != 0.0) ++nonzero;
  // Only skeletons whose intermediate states equal 1 can carry mass:
  // (AD*AA)^H action combinations survive.
  CHECK(nonzero == 64);
}

TEST_CASE("generalization bound holds, with exact equality on identical types") {
  // Identical new type with m = 1: lhs = 0 and C = 0.
  TabularBSMG g = TabularBSMG::random(29, 2, 2, 2, 1, 2, 0.9, 0.0, 1.0);
  auto th = seeded_policy(2, 2, 50);
  auto phi = seeded_policy(2, 2, 51);
  auto same = generalization_bound_check(g, th, {phi}, phi, 0.1, 0);
  CHECK(same.lhs == 0.0);
  CHECK(same.bound == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(same.holds);

  // Random instances; rewards kept in [0,1] as the bound requires.
  Rng rng(31);
  int checked = 0;
  for (int inst = 0; inst < 25; ++inst) {
    TabularBSMG gi = TabularBSMG::random(500 + inst, 2, 2, 2, 1, 2, 0.9, 0.0, 1.0);
    const std::size_t m = 1 + rng.uniform_index(3);
    std::vector<TabularSoftmaxPolicy> phis;
    for (std::size_t i = 0; i < m; ++i)
      phis.push_back(seeded_policy(2, 2, 1000 + inst * 7 + i));
    auto phi_new = seeded_policy(2, 2, 2000 + inst);
    for (int rep = 0; rep < 4; ++rep) {
      auto theta = seeded_policy(2, 2, 3000 + inst * 11 + rep);
      auto res = generalization_bound_check(gi, theta, phis, phi_new, 0.1, 0);
      CHECK(res.holds);
      ++checked;
    }
  }
  CHECK(checked == 100);

  // Out-of-range rewards are rejected.
  TabularBSMG bad = TabularBSMG::random(33, 2, 2, 2, 1, 2, 0.9, -1.0, 1.0);
  CHECK_THROWS_AS(generalization_bound_check(bad, th, {phi}, phi, 0.1, 0), Error);
}

TEST_CASE("fose residual: symmetric saddle is stationary, random point is not") {
  // Matching-pennies stage game, two identical states, zero-sum.
  TabularBSMG g;
  g.n_states = 2;
  g.n_ad = 2;
  g.n_aa = 2;
  g.horizon = 2;
  g.gamma = 0.9;
  g.transition.assign(8, Vec{0.5, 0.5});
  TabularBSMG::TypeRewards tr;
  tr.r_d.resize(8);
  tr.r_a.resize(8);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t ad = 0; ad < 2; ++ad)
      for (std::size_t aa = 0; aa < 2; ++aa) {
        const double v = ad == aa ? 1.0 : -1.0;
        tr.r_d[g.joint_index(s, ad, aa)] = v;
        tr.r_a[g.joint_index(s, ad, aa)] = -v;
      }
  g.types = {tr};
  g.check();
  CHECK(g.strictly_competitive(-1.0, 0.0));

  TabularSoftmaxPolicy uniform_d(2, 2), uniform_a(2, 2);
  auto res = fose_residual_exact(g, uniform_d, {uniform_a}, {1.0}, 0.1);
  CHECK(res.defender <= 1e-12);
  CHECK(res.attacker <= 1e-12);

  auto off = fose_residual_exact(g, seeded_policy(2, 2, 77), {seeded_policy(2, 2, 78)}, {1.0},
                                 0.1);
  CHECK(off.defender > 1e-4);
  CHECK(off.attacker > 1e-4);
}

TEST_CASE("pl probe") {
  // Analytic quadratic through the sample helper: L = -(a/2)||phi - c||^2.
  {
    const double a = 1.7;
    std::vector<std::pair<double, double>> samples;
    samples.push_back({0.0, 0.0});  // the exact maximizer
    for (double x = -2.0; x <= 2.0; x += 0.25) {
      const double gap_src = x - 0.3;
      const double value = -(a / 2.0) * gap_src * gap_src;
      const double gradsq = a * a * gap_src * gap_src;
      samples.push_back({value, gradsq});
    }
    const double mu = pl_mu_from_samples(samples);
    CHECK(mu == doctest::Approx(a).epsilon(1e-9));
  }

  // Constant-value game: vacuous condition, +inf sentinel.
  TabularBSMG flat = TabularBSMG::random(37, 2, 2, 2, 1, 2, 0.9, 0.0, 1.0);
  for (auto& t : flat.types) {
    std::fill(t.r_d.begin(), t.r_d.end(), 0.4);
    std::fill(t.r_a.begin(), t.r_a.end(), 0.4);
  }
  std::vector<TabularSoftmaxPolicy> tg = {seeded_policy(2, 2, 80)};
  std::vector<TabularSoftmaxPolicy> pg = {seeded_policy(2, 2, 81), seeded_policy(2, 2, 82)};
  auto flat_probe = pl_probe(flat, tg, pg, 0, 0.1);
  CHECK(std::isinf(flat_probe.mu_defender));
  CHECK(std::isinf(flat_probe.mu_attacker));

  // Random game: finite nonnegative report.
  TabularBSMG rnd = TabularBSMG::random(39, 2, 2, 2, 1, 2, 0.9, -0.5, 0.5);
  std::vector<TabularSoftmaxPolicy> pg2;
  for (std::uint64_t s = 90; s < 96; ++s) pg2.push_back(seeded_policy(2, 2, s));
  auto probe = pl_probe(rnd, tg, pg2, 0, 0.1);
  CHECK(probe.mu_defender >= 0.0);
  CHECK(probe.mu_attacker >= 0.0);
}

TEST_CASE("sampled trajectory frequencies match the enumerated distribution") {
  TabularBSMG g = TabularBSMG::random(41, 2, 2, 2, 1, 2, 0.95, 0.0, 1.0);
  auto th = seeded_policy(2, 2, 100);
  auto ph = seeded_policy(2, 2, 101);
  const auto skels = enumerate_skeletons(g);
  Vec q = enumerate_traj_dist(g, th, ph);

  // Index lookup: map each sampled trajectory onto its skeleton slot.
  auto index_of = [&](const Trajectory& tau) {
    for (std::size_t i = 0; i < skels.size(); ++i) {
      bool match = true;
      for (std::size_t t = 0; t < tau.steps.size() && match; ++t) {
        const auto& [s, ad, aa] = skels[i].steps[t];
        match = s == static_cast<std::size_t>(tau.steps[t].obs[0]) &&
                ad == static_cast<std::size_t>(tau.steps[t].action_d[0]) &&
                aa == static_cast<std::size_t>(tau.steps[t].action_a[0]);
      }
      if (match) return i;
    }
    return skels.size();
  };

  const std::size_t n = 100000;
  Vec counts(skels.size(), 0.0);
  Rng rng(555);
  for (std::size_t i = 0; i < n; ++i) {
    Trajectory tau = sample_tabular_trajectory(g, th, ph, 0, rng);
    const std::size_t idx = index_of(tau);
    REQUIRE(idx < skels.size());
    counts[idx] += 1.0;
  }
  for (std::size_t i = 0; i < skels.size(); ++i) {
    const double freq = counts[i] / static_cast<double>(n);
    const double sigma = std::sqrt(q[i] * (1.0 - q[i]) / static_cast<double>(n));
    CHECK(std::abs(freq - q[i]) <= 3.5 * sigma + 1e-4);
  }
}

TEST_CASE("trajectory log-prob consistency against the enumerated density") {
  TabularBSMG g = TabularBSMG::random(43, 2, 2, 2, 1, 3, 0.9, 0.0, 1.0);
  auto th = seeded_policy(2, 2, 110);
  auto ph = seeded_policy(2, 2, 111);
  Rng rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    Trajectory tau = sample_tabular_trajectory(g, th, ph, 0, rng);
    double logp = 0.0;
    for (std::size_t t = 0; t < tau.horizon(); ++t) logp += tau.steps[t].logp_d + tau.steps[t].logp_a;

    // Reconstruct the density and strip the transition factors.
    double policy_part = 0.0;
    for (std::size_t t = 0; t < tau.horizon(); ++t) {
      const std::size_t s = static_cast<std::size_t>(tau.steps[t].obs[0]);
      policy_part += std::log(th.prob(s, static_cast<std::size_t>(tau.steps[t].action_d[0])));
      policy_part += std::log(ph.prob(s, static_cast<std::size_t>(tau.steps[t].action_a[0])));
    }
    CHECK(logp == doctest::Approx(policy_part).epsilon(1e-12));
  }
}

TEST_CASE("size guard rejects oversized games") {
  TabularBSMG big = TabularBSMG::random(1, 6, 6, 6, 1, 4, 0.9, 0.0, 1.0);
  CHECK_THROWS_AS(enumerate_skeletons(big), Error);
}
