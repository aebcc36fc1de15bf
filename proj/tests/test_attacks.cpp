#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metafl/attacks.hpp"
#include "metafl/defenses.hpp"

using namespace metafl;

namespace {

std::vector<Vec> random_updates(Rng& rng, std::size_t m, std::size_t d, double spread = 1.0) {
  std::vector<Vec> out(m, Vec(d));
  for (auto& u : out)
    for (double& v : u) v = spread * rng.normal();
  return out;
}

Dataset tiny_dataset(Rng& rng, std::size_t n, std::size_t dim, std::size_t n_classes) {
  Dataset d;
  d.dim = dim;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) d.features.push_back(rng.uniform01());
    d.labels.push_back(static_cast<int>(i % n_classes));
  }
  return d;
}

}  // namespace

TEST_CASE("attack type schema") {
  CHECK_NOTHROW(AttackType::make(AttackMethod::NA));
  CHECK_THROWS_AS(AttackType::make(AttackMethod::NA, {{"epsilon", 1.0}}), Error);
  CHECK_NOTHROW(AttackType::make(AttackMethod::IPM, {{"epsilon", 2.0}}));
  CHECK_THROWS_AS(AttackType::make(AttackMethod::IPM, {{"rho", 0.5}}), Error);
  CHECK_NOTHROW(AttackType::make(
      AttackMethod::BFL, {{"rho", 1.0}, {"trigger_id", 0.0}, {"target_label", 0.0}}));
  CHECK_THROWS_AS(AttackType::make(AttackMethod::BFL, {{"rho", 1.0}}), Error);
  AttackType brl = AttackType::make(
      AttackMethod::BRL, {{"rho", 0.5}, {"trigger_id", 0.0}, {"target_label", 1.0}});
  CHECK(brl.objective == AttackObjective::targeted);
  CHECK(brl.adaptive());
  CHECK(brl.get("lambda", 0.5) == 0.5);
}

TEST_CASE("ipm_update") {
  AttackAction a = ipm_update({1.0, 0.0}, 2.0, 3);
  REQUIRE(a.updates.size() == 3);
  for (const Vec& u : a.updates) CHECK(u == Vec{-2.0, 0.0});

  CHECK(ipm_update({1.0, 0.5}, 0.0, 2).updates[0] == Vec{0.0, 0.0});
  CHECK(ipm_update({0.0, 0.0}, 5.0, 2).updates[0] == Vec{0.0, 0.0});

  // Linearity in the mean and in epsilon.
  Rng rng(1);
  Vec mu(4);
  for (double& v : mu) v = rng.normal();
  Vec u1 = ipm_update(mu, 1.5, 1).updates[0];
  Vec u2 = ipm_update(scaled(mu, 2.0), 1.5, 1).updates[0];
  Vec u3 = ipm_update(mu, 3.0, 1).updates[0];
  for (std::size_t j = 0; j < mu.size(); ++j) {
    CHECK(u2[j] == doctest::Approx(2.0 * u1[j]).epsilon(1e-12));
    CHECK(u3[j] == doctest::Approx(2.0 * u1[j]).epsilon(1e-12));
  }
}

TEST_CASE("lmp_update against fedavg saturates at lambda_max") {
  Rng rng(2);
  auto benign = random_updates(rng, 4, 3, 0.3);
  // 6 malicious vs 4 benign: plenty of drag on the plain mean.
  auto res = lmp_update(benign, [](const std::vector<Vec>& u) { return fedavg(u); }, 5.0,
                        1e-3, 6);
  CHECK(res.lambda == doctest::Approx(5.0));
  CHECK_FALSE(res.unbracketed);
}

TEST_CASE("lmp_update zero benign mean gives zero attack") {
  std::vector<Vec> zeros(3, Vec{0.0, 0.0});
  auto res = lmp_update(zeros, [](const std::vector<Vec>& u) { return fedavg(u); }, 2.0,
                        1e-3, 2);
  CHECK(res.lambda == 0.0);
  for (const Vec& u : res.action.updates) CHECK(u == Vec{0.0, 0.0});
}

TEST_CASE("lmp_update against krum matches a grid-search oracle") {
  // Three identical malicious copies form the tightest cluster, so the probe
  // selects them at small lambda and rejects them once they drift far.
  Rng rng(3);
  for (int inst = 0; inst < 5; ++inst) {
    std::vector<Vec> benign;
    for (int i = 0; i < 5; ++i) benign.push_back(Vec{1.0 + 0.2 * rng.normal()});
    const std::size_t n_mal = 3;
    const double lmax = 4.0, tol = 1e-4;
    ProbeAggregator probe = [](const std::vector<Vec>& u) { return krum(u, 3).update; };

    auto res = lmp_update(benign, probe, lmax, tol, n_mal);
    REQUIRE_FALSE(res.unbracketed);

    // Grid search with the same predicate definition.
    const Vec mu = mean(benign);
    auto probe_at = [&](double lambda) {
      std::vector<Vec> all = benign;
      Vec crafted = {mu[0] - lambda * (mu[0] > 0 ? 1.0 : -1.0)};
      for (std::size_t i = 0; i < n_mal; ++i) all.push_back(crafted);
      return probe(all);
    };
    Vec base = probe_at(0.0);
    double best = 0.0;
    bool any = false;
    for (int k = 0; k <= 40000; ++k) {
      double lambda = lmax * k / 40000.0;
      Vec moved = probe_at(lambda);
      axpy(-1.0, base, moved);
      if (dot(moved, mu) < 0.0) {
        best = lambda;
        any = true;
      } else if (any) {
        break;  // passing region is an interval from 0+
      }
    }
    REQUIRE(any);
    CHECK(std::abs(res.lambda - best) <= tol + lmax / 40000.0);
  }
}

TEST_CASE("lmp acceptance is monotone below the found lambda") {
  Rng rng(4);
  std::vector<Vec> benign;
  for (int i = 0; i < 5; ++i) benign.push_back(Vec{1.0 + 0.2 * rng.normal()});
  ProbeAggregator probe = [](const std::vector<Vec>& u) { return krum(u, 3).update; };
  auto res = lmp_update(benign, probe, 4.0, 1e-4, 3);
  REQUIRE_FALSE(res.unbracketed);

  const Vec mu = mean(benign);
  auto passes = [&](double lambda) {
    auto probe_at = [&](double l) {
      std::vector<Vec> all = benign;
      Vec crafted = {mu[0] - l * (mu[0] > 0 ? 1.0 : -1.0)};
      for (int i = 0; i < 3; ++i) all.push_back(crafted);
      return probe(all);
    };
    Vec moved = probe_at(lambda);
    axpy(-1.0, probe_at(0.0), moved);
    return dot(moved, mu) < 0.0;
  };
  for (double frac : {0.1, 0.3, 0.5, 0.7, 0.9})
    if (res.lambda * frac > 1e-6) CHECK(passes(res.lambda * frac));
}

TEST_CASE("poison_dataset") {
  Rng rng(5);
  ClientDataset cd;
  cd.data = tiny_dataset(rng, 11, 4, 3);
  Trigger trig;
  trig.indices = {0, 2};
  trig.value = 1.0;
  trig.target_label = 2;

  Rng r0(9);
  ClientDataset same = poison_dataset(cd, trig, 0.0, r0);
  CHECK(same.data == cd.data);
  REQUIRE(same.poison.has_value());
  CHECK(same.poison->poisoned_rows.empty());

  Rng r1(9);
  ClientDataset half = poison_dataset(cd, trig, 0.5, r1);
  CHECK(half.poison->poisoned_rows.size() == 5);  // floor(0.5 * 11)
  for (std::size_t r : half.poison->poisoned_rows) {
    CHECK(half.data.row(r)[0] == 1.0);
    CHECK(half.data.row(r)[2] == 1.0);
    CHECK(half.data.labels[r] == 2);
  }

  Rng r2(9);
  ClientDataset full = poison_dataset(cd, trig, 1.0, r2);
  CHECK(full.poison->poisoned_rows.size() == 11);
  for (int y : full.data.labels) CHECK(y == 2);
}

TEST_CASE("backdoor_update composition and linear scaling") {
  Rng rng(6);
  ModelParams m = init_model(ModelLayout::softmax_regression(4, 3), 20);
  ClientDataset cd;
  cd.data = tiny_dataset(rng, 12, 4, 3);
  Trigger trig;
  trig.indices = {1};
  trig.target_label = 0;
  LocalParams lp{0.05, 2, 6};

  Rng ra(31);
  ClientDataset clean_marked = poison_dataset(cd, trig, 0.0, ra);
  Rng rb(32), rc(32);
  Vec bd = backdoor_update(m, clean_marked, 1.0, lp, rb);
  Vec benign = local_update(m, cd.data, lp.lr, lp.iters, lp.batch_size, rc);
  CHECK(bd == benign);  // scale 1, rho 0: identical to a benign update

  Rng rp(33);
  ClientDataset poisoned = poison_dataset(cd, trig, 0.5, rp);
  Rng r1(34), r2(34), r3(34);
  Vec u1 = backdoor_update(m, poisoned, 1.0, lp, r1);
  Vec u2 = backdoor_update(m, poisoned, 2.0, lp, r2);
  for (std::size_t j = 0; j < u1.size(); ++j)
    CHECK(u2[j] == doctest::Approx(2.0 * u1[j]).epsilon(1e-12));

  // Compositional oracle: local_update then scalar multiply.
  Vec manual = local_update(m, poisoned.data, lp.lr, lp.iters, lp.batch_size, r3);
  for (double& v : manual) v *= 2.0;
  for (std::size_t j = 0; j < u2.size(); ++j)
    CHECK(u2[j] == doctest::Approx(manual[j]).epsilon(1e-12));

  CHECK_THROWS_AS(backdoor_update(m, poisoned, 0.5, lp, r1), Error);
}

TEST_CASE("dba_assign") {
  Trigger trig;
  trig.indices = {3, 4, 5, 6, 7, 8, 9, 10};
  trig.value = 1.0;
  trig.target_label = 1;

  Rng r1(7);
  auto four = dba_assign(trig, 4, r1);
  REQUIRE(four.size() == 4);
  std::set<std::size_t> seen;
  for (const auto& t : four) {
    CHECK(t.indices.size() == 2);
    seen.insert(t.indices.begin(), t.indices.end());
  }
  CHECK(seen == std::set<std::size_t>(trig.indices.begin(), trig.indices.end()));

  Rng r2(8);
  auto eight = dba_assign(trig, 8, r2);
  std::map<std::size_t, int> first_index_count;
  for (const auto& t : eight) ++first_index_count[t.indices.front()];
  for (const auto& [idx, count] : first_index_count) {
    (void)idx;
    CHECK(count == 2);  // each sub-trigger used exactly twice
  }

  Trigger small;
  small.indices = {1, 2};
  Rng r3(9);
  CHECK_THROWS_AS(dba_assign(small, 4, r3), Error);
}

TEST_CASE("rl attack action decoding") {
  Rng rng(10);
  RlAttackContext ctx;
  ctx.benign_mean_estimate = Vec{0.6, -0.8};  // unit norm
  ctx.perturb_seed = 77;
  ctx.lambda3_max = 3.0;

  // (l1=1, l2=0, l3=eps) reproduces ipm_update on a unit mean.
  const double eps = 2.0;
  Vec a3 = {1.0, 0.0, eps / ctx.lambda3_max};
  AttackAction got = rl_attack_action_to_updates(a3, AttackObjective::untargeted, ctx, 2);
  AttackAction want = ipm_update(ctx.benign_mean_estimate, eps, 2);
  REQUIRE(got.updates.size() == 2);
  for (std::size_t j = 0; j < 2; ++j)
    CHECK(got.updates[0][j] == doctest::Approx(want.updates[0][j]).epsilon(1e-12));

  // l3 = 0 gives the zero update.
  AttackAction zero =
      rl_attack_action_to_updates({0.7, 0.4, 0.0}, AttackObjective::untargeted, ctx, 1);
  CHECK(norm2(zero.updates[0]) == 0.0);

  // Scalar oracle for the full map.
  Vec act = {0.3, 0.6, 0.5};
  AttackAction mixed =
      rl_attack_action_to_updates(act, AttackObjective::untargeted, ctx, 1);
  Rng zr(derive_seed(77, 0x7065727475726241ULL));
  Vec z = {zr.normal(), zr.normal()};
  double zn = std::sqrt(z[0] * z[0] + z[1] * z[1]);
  z[0] /= zn;
  z[1] /= zn;
  Vec dir = {-0.3 * 0.6 + 0.6 * z[0], -0.3 * -0.8 + 0.6 * z[1]};
  double dn = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1]);
  double target = 0.5 * 3.0 * 1.0;
  for (std::size_t j = 0; j < 2; ++j)
    CHECK(mixed.updates[0][j] == doctest::Approx(dir[j] * target / dn).epsilon(1e-12));

  CHECK(norm2(mixed.updates[0]) == doctest::Approx(target).epsilon(1e-12));

  // Targeted variant needs its context.
  CHECK_THROWS_AS(rl_attack_action_to_updates(act, AttackObjective::targeted, ctx, 1), Error);
  (void)rng;
}

TEST_CASE("attack_reward") {
  Rng rng(11);
  ModelParams m = init_model(ModelLayout::softmax_regression(3, 2), 40);
  Dataset d1 = tiny_dataset(rng, 6, 3, 2);
  Dataset d2 = tiny_dataset(rng, 6, 3, 2);

  AttackType ipm = AttackType::make(AttackMethod::IPM, {{"epsilon", 2.0}});

  AttackEvalAssets untargeted_only;
  untargeted_only.untargeted_clean = {d1, d2};
  double r = attack_reward(ipm, m, untargeted_only);
  double f = 0.5 * (forward_loss(m, d1) + forward_loss(m, d2));
  CHECK(r == doctest::Approx(f).epsilon(1e-12));  // M1 = 0 reduces to +F

  AttackEvalAssets both;
  both.targeted_poisoned = {d1};
  both.untargeted_clean = {d2};
  AttackType bfl = AttackType::make(
      AttackMethod::BFL, {{"rho", 1.0}, {"trigger_id", 0.0}, {"target_label", 0.0}});
  double rb = attack_reward(bfl, m, both);
  CHECK(rb == doctest::Approx(-(forward_loss(m, d1) - forward_loss(m, d2))).epsilon(1e-12));

  AttackEvalAssets none;
  CHECK_THROWS_AS(attack_reward(ipm, m, none), Error);
}

TEST_CASE("surrogate reward black-box") {
  // Model that maps everything to class 1 with a large margin.
  ModelParams m = init_model(ModelLayout::softmax_regression(2, 3), 1);
  m.weights = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 20.0, 0.0};  // bias of class 1 = 20

  Rng rng(12);
  Dataset triggered = tiny_dataset(rng, 8, 2, 3);
  auto res = surrogate_reward_blackbox(m, triggered, 3);
  CHECK(res.chosen_label == 1);
  CHECK(-res.reward == doctest::Approx(0.0).epsilon(1e-6));

  // Uniform logits tie at ln C; lowest label id wins.
  ModelParams flat = m;
  for (double& w : flat.weights) w = 0.0;
  auto tie = surrogate_reward_blackbox(flat, triggered, 3);
  CHECK(tie.chosen_label == 0);
  CHECK(-tie.reward == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  // Exhaustive-label oracle on a random model.
  ModelParams r = init_model(ModelLayout::softmax_regression(2, 3), 55);
  auto got = surrogate_reward_blackbox(r, triggered, 3);
  double best = 1e300;
  int best_c = -1;
  for (int c = 0; c < 3; ++c) {
    Dataset lab = triggered;
    std::fill(lab.labels.begin(), lab.labels.end(), c);
    double loss = forward_loss(r, lab);
    if (loss < best) {
      best = loss;
      best_c = c;
    }
  }
  CHECK(got.chosen_label == best_c);
  CHECK(-got.reward == doctest::Approx(best).epsilon(1e-12));
}
