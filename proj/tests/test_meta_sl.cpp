#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metafl/meta_train.hpp"
#include "metafl/pipeline.hpp"
#include "metafl/tabular.hpp"

using namespace metafl;

namespace {

// Matching-pennies BSMG: zero-sum with an interior saddle at uniform play.
TabularBSMG pennies_game(std::size_t states = 2, double gamma = 0.9, std::size_t horizon = 2) {
  TabularBSMG g;
  g.n_states = states;
  g.n_ad = 2;
  g.n_aa = 2;
  g.horizon = horizon;
  g.gamma = gamma;
  g.transition.assign(states * 4, Vec(states, 1.0 / static_cast<double>(states)));
  TabularBSMG::TypeRewards tr;
  tr.r_d.resize(states * 4);
  tr.r_a.resize(states * 4);
  for (std::size_t s = 0; s < states; ++s)
    for (std::size_t ad = 0; ad < 2; ++ad)
      for (std::size_t aa = 0; aa < 2; ++aa) {
        const double v = ad == aa ? 0.5 : -0.5;
        tr.r_d[g.joint_index(s, ad, aa)] = v;
        tr.r_a[g.joint_index(s, ad, aa)] = -v;
      }
  g.types = {tr};
  return g;
}

TabularGameEnv pennies_env(bool adaptive = true) {
  return TabularGameEnv(pennies_game(), {1.0}, adaptive);
}

}  // namespace

TEST_CASE("inner_best_response basics") {
  TabularGameEnv env = pennies_env(true);
  auto theta = env.make_defender_policy(1);
  auto phi0 = env.make_attacker_policy(0, 2);

  auto same = inner_best_response(env, *theta, *phi0, 0, 0, 0.5, 8,
                                  PgMode::reward_to_go_baseline, 3);
  CHECK(same->params() == phi0->params());

  auto frozen = inner_best_response(env, *theta, *phi0, 0, 5, 0.0, 8,
                                    PgMode::reward_to_go_baseline, 3);
  CHECK(frozen->params() == phi0->params());

  TabularGameEnv non_adaptive = pennies_env(false);
  CHECK_THROWS_AS(inner_best_response(non_adaptive, *theta, *phi0, 0, 3, 0.5, 8,
                                      PgMode::reward_to_go_baseline, 3),
                  Error);
}

TEST_CASE("inner_best_response: attacker exact value trends upward") {
  TabularBSMG game = pennies_game();
  TabularGameEnv env(game, {1.0}, true);
  std::size_t improved = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    // A biased (exploitable) defender.
    TabularSoftmaxPolicy theta(2, 2);
    theta.set_params({0.9, -0.9, 0.7, -0.7});
    auto phi0 = env.make_attacker_policy(0, 100 + seed);
    const auto* p0 = dynamic_cast<const TabularSoftmaxPolicy*>(phi0.get());
    const double before = exact_value_and_grad(game, theta, *p0, 0, Player::attacker).value;

    auto phi1 = inner_best_response(env, theta, *phi0, 0, 25, 1.0, 32,
                                    PgMode::reward_to_go_baseline, 500 + seed);
    const auto* p1 = dynamic_cast<const TabularSoftmaxPolicy*>(phi1.get());
    const double after = exact_value_and_grad(game, theta, *p1, 0, Player::attacker).value;
    if (after > before) ++improved;
  }
  CHECK(improved >= 16);  // monotone within MC noise
}

TEST_CASE("meta_rl_train rejects adaptive types and matches plain ascent at K=1,l=1") {
  TabularGameEnv adaptive_env = pennies_env(true);
  MetaTrainConfig cfg;
  cfg.n_outer = 2;
  cfg.k_types = 1;
  cfg.batch_size = 8;
  cfg.seed = 11;
  CHECK_THROWS_AS(meta_rl_train(cfg, adaptive_env), Error);

  // Non-adaptive environment with a fixed biased attacker.
  TabularBSMG game = pennies_game();
  TabularGameEnv env(game, {1.0}, false);
  TabularSoftmaxPolicy fixed(2, 2);
  fixed.set_params({1.2, -1.2, 1.2, -1.2});
  env.set_fixed_attacker(0, fixed);

  cfg.n_outer = 5;
  cfg.adapt_steps = 1;
  cfg.eta = 0.4;
  cfg.kappa_d = 1.0;
  cfg.pg_mode = PgMode::reward_to_go_baseline;
  auto result = meta_rl_train(cfg, env);
  CHECK(result.log.rows.size() == 5);

  // Side-by-side: plain pg ascent consuming the same seed stream.
  auto theta = env.make_defender_policy(derive_seed(cfg.seed, 1));
  Rng type_rng(derive_seed(cfg.seed, 2));
  for (std::size_t t = 0; t < cfg.n_outer; ++t) {
    (void)sample_types(env, 1, type_rng);
    std::size_t step_counter = 0;
    auto batch = sample_batch(env, *theta, nullptr, 0, cfg.batch_size,
                              derive_seed(derive_seed(cfg.seed, 0xb5a7c000ULL + 1),
                                          t * 4096 + 0 * 64 + step_counter));
    GradEstimate g = pg_estimate(batch, *theta, Player::defender, env.gamma(), cfg.pg_mode);
    Vec p = theta->params();
    axpy(cfg.eta, g.grad, p);  // kappa_d = 1: outer step equals the offset
    theta->set_params(p);
  }
  for (std::size_t i = 0; i < theta->n_params(); ++i)
    CHECK(result.theta->params()[i] == doctest::Approx(theta->params()[i]).epsilon(1e-12));
}

TEST_CASE("meta_rl_train improves the defender against a fixed attacker") {
  TabularBSMG game = pennies_game();
  TabularGameEnv env(game, {1.0}, false);
  TabularSoftmaxPolicy fixed(2, 2);
  fixed.set_params({1.5, -1.5, 1.5, -1.5});  // mostly plays action 0
  env.set_fixed_attacker(0, fixed);

  MetaTrainConfig cfg;
  cfg.n_outer = 60;
  cfg.k_types = 1;
  cfg.batch_size = 32;
  cfg.eta = 0.5;
  cfg.adapt_steps = 1;
  cfg.seed = 12;
  auto result = meta_rl_train(cfg, env);

  const auto* tp = dynamic_cast<const TabularSoftmaxPolicy*>(result.theta.get());
  const double value = exact_value_and_grad(game, *tp, fixed, 0, Player::defender).value;
  // Against a 0-biased attacker the defender should learn to match (ad=aa
  // pays +0.5): value well above the uniform-play value of 0.
  CHECK(value > 0.3);
}

TEST_CASE("meta_sg_train: structure, warm start, frozen-attacker reduction") {
  TabularGameEnv env = pennies_env(true);
  MetaTrainConfig cfg;
  cfg.n_outer = 4;
  cfg.n_inner = 3;
  cfg.k_types = 1;
  cfg.batch_size = 8;
  cfg.kappa_a = 0.5;
  cfg.kappa_d = 0.5;
  cfg.eta = 0.2;
  cfg.seed = 21;
  cfg.variant = MetaVariant::reptile;

  auto result = meta_sg_train(cfg, env);
  CHECK(result.log.rows.size() == 4);
  REQUIRE(result.attacker_policies[0] != nullptr);

  // Warm start honored: a run initialized from the returned attacker differs
  // from a cold start in its very first inner batch.
  std::vector<const StochasticPolicy*> warm = {result.attacker_policies[0].get()};
  auto warm_run = meta_sg_train(cfg, env, nullptr, &warm);
  auto cold_run = meta_sg_train(cfg, env);
  bool differs = false;
  for (std::size_t i = 0; i < warm_run.theta->n_params(); ++i)
    if (warm_run.theta->params()[i] != cold_run.theta->params()[i]) differs = true;
  CHECK(differs);

  // With N_A=0 the attacker stays frozen at its initialization.
  cfg.n_inner = 0;
  auto frozen = meta_sg_train(cfg, env);
  auto init_phi = env.make_attacker_policy(0, derive_seed(cfg.seed, 100));
  CHECK(frozen.attacker_policies[0]->params() == init_phi->params());
}

TEST_CASE("meta_sg_train reptile drives the exact residuals down on pennies") {
  // Smoke-scale version of the convergence criterion: the best iterate's
  // residual pair drops well below the starting point.
  TabularBSMG game = pennies_game();
  TabularGameEnv env(game, {1.0}, true);

  MetaTrainConfig cfg;
  cfg.n_outer = 80;
  cfg.n_inner = 12;
  cfg.k_types = 1;
  cfg.batch_size = 256;
  cfg.kappa_a = 0.5;
  cfg.kappa_d = 0.25;
  cfg.eta = 0.1;
  cfg.seed = 33;
  cfg.variant = MetaVariant::reptile;
  cfg.param_box = 2.5;

  auto initial_theta = env.make_defender_policy(derive_seed(cfg.seed, 1));
  auto initial_phi = env.make_attacker_policy(0, derive_seed(cfg.seed, 100));
  const auto* th0 = dynamic_cast<const TabularSoftmaxPolicy*>(initial_theta.get());
  const auto* ph0 = dynamic_cast<const TabularSoftmaxPolicy*>(initial_phi.get());
  auto before = fose_residual_exact(game, *th0, {*ph0}, {1.0}, cfg.eta);

  double best_pair = 1e300;
  IterationHook hook = [&](std::size_t iter, const StochasticPolicy& th,
                           const std::vector<std::unique_ptr<StochasticPolicy>>& phis) {
    if (iter % 5 != 4) return;
    const auto* t = dynamic_cast<const TabularSoftmaxPolicy*>(&th);
    const auto* p = dynamic_cast<const TabularSoftmaxPolicy*>(phis[0].get());
    auto r = fose_residual_exact(game, *t, {*p}, {1.0}, cfg.eta);
    best_pair = std::min(best_pair, std::max(r.defender, r.attacker));
  };
  meta_sg_train(cfg, env, nullptr, nullptr, hook);

  CHECK(best_pair < std::max(before.defender, before.attacker));
  CHECK(best_pair < 0.15);
}

TEST_CASE("debiased and reptile land near each other on the same game") {
  TabularBSMG game = pennies_game();
  TabularGameEnv env(game, {1.0}, true);

  MetaTrainConfig cfg;
  cfg.n_outer = 120;
  cfg.n_inner = 12;
  cfg.k_types = 1;
  cfg.batch_size = 512;
  cfg.kappa_a = 0.5;
  cfg.kappa_d = 0.2;
  cfg.eta = 0.1;
  cfg.seed = 7;
  cfg.param_box = 2.0;

  cfg.variant = MetaVariant::reptile;
  auto reptile = meta_sg_train(cfg, env);
  cfg.variant = MetaVariant::debiased;
  auto debiased = meta_sg_train(cfg, env);

  const auto* tr = dynamic_cast<const TabularSoftmaxPolicy*>(reptile.theta.get());
  const auto* pr =
      dynamic_cast<const TabularSoftmaxPolicy*>(reptile.attacker_policies[0].get());
  const auto* td = dynamic_cast<const TabularSoftmaxPolicy*>(debiased.theta.get());
  const auto* pd =
      dynamic_cast<const TabularSoftmaxPolicy*>(debiased.attacker_policies[0].get());
  const double v_r = exact_value_and_grad(game, *tr, *pr, 0, Player::defender).value;
  const double v_d = exact_value_and_grad(game, *td, *pd, 0, Player::defender).value;
  CHECK(std::abs(v_r - v_d) < 0.05);
}

TEST_CASE("online_adapt: eta=0 is pure execution") {
  BSMGConfig cfg;
  cfg.fl.n_clients = 6;
  cfg.fl.m2 = 1;
  cfg.fl.subsample_rate = 1.0;
  cfg.fl.seed = 5;
  cfg.fl.batch_size = 16;
  cfg.n_classes = 3;
  cfg.data_dim = 6;
  cfg.train_examples = 240;
  cfg.eval_examples = 90;
  cfg.root_examples = 45;
  cfg.model = ModelKind::softmax;
  cfg.horizon = 6;
  cfg.policy_hidden = 6;
  cfg.trigger_len = 2;
  cfg.type_prior = {{AttackType::make(AttackMethod::IPM, {{"epsilon", 2.0}}), 1.0}};
  FLGameEnv live(cfg);

  auto theta = live.make_defender_policy(8);
  auto res = online_adapt(*theta, live, 0, nullptr, 3, 1, 0.0, 2, 77);
  CHECK(res.theta->params() == theta->params());
  CHECK(res.execution.size() == 6);
  CHECK(res.log.rows.size() == 2);  // two blocks of three rounds

  // Adaptation with eta > 0 changes the policy.
  auto res2 = online_adapt(*theta, live, 0, nullptr, 3, 1, 0.05, 2, 77);
  bool moved = false;
  for (std::size_t i = 0; i < theta->n_params(); ++i)
    if (res2.theta->params()[i] != theta->params()[i]) moved = true;
  CHECK(moved);
}

TEST_CASE("train log stays finite and row-complete") {
  TabularGameEnv env = pennies_env(true);
  MetaTrainConfig cfg;
  cfg.n_outer = 7;
  cfg.n_inner = 2;
  cfg.k_types = 2;
  cfg.batch_size = 8;
  cfg.seed = 3;
  auto result = meta_sg_train(cfg, env);
  CHECK(result.log.rows.size() == cfg.n_outer);
  result.log.check_finite();
  for (std::size_t i = 0; i < result.log.rows.size(); ++i)
    CHECK(result.log.rows[i].iter == i);

  result.log.save_csv("meta_log_test.csv");
  std::ifstream in("meta_log_test.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "iter,defender_return,attacker_return,defender_grad_norm,attacker_grad_norm,"
        "fose_defender,fose_attacker,wall_time_s");
  std::remove("meta_log_test.csv");
}
