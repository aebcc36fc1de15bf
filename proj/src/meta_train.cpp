#include "metafl/meta_train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace metafl {

namespace {

// Labeled seed streams: every batch purpose gets its own derivation so the
// branches consume identical randomness layouts.
std::uint64_t batch_seed(std::uint64_t seed, std::size_t outer, std::size_t slot,
                         std::size_t purpose) {
  return derive_seed(derive_seed(seed, 0xb5a7c000ULL + purpose),
                     outer * 4096 + slot);
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void project_box(Vec& params, double box) {
  if (box <= 0.0) return;
  for (double& p : params) p = std::min(std::max(p, -box), box);
}

}  // namespace

std::string meta_variant_name(MetaVariant v) {
  switch (v) {
    case MetaVariant::meta_rl: return "meta-rl";
    case MetaVariant::reptile: return "reptile";
    case MetaVariant::debiased: return "debiased";
  }
  fail(Errc::config, "unknown meta variant");
}

MetaVariant meta_variant_from_name(const std::string& name) {
  if (name == "meta-rl") return MetaVariant::meta_rl;
  if (name == "reptile") return MetaVariant::reptile;
  if (name == "debiased") return MetaVariant::debiased;
  fail(Errc::config, "unknown meta variant: " + name);
}

void MetaTrainConfig::validate() const {
  require(n_outer >= 1, Errc::config, "train: n_outer must be positive");
  require(k_types >= 1, Errc::config, "train: k_types must be positive");
  require(batch_size >= 1, Errc::config, "train: batch_size must be positive");
  require(adapt_steps >= 1, Errc::config, "train: adapt_steps must be positive");
  require(kappa_d > 0.0 && kappa_a >= 0.0 && eta >= 0.0, Errc::config,
          "train: step sizes must be nonnegative (kappa_d positive)");
}

void TrainLog::check_finite() const {
  for (const auto& r : rows) {
    require(std::isfinite(r.defender_return) && std::isfinite(r.attacker_return) &&
                std::isfinite(r.defender_grad_norm) && std::isfinite(r.attacker_grad_norm) &&
                std::isfinite(r.fose_defender) && std::isfinite(r.fose_attacker),
            Errc::data, "train log contains non-finite entries");
  }
}

void TrainLog::save_csv(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), Errc::io, "train log: cannot open " + path);
  out << "iter,defender_return,attacker_return,defender_grad_norm,attacker_grad_norm,"
         "fose_defender,fose_attacker,wall_time_s\n";
  for (const auto& r : rows) {
    out << r.iter << ',' << fmt_double(r.defender_return) << ','
        << fmt_double(r.attacker_return) << ',' << fmt_double(r.defender_grad_norm) << ','
        << fmt_double(r.attacker_grad_norm) << ',' << fmt_double(r.fose_defender) << ','
        << fmt_double(r.fose_attacker) << ',' << fmt_double(r.wall_time_s) << "\n";
  }
}

std::unique_ptr<StochasticPolicy> inner_best_response(const GameEnv& env,
                                                      const StochasticPolicy& theta_adapted,
                                                      const StochasticPolicy& phi_init,
                                                      std::size_t type, std::size_t n_inner,
                                                      double kappa_a, std::size_t batch_size,
                                                      PgMode mode, std::uint64_t seed,
                                                      double param_box, double grad_clip) {
  require(env.type_adaptive(type), Errc::protocol,
          "inner_best_response: type is non-adaptive; route it to the meta-RL branch");
  auto phi = phi_init.clone();
  const std::uint64_t theta_sum = params_checksum(theta_adapted.params());
  for (std::size_t k = 0; k < n_inner; ++k) {
    auto batch = sample_batch(env, theta_adapted, phi.get(), type, batch_size,
                              derive_seed(seed, k));
    GradEstimate g = pg_estimate(batch, *phi, Player::attacker, env.gamma(), mode);
    clip_gradient(g.grad, grad_clip);
    Vec p = phi->params();
    axpy(kappa_a, g.grad, p);
    project_box(p, param_box);
    phi->set_params(p);
  }
  // The defender is frozen throughout the inner loop.
  require(params_checksum(theta_adapted.params()) == theta_sum, Errc::protocol,
          "inner_best_response: defender policy changed during the inner loop");
  return phi;
}

MetaTrainResult meta_rl_train(const MetaTrainConfig& config, const GameEnv& env,
                              const StochasticPolicy* init_theta) {
  config.validate();
  for (std::size_t k = 0; k < env.n_types(); ++k)
    require(!env.type_adaptive(k), Errc::config,
            "meta_rl_train: the type prior contains an adaptive type");

  MetaTrainResult out;
  out.theta = init_theta != nullptr ? init_theta->clone()
                                    : env.make_defender_policy(derive_seed(config.seed, 1));
  out.attacker_policies.resize(env.n_types());

  Rng type_rng(derive_seed(config.seed, 2));
  const double start = now_seconds();

  for (std::size_t t = 0; t < config.n_outer; ++t) {
    auto types = sample_types(env, config.k_types, type_rng);
    Vec offset_sum(out.theta->n_params(), 0.0);
    TrainLogRow row;
    row.iter = t;

    for (std::size_t j = 0; j < types.size(); ++j) {
      const std::size_t xi = types[j];
      std::size_t step_counter = 0;
      auto sampler = [&](const StochasticPolicy& pol) {
        return sample_batch(env, pol, nullptr, xi, config.batch_size,
                            batch_seed(config.seed, t, j * 64 + step_counter++, 1));
      };
      auto adapted = adapt(*out.theta, sampler, config.eta, config.adapt_steps,
                           Player::defender, env.gamma(), config.pg_mode, config.grad_clip);

      Vec offset = adapted->params();
      axpy(-1.0, out.theta->params(), offset);
      axpy(1.0, offset, offset_sum);

      auto eval_batch = sample_batch(env, *adapted, nullptr, xi, config.batch_size,
                                     batch_seed(config.seed, t, j, 3));
      row.defender_return += batch_mean_return(eval_batch, Player::defender, env.gamma());
      row.attacker_return += batch_mean_return(eval_batch, Player::attacker, env.gamma());
      row.defender_grad_norm += norm2(offset) / std::max(config.eta, 1e-12);
    }

    const double inv_k = 1.0 / static_cast<double>(types.size());
    Vec p = out.theta->params();
    axpy(config.kappa_d * inv_k, offset_sum, p);
    out.theta->set_params(p);

    row.defender_return *= inv_k;
    row.attacker_return *= inv_k;
    row.defender_grad_norm *= inv_k;
    row.fose_defender = norm2(offset_sum) * inv_k / std::max(config.eta, 1e-12);
    row.wall_time_s = now_seconds() - start;
    out.log.rows.push_back(row);
  }
  out.log.check_finite();
  return out;
}

MetaTrainResult meta_sg_train(const MetaTrainConfig& config, const GameEnv& env,
                              const StochasticPolicy* init_theta,
                              const std::vector<const StochasticPolicy*>* init_phis,
                              const IterationHook& hook) {
  config.validate();

  MetaTrainResult out;
  out.theta = init_theta != nullptr ? init_theta->clone()
                                    : env.make_defender_policy(derive_seed(config.seed, 1));

  // Warm-started attacker policies, one per adaptive type, persisting across
  // outer iterations.
  out.attacker_policies.resize(env.n_types());
  for (std::size_t k = 0; k < env.n_types(); ++k) {
    if (!env.type_adaptive(k)) continue;
    if (init_phis != nullptr && k < init_phis->size() && (*init_phis)[k] != nullptr)
      out.attacker_policies[k] = (*init_phis)[k]->clone();
    else
      out.attacker_policies[k] = env.make_attacker_policy(k, derive_seed(config.seed, 100 + k));
  }

  Rng type_rng(derive_seed(config.seed, 2));
  const double start = now_seconds();

  for (std::size_t t = 0; t < config.n_outer; ++t) {
    auto types = sample_types(env, config.k_types, type_rng);
    Vec grad_sum(out.theta->n_params(), 0.0);
    TrainLogRow row;
    row.iter = t;

    const std::uint64_t theta_checksum = params_checksum(out.theta->params());

    for (std::size_t j = 0; j < types.size(); ++j) {
      const std::size_t xi = types[j];
      const bool adaptive = env.type_adaptive(xi);
      StochasticPolicy* phi = adaptive ? out.attacker_policies[xi].get() : nullptr;

      // Line 11: one-step adaptation from a batch sampled under (theta, phi).
      // The training path adapts with the variance-reduced mode and the
      // configured clip; the debiased estimator below re-derives its own
      // adapted points through the exact vanilla map.
      auto batch1 = tag_batch(sample_batch(env, *out.theta, phi, xi, config.batch_size,
                                           batch_seed(config.seed, t, j, 1)),
                              *out.theta);
      std::unique_ptr<StochasticPolicy> theta_xi;
      {
        GradEstimate g =
            pg_estimate(batch1.trajs, *out.theta, Player::defender, env.gamma(), config.pg_mode);
        clip_gradient(g.grad, config.grad_clip);
        theta_xi = out.theta->clone();
        Vec p = theta_xi->params();
        axpy(config.eta, g.grad, p);
        project_box(p, config.param_box);
        theta_xi->set_params(p);
      }

      // Lines 13-15: attacker best response against the adapted defender.
      if (adaptive && config.n_inner > 0) {
        auto phi_next = inner_best_response(env, *theta_xi, *phi, xi, config.n_inner,
                                            config.kappa_a, config.batch_size, config.pg_mode,
                                            batch_seed(config.seed, t, j, 2), config.param_box,
                                            config.grad_clip);
        out.attacker_policies[xi] = std::move(phi_next);
        phi = out.attacker_policies[xi].get();
      }
      require(params_checksum(out.theta->params()) == theta_checksum, Errc::protocol,
              "meta_sg_train: theta moved during an inner loop");

      Vec grad_xi;
      if (config.variant == MetaVariant::debiased) {
        // Line 20: evaluate at theta via the chain rule. Each trajectory of
        // the shared batch1 serves as its own single-trajectory adaptation
        // sample with a small fresh second round; averaging those keeps the
        // score term's variance at 1/sqrt(N_b) instead of sqrt(N_b).
        grad_xi.assign(out.theta->n_params(), 0.0);
        const std::size_t inner_b = std::max<std::size_t>(4, config.batch_size / 16);
        const double inv_reps = 1.0 / static_cast<double>(batch1.trajs.size());
        for (std::size_t r = 0; r < batch1.trajs.size(); ++r) {
          TaggedBatch single = tag_batch({batch1.trajs[r]}, *out.theta);
          auto theta_r = one_step_adapted(*out.theta, single, config.eta, Player::defender,
                                          env.gamma());
          auto batch2 = tag_batch(sample_batch(env, *theta_r, phi, xi, inner_b,
                                               derive_seed(batch_seed(config.seed, t, j, 3), r)),
                                  *theta_r);
          axpy(inv_reps,
               debiased_meta_grad(*out.theta, config.eta, single, batch2, Player::defender,
                                  env.gamma())
                   .grad,
               grad_xi);
          if (r == 0) {
            row.defender_return +=
                batch_mean_return(batch2.trajs, Player::defender, env.gamma());
            row.attacker_return +=
                batch_mean_return(batch2.trajs, Player::attacker, env.gamma());
          }
        }
      } else {
        // Line 17 (Reptile): fresh batch, gradient at the adapted policy.
        auto batch3 = sample_batch(env, *theta_xi, phi, xi, config.batch_size,
                                   batch_seed(config.seed, t, j, 4));
        grad_xi = pg_estimate(batch3, *theta_xi, Player::defender, env.gamma(), config.pg_mode)
                      .grad;
        row.defender_return += batch_mean_return(batch3, Player::defender, env.gamma());
        row.attacker_return += batch_mean_return(batch3, Player::attacker, env.gamma());
      }
      axpy(1.0, grad_xi, grad_sum);

      if (adaptive && phi != nullptr) {
        auto probe = sample_batch(env, *theta_xi, phi, xi, 2,
                                  batch_seed(config.seed, t, j, 5));
        row.attacker_grad_norm +=
            norm2(pg_estimate(probe, *phi, Player::attacker, env.gamma(), config.pg_mode).grad);
      }
    }

    const double inv_k = 1.0 / static_cast<double>(types.size());
    Vec outer_grad = scaled(grad_sum, inv_k);
    clip_gradient(outer_grad, config.grad_clip);
    Vec p = out.theta->params();
    axpy(config.kappa_d, outer_grad, p);
    project_box(p, config.param_box);
    out.theta->set_params(p);

    row.defender_return *= inv_k;
    row.attacker_return *= inv_k;
    row.attacker_grad_norm *= inv_k;
    row.defender_grad_norm = norm2(grad_sum) * inv_k;
    row.fose_defender = row.defender_grad_norm;
    row.fose_attacker = row.attacker_grad_norm;
    row.wall_time_s = now_seconds() - start;
    out.log.rows.push_back(row);
    if (hook) hook(t, *out.theta, out.attacker_policies);
  }
  out.log.check_finite();
  return out;
}

OnlineAdaptResult online_adapt(const StochasticPolicy& theta_meta, const FLGameEnv& live_env,
                               std::size_t type, const StochasticPolicy* live_phi,
                               std::size_t adapt_rounds, std::size_t l, double eta,
                               std::size_t batch_size, std::uint64_t seed, PgMode mode,
                               double grad_clip) {
  require(adapt_rounds >= 1, Errc::config, "online_adapt: adapt_rounds must be positive");
  OnlineAdaptResult out;
  out.theta = theta_meta.clone();

  GameState live_state = live_env.initial_state(type, derive_seed(seed, 0x6c697665ULL));
  const double start =
      std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();

  std::size_t round = 0;
  std::size_t block = 0;
  while (round < live_env.horizon()) {
    const std::size_t block_len = std::min(adapt_rounds, live_env.horizon() - round);

    if (eta > 0.0 && l > 0) {
      // Branch trajectories off the current live model; rewards come from
      // the server-side assets baked into the environment.
      std::size_t step_counter = 0;
      auto sampler = [&](const StochasticPolicy& pol) {
        std::vector<Trajectory> batch;
        batch.reserve(batch_size);
        const std::uint64_t base =
            derive_seed(derive_seed(seed, 0xada57000ULL + block), step_counter++);
        for (std::size_t i = 0; i < batch_size; ++i) {
          batch.push_back(live_env
                              .rollout_with_metrics(pol, live_phi, type, derive_seed(base, i),
                                                    &live_state, block_len)
                              .trajectory);
        }
        return batch;
      };
      auto next = adapt(*out.theta, sampler, eta, l, Player::defender, live_env.gamma(), mode,
                        grad_clip);
      out.theta = std::move(next);
    }

    // Execute the block under the refreshed policy on the live system.
    auto exec = live_env.rollout_with_metrics(*out.theta, live_phi, type,
                                              derive_seed(seed, 0xe8ec0000ULL + block),
                                              &live_state, block_len);
    live_state = exec.final_state;
    for (auto& d : exec.details) out.execution.push_back(std::move(d));

    TrainLogRow row;
    row.iter = block;
    row.defender_return = exec.trajectory.ret(Player::defender, live_env.gamma());
    row.attacker_return = exec.trajectory.ret(Player::attacker, live_env.gamma());
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
            .count() -
        start;
    out.log.rows.push_back(row);

    round += block_len;
    ++block;
  }
  out.final_state = live_state;
  out.log.check_finite();
  return out;
}

}  // namespace metafl
