#include "metafl/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace metafl {

namespace {

namespace fs = std::filesystem;

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// Builds the simulated pre-training environment from the config as-is.
FLGameEnv make_domain_env(const ExperimentConfig& config) { return FLGameEnv(config.game); }

// The live environment: same world, point-mass prior on the live attack.
FLGameEnv make_live_env(const ExperimentConfig& config) {
  BSMGConfig live = config.game;
  AttackType attack =
      config.adapt.attack ? *config.adapt.attack : config.game.type_prior.front().first;
  live.type_prior = {{attack, 1.0}};
  return FLGameEnv(live);
}

bool all_types_non_adaptive(const FLGameEnv& env) {
  for (std::size_t k = 0; k < env.n_types(); ++k)
    if (env.type_adaptive(k)) return false;
  return true;
}

// A strong live adversary for adaptive live attacks: best response trained
// against the deployed policy before round 0.
std::unique_ptr<StochasticPolicy> pretrain_live_attacker(const FLGameEnv& live,
                                                         const StochasticPolicy& theta,
                                                         const ExperimentConfig& config) {
  auto phi = live.make_attacker_policy(0, derive_seed(config.seed, 0xf0e0ULL));
  if (config.train.n_inner == 0) return phi;
  return inner_best_response(live, theta, *phi, 0, config.train.n_inner * 3,
                             config.train.kappa_a, config.train.batch_size,
                             config.train.pg_mode, derive_seed(config.seed, 0xf0e1ULL));
}

}  // namespace

std::vector<Stage> parse_stages(const std::string& csv) {
  std::vector<Stage> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "pretrain")
      out.push_back(Stage::pretrain);
    else if (item == "adapt")
      out.push_back(Stage::adapt);
    else if (item == "evaluate")
      out.push_back(Stage::evaluate);
    else
      fail(Errc::config, "unknown stage: " + item);
  }
  require(!out.empty(), Errc::config, "no stages requested");
  // Stages must appear in pipeline order.
  for (std::size_t i = 1; i < out.size(); ++i)
    require(static_cast<int>(out[i]) > static_cast<int>(out[i - 1]), Errc::config,
            "stages must be ordered pretrain,adapt,evaluate");
  return out;
}

FixedActionPolicy::FixedActionPolicy(std::size_t obs_dim, Vec action)
    : obs_dim_(obs_dim), action_(std::move(action)) {}

RunArtifact run_pipeline(const ExperimentConfig& config_in, const std::vector<Stage>& stages,
                         const std::string& init_mode, const std::string& out_dir_override) {
  ExperimentConfig config = config_in;
  if (!out_dir_override.empty()) config.output.dir = out_dir_override;
  config.validate();
  require(init_mode == "checkpoint" || init_mode == "random", Errc::config,
          "init mode must be checkpoint|random");

  fs::create_directories(config.output.dir);
  RunArtifact artifact;
  artifact.out_dir = config.output.dir;
  artifact.seed = config.seed;
  artifact.config_hash = config_hash(config);

  // Config snapshot first; every artifact self-describes. The snapshot is
  // canonical in the output directory so reruns elsewhere stay byte-equal.
  artifact.config_snapshot_path = join(config.output.dir, "config_snapshot.json");
  {
    ExperimentConfig canonical = config;
    canonical.output.dir = ".";
    std::ofstream snap(artifact.config_snapshot_path);
    require(snap.good(), Errc::io, "cannot write config snapshot");
    snap << serialize_config(canonical);
  }

  const bool want_pretrain =
      std::find(stages.begin(), stages.end(), Stage::pretrain) != stages.end();
  const bool want_adapt = std::find(stages.begin(), stages.end(), Stage::adapt) != stages.end();
  const bool want_eval =
      std::find(stages.begin(), stages.end(), Stage::evaluate) != stages.end();

  std::unique_ptr<StochasticPolicy> theta;
  const std::string checkpoint = join(config.output.dir, "checkpoint.policy");

  if (want_pretrain) {
    FLGameEnv env = make_domain_env(config);
    MetaTrainResult result =
        config.train.variant == MetaVariant::meta_rl && all_types_non_adaptive(env)
            ? meta_rl_train(config.train, env)
            : meta_sg_train(config.train, env);
    theta = std::move(result.theta);
    artifact.pretrain_log_path = join(config.output.dir, "pretrain_log.csv");
    result.log.save_csv(artifact.pretrain_log_path);
    save_policy(*theta, checkpoint, config.seed, artifact.config_hash);
    artifact.checkpoint_path = checkpoint;
  }

  if (want_adapt) {
    FLGameEnv live = make_live_env(config);
    if (theta == nullptr) {
      if (init_mode == "random") {
        theta = live.make_defender_policy(derive_seed(config.seed, 0xabcdULL));
      } else {
        require(fs::exists(checkpoint), Errc::protocol,
                "adapt stage needs a checkpoint; run pretrain or pass --init random");
        theta = load_policy(checkpoint);
      }
    }
    std::unique_ptr<StochasticPolicy> live_phi;
    if (live.type_adaptive(0)) live_phi = pretrain_live_attacker(live, *theta, config);

    OnlineAdaptResult res = online_adapt(*theta, live, 0, live_phi.get(),
                                         config.adapt.adapt_rounds, config.adapt.l,
                                         config.adapt.eta, config.adapt.batch_size,
                                         derive_seed(config.seed, 0xadULL),
                                         config.train.pg_mode, config.train.grad_clip);
    theta = std::move(res.theta);
    artifact.adapt_log_path = join(config.output.dir, "adapt_log.csv");
    res.log.save_csv(artifact.adapt_log_path);
    save_policy(*theta, checkpoint, config.seed, artifact.config_hash);
    artifact.checkpoint_path = checkpoint;
  }

  if (want_eval) {
    FLGameEnv live = make_live_env(config);
    if (theta == nullptr && fs::exists(checkpoint) && init_mode == "checkpoint")
      theta = load_policy(checkpoint);

    std::vector<StepResult> rounds;
    if (theta == nullptr) {
      // Baseline path: plain FedAvg with no post-training surgery.
      FLGame game(live, 0, derive_seed(config.seed, 0xe7a1ULL));
      while (!game.done()) {
        AttackAction attack = game.attacker_updates(nullptr);
        rounds.push_back(game.step_custom(
            [](const std::vector<Vec>& u, const ModelParams&) { return fedavg(u); },
            [](const ModelParams& m) { return m; }, attack));
      }
      artifact.final_defender_return = 0.0;
      double disc = 1.0;
      for (const auto& r : rounds) {
        artifact.final_defender_return += disc * r.r_d;
        disc *= config.game.gamma;
      }
    } else {
      std::unique_ptr<StochasticPolicy> live_phi;
      if (live.type_adaptive(0)) live_phi = pretrain_live_attacker(live, *theta, config);
      auto eval = live.rollout_with_metrics(*theta, live_phi.get(), 0,
                                            derive_seed(config.seed, 0xe7a2ULL));
      rounds = std::move(eval.details);
      artifact.final_defender_return = eval.trajectory.ret(Player::defender, config.game.gamma);
    }

    // Per-round metrics on the held-out test set.
    for (auto& r : rounds) r.post_metrics = live.test_metrics(r.post_model);
    if (!rounds.empty()) artifact.final_test_metrics = rounds.back().post_metrics;

    artifact.metrics_path = join(config.output.dir, "metrics.csv");
    save_metrics_csv(artifact.metrics_path, artifact.config_hash + "-" +
                                                std::to_string(config.seed),
                     rounds);
  }
  return artifact;
}

void save_metrics_csv(const std::string& path, const std::string& run_id,
                      const std::vector<StepResult>& rounds) {
  std::ofstream out(path);
  require(out.good(), Errc::io, "cannot write metrics csv: " + path);
  out << "run_id,round,clean_acc,clean_loss,backdoor_acc,r_D,r_xi,action_alpha,action_beta,"
         "action_psi\n";
  for (std::size_t t = 0; t < rounds.size(); ++t) {
    const StepResult& r = rounds[t];
    out << run_id << ',' << t << ',' << fmt_double(r.post_metrics.clean_accuracy) << ','
        << fmt_double(r.post_metrics.clean_loss) << ','
        << fmt_double(r.post_metrics.backdoor_accuracy) << ',' << fmt_double(r.r_d) << ','
        << fmt_double(r.r_a) << ',' << fmt_double(r.decoded.alpha) << ','
        << fmt_double(r.decoded.beta) << ',' << fmt_double(r.decoded.psi) << "\n";
  }
}

void save_trajectories_csv(const std::string& path, const std::vector<Trajectory>& trajs) {
  std::ofstream out(path);
  require(out.good(), Errc::io, "cannot write trajectory csv: " + path);
  out << "episode,t,r_D,r_xi,a_D_0,a_D_1,a_D_2,a_A_0,a_A_1,a_A_2,obs_norm\n";
  for (std::size_t e = 0; e < trajs.size(); ++e) {
    for (std::size_t t = 0; t < trajs[e].horizon(); ++t) {
      const StepRecord& s = trajs[e].steps[t];
      auto comp = [](const Vec& v, std::size_t i) { return i < v.size() ? v[i] : 0.0; };
      out << e << ',' << t << ',' << fmt_double(s.r_d) << ',' << fmt_double(s.r_a);
      for (std::size_t i = 0; i < 3; ++i) out << ',' << fmt_double(comp(s.action_d, i));
      for (std::size_t i = 0; i < 3; ++i) out << ',' << fmt_double(comp(s.action_a, i));
      out << ',' << fmt_double(norm2(s.obs)) << "\n";
    }
  }
}

std::vector<std::string> builtin_matrix_defenses() {
  return {"fedavg", "median", "trimmed_mean", "norm_bound_median", "krum", "fltrust",
          "fltrust_neuroclip"};
}

namespace {

struct NamedDefense {
  NamedAggregator aggregate;
  PostTrainFn post_train;
};

NamedDefense make_named_defense(const std::string& name, const FLGameEnv& env,
                                std::size_t n_malicious) {
  const Dataset& root = env.eval_set();
  const auto& fl = env.config().fl;
  PostTrainFn identity = [](const ModelParams& m) { return m; };

  if (name == "fedavg")
    return {[](const std::vector<Vec>& u, const ModelParams&) { return fedavg(u); }, identity};
  if (name == "median")
    return {[](const std::vector<Vec>& u, const ModelParams&) { return coord_median(u); },
            identity};
  if (name == "trimmed_mean")
    return {[](const std::vector<Vec>& u, const ModelParams&) { return trimmed_mean(u, 0.2); },
            identity};
  if (name == "norm_bound_median")
    return {[](const std::vector<Vec>& u, const ModelParams&) {
              return coord_median(norm_bound(u, 1.0));
            },
            identity};
  if (name == "krum")
    return {[n_malicious](const std::vector<Vec>& u, const ModelParams&) {
              const std::size_t f = std::min(n_malicious, u.size() >= 3 ? u.size() - 3 : 0);
              return krum(u, f).update;
            },
            identity};
  if (name == "fltrust" || name == "fltrust_neuroclip") {
    NamedAggregator agg = [root, fl](const std::vector<Vec>& u, const ModelParams& model) {
      Rng rng(derive_seed(0x110ULL, params_checksum(model.weights)));
      Vec root_update = local_update(model, root, fl.local_lr, fl.local_iters, 0, rng);
      if (norm2(root_update) == 0.0) return fedavg(u);
      return fltrust(u, root_update);
    };
    if (name == "fltrust")
      return {agg, identity};
    return {agg, [](const ModelParams& m) { return neuroclip(m, 1.0); }};
  }
  fail(Errc::config, "unknown matrix defense: " + name);
}

}  // namespace

std::vector<MatrixCell> run_baseline_matrix(const ExperimentConfig& config,
                                            const std::vector<std::string>& defenses,
                                            const std::vector<AttackType>& attacks) {
  require(!defenses.empty() && !attacks.empty(), Errc::config,
          "matrix: defense and attack lists must be nonempty");
  std::vector<MatrixCell> cells;
  for (const AttackType& attack : attacks) {
    require(!attack.adaptive(), Errc::config,
            "matrix: adaptive attacks need the pipeline path, not the baseline matrix");
    BSMGConfig game = config.game;
    game.type_prior = {{attack, 1.0}};
    FLGameEnv env(game);
    const std::size_t m = attack.objective == AttackObjective::targeted ? config.game.fl.m1
                          : attack.method == AttackMethod::NA           ? 0
                                                                        : config.game.fl.m2;

    for (const std::string& name : defenses) {
      NamedDefense defense = make_named_defense(name, env, m);
      FLGame run(env, 0, derive_seed(config.seed, 0x3a7177ULL));
      double acc_sum = 0.0, bac_sum = 0.0;
      Metrics last;
      std::size_t rounds = 0;
      while (!run.done()) {
        AttackAction a = run.attacker_updates(nullptr);
        StepResult res = run.step_custom(defense.aggregate, defense.post_train, a);
        last = env.test_metrics(res.post_model);
        acc_sum += last.clean_accuracy;
        bac_sum += last.backdoor_accuracy;
        ++rounds;
      }
      MatrixCell cell;
      cell.attack = attack_method_name(attack.method);
      cell.defense = name;
      cell.acc_mean = acc_sum / static_cast<double>(rounds);
      cell.acc_final = last.clean_accuracy;
      cell.bac_mean = bac_sum / static_cast<double>(rounds);
      cell.bac_final = last.backdoor_accuracy;
      cells.push_back(cell);
    }
  }
  return cells;
}

void save_matrix_csv(const std::vector<MatrixCell>& cells,
                     const std::vector<std::string>& defenses, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io, "cannot write matrix csv: " + path);
  out << "attack";
  for (const auto& d : defenses)
    out << ',' << d << "_acc_mean," << d << "_acc_final," << d << "_bac_mean," << d
        << "_bac_final";
  out << "\n";
  for (std::size_t i = 0; i < cells.size(); i += defenses.size()) {
    out << cells[i].attack;
    for (std::size_t j = 0; j < defenses.size(); ++j) {
      const MatrixCell& c = cells[i + j];
      out << ',' << fmt_double(c.acc_mean) << ',' << fmt_double(c.acc_final) << ','
          << fmt_double(c.bac_mean) << ',' << fmt_double(c.bac_final);
    }
    out << "\n";
  }
}

}  // namespace metafl
