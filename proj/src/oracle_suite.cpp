#include "metafl/oracle_suite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "metafl/defenses.hpp"
#include "metafl/estimators.hpp"
#include "metafl/fl_core.hpp"
#include "metafl/tabular.hpp"

namespace metafl {

namespace {

void push(OracleReport& rep, const std::string& check, std::uint64_t instance, double observed,
          double reference, bool pass) {
  rep.rows.push_back({check, instance, observed, reference, pass});
  if (!pass) ++rep.failures;
}

TabularSoftmaxPolicy seeded_policy(std::size_t states, std::size_t actions,
                                   std::uint64_t seed) {
  TabularSoftmaxPolicy p(states, actions);
  Rng rng(seed);
  Vec logits(p.n_params());
  for (double& v : logits) v = 0.7 * rng.normal();
  p.set_params(logits);
  return p;
}

}  // namespace

OracleReport run_oracle_suite(std::uint64_t seed, std::size_t n_instances, bool fault_inject) {
  OracleReport rep;
  if (n_instances == 0) return rep;

  // Gradient vs central finite differences.
  {
    Rng rng(derive_seed(seed, 1));
    for (std::size_t inst = 0; inst < n_instances; ++inst) {
      ModelLayout layout = inst % 2 == 0 ? ModelLayout::mlp(4, 5, 4, 3)
                                         : ModelLayout::softmax_regression(4, 3);
      ModelParams m;
      m.layout = layout;
      m.weights.resize(layout.param_count());
      for (double& w : m.weights) w = rng.normal();
      Dataset batch;
      batch.dim = 4;
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 4; ++j) batch.features.push_back(rng.uniform01());
        batch.labels.push_back(static_cast<int>(rng.uniform_index(3)));
      }
      Vec g = grad(m, batch);
      Vec fd(g.size());
      const double step = 1e-5;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ModelParams hi = m, lo = m;
        hi.weights[i] += step;
        lo.weights[i] -= step;
        fd[i] = (forward_loss(hi, batch) - forward_loss(lo, batch)) / (2.0 * step);
      }
      Vec diff = g;
      axpy(-1.0, fd, diff);
      double rel = norm2(diff) / std::max(norm2(fd), 1e-300);
      if (fault_inject && inst == 0) rel += 1.0;
      push(rep, "grad_fd", inst, rel, 1e-5, rel < 1e-5);
    }
  }

  // Krum and trimmed-mean brute-force equivalence.
  {
    Rng rng(derive_seed(seed, 2));
    for (std::size_t inst = 0; inst < n_instances * 10; ++inst) {
      const std::size_t m = 4 + rng.uniform_index(7);
      const std::size_t d = 1 + rng.uniform_index(5);
      std::vector<Vec> ups(m, Vec(d));
      for (auto& u : ups)
        for (double& v : u) v = rng.normal();
      const std::size_t f = m >= 3 ? rng.uniform_index(m - 2) : 0;
      if (m >= f + 3) {
        const std::size_t got = krum(ups, f).selected;
        // Independent re-selection from the definition.
        double best = 1e300;
        std::size_t want = 0;
        for (std::size_t i = 0; i < m; ++i) {
          std::vector<double> ds;
          for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c)
              s += (ups[i][c] - ups[j][c]) * (ups[i][c] - ups[j][c]);
            ds.push_back(s);
          }
          std::sort(ds.begin(), ds.end());
          double score = 0.0;
          for (std::size_t ngh = 0; ngh < m - f - 2; ++ngh) score += ds[ngh];
          if (score < best) {
            best = score;
            want = i;
          }
        }
        push(rep, "krum_brute", inst, static_cast<double>(got), static_cast<double>(want),
             got == want);
      }
      const double beta = 0.49 * rng.uniform01();
      const std::size_t k = static_cast<std::size_t>(beta * static_cast<double>(m));
      if (2 * k < m) {
        Vec got = trimmed_mean(ups, beta);
        double worst = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          Vec col;
          for (const auto& u : ups) col.push_back(u[j]);
          std::sort(col.begin(), col.end());
          double s = 0.0;
          for (std::size_t i = k; i < m - k; ++i) s += col[i];
          worst = std::max(worst, std::abs(got[j] - s / static_cast<double>(m - 2 * k)));
        }
        push(rep, "trimmed_mean_brute", inst, worst, 1e-12, worst <= 1e-12);
      }
    }
  }

  // Policy gradient against the enumerated gradient on the reference MDP.
  {
    TabularBSMG game = TabularBSMG::reference_mdp();
    TabularSoftmaxPolicy theta = reference_policy();
    TabularSoftmaxPolicy phi(3, 1);
    const Vec exact = exact_value_and_grad(game, theta, phi, 0, Player::defender).grad;
    const std::size_t nb = 20000;  // fixed: the tolerance assumes this scale
    std::vector<Trajectory> batch;
    batch.reserve(nb);
    for (std::size_t i = 0; i < nb; ++i) {
      Rng rng(derive_seed(derive_seed(seed, 4), i));
      batch.push_back(sample_tabular_trajectory(game, theta, phi, 0, rng));
    }
    Vec est = pg_estimate(batch, theta, Player::defender, game.gamma, PgMode::vanilla).grad;
    Vec diff = est;
    axpy(-1.0, exact, diff);
    const double rel = norm2(diff) / norm2(exact);
    push(rep, "pg_vs_exact", 0, rel, 0.08, rel < 0.08);
  }

  // Proposition-style bound and the residue-factorization inequality.
  {
    Rng rng(derive_seed(seed, 5));
    for (std::size_t inst = 0; inst < n_instances; ++inst) {
      TabularBSMG game = TabularBSMG::random(derive_seed(seed, 600 + inst), 2, 2, 2, 1, 2,
                                             0.9, 0.0, 1.0);
      std::vector<TabularSoftmaxPolicy> phis;
      const std::size_t m = 1 + rng.uniform_index(3);
      for (std::size_t i = 0; i < m; ++i)
        phis.push_back(seeded_policy(2, 2, derive_seed(seed, 700 + inst * 7 + i)));
      auto phi_new = seeded_policy(2, 2, derive_seed(seed, 800 + inst));
      auto theta = seeded_policy(2, 2, derive_seed(seed, 900 + inst));

      BoundCheck bc = generalization_bound_check(game, theta, phis, phi_new, 0.1, 0);
      double lhs = bc.lhs;
      if (fault_inject && inst == 0) lhs = bc.bound + 1.0;
      push(rep, "generalization_bound", inst, lhs, bc.bound, lhs <= bc.bound + 1e-12);

      const Vec d_new = marginal_residue(game, phi_new);
      const Vec d_0 = marginal_residue(game, phis[0]);
      const Vec q_new = enumerate_traj_dist(game, theta, phi_new);
      const Vec q_0 = enumerate_traj_dist(game, theta, phis[0]);
      const double tv_q = tv_distance(q_new, q_0);
      const double tv_d = tv_distance(d_new, d_0);
      push(rep, "residue_factorization", inst, tv_q, tv_d, tv_q <= tv_d + 1e-12);
    }
  }

  // Debiased meta gradient mean against the enumerated meta gradient.
  {
    TabularBSMG game = TabularBSMG::reference_mdp();
    TabularSoftmaxPolicy theta = reference_policy();
    TabularSoftmaxPolicy phi(3, 1);
    const double eta = 0.1;
    const Vec exact = exact_meta_grad_defender(game, theta, phi, 0, eta);
    const std::size_t reps = 400;  // fixed: the tolerance assumes this scale
    Vec mean_est(theta.n_params(), 0.0);
    for (std::size_t rep_i = 0; rep_i < reps; ++rep_i) {
      std::vector<Trajectory> b1;
      {
        Rng rng(derive_seed(derive_seed(seed, 7), rep_i));
        b1.push_back(sample_tabular_trajectory(game, theta, phi, 0, rng));
      }
      auto batch1 = tag_batch(std::move(b1), theta);
      auto adapted = one_step_adapted(theta, batch1, eta, Player::defender, game.gamma);
      auto* tp = dynamic_cast<TabularSoftmaxPolicy*>(adapted.get());
      std::vector<Trajectory> b2;
      b2.reserve(256);
      for (std::size_t i = 0; i < 256; ++i) {
        Rng rng(derive_seed(derive_seed(seed, 8), rep_i * 1000 + i));
        b2.push_back(sample_tabular_trajectory(game, *tp, phi, 0, rng));
      }
      auto batch2 = tag_batch(std::move(b2), *adapted);
      axpy(1.0 / static_cast<double>(reps),
           debiased_meta_grad(theta, eta, batch1, batch2, Player::defender, game.gamma).grad,
           mean_est);
    }
    Vec diff = mean_est;
    axpy(-1.0, exact, diff);
    const double rel = norm2(diff) / norm2(exact);
    push(rep, "debiased_meta_vs_exact", 0, rel, 0.15, rel < 0.15);
  }

  return rep;
}

void save_oracle_csv(const OracleReport& report, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io, "oracle suite: cannot write " + path);
  out << "check,instance,observed,reference,pass\n";
  for (const auto& r : report.rows)
    out << r.check << ',' << r.instance << ',' << fmt_double(r.observed) << ','
        << fmt_double(r.reference) << ',' << (r.pass ? 1 : 0) << "\n";
}

}  // namespace metafl
