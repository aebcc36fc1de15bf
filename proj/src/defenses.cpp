#include "metafl/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace metafl {

namespace {

void check_updates(const std::vector<Vec>& updates, const char* who) {
  require(!updates.empty(), Errc::aggregation, std::string(who) + ": empty update list");
  const std::size_t d = updates.front().size();
  for (const Vec& u : updates)
    require(u.size() == d, Errc::aggregation, std::string(who) + ": ragged update lengths");
}

}  // namespace

void DefenseAction::check() const {
  require(alpha > 0.0, Errc::config, "defense action: alpha must be > 0");
  require(beta >= 0.0 && beta < 0.5, Errc::config, "defense action: beta must lie in [0, 0.5)");
  if (mode == PostTrainMode::clip)
    require(psi > 0.0, Errc::config, "defense action: clip range must be > 0");
  else
    require(psi >= 0.0 && psi <= 1.0, Errc::config, "defense action: mask rate must lie in [0,1]");
}

Vec fedavg(const std::vector<Vec>& updates) {
  check_updates(updates, "fedavg");
  return mean(updates);
}

Vec coord_median(const std::vector<Vec>& updates) {
  check_updates(updates, "coord_median");
  const std::size_t m = updates.size();
  const std::size_t d = updates.front().size();
  Vec out(d, 0.0);
  Vec col(m);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < m; ++i) col[i] = updates[i][j];
    std::sort(col.begin(), col.end());
    out[j] = m % 2 == 1 ? col[m / 2] : 0.5 * (col[m / 2 - 1] + col[m / 2]);
  }
  return out;
}

Vec trimmed_mean(const std::vector<Vec>& updates, double beta) {
  check_updates(updates, "trimmed_mean");
  const std::size_t m = updates.size();
  const std::size_t k = static_cast<std::size_t>(beta * static_cast<double>(m));
  require(2 * k < m, Errc::aggregation, "trimmed_mean: trim count leaves no coordinates");
  const std::size_t d = updates.front().size();
  Vec out(d, 0.0);
  Vec col(m);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < m; ++i) col[i] = updates[i][j];
    std::sort(col.begin(), col.end());
    double s = 0.0;
    for (std::size_t i = k; i < m - k; ++i) s += col[i];
    out[j] = s / static_cast<double>(m - 2 * k);
  }
  return out;
}

KrumResult krum(const std::vector<Vec>& updates, std::size_t f) {
  check_updates(updates, "krum");
  const std::size_t m = updates.size();
  require(m >= f + 3, Errc::aggregation, "krum: need at least f + 3 updates");
  const std::size_t neighbors = m - f - 2;

  std::vector<Vec> dist2(m, Vec(m, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < updates[i].size(); ++c) {
        double diff = updates[i][c] - updates[j][c];
        s += diff * diff;
      }
      dist2[i][j] = dist2[j][i] = s;
    }
  }

  double best_score = std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  Vec others;
  for (std::size_t i = 0; i < m; ++i) {
    others.clear();
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) others.push_back(dist2[i][j]);
    std::sort(others.begin(), others.end());
    double score = 0.0;
    for (std::size_t j = 0; j < neighbors; ++j) score += others[j];
    if (score < best_score) {  // strict: ties keep the lowest index
      best_score = score;
      best = i;
    }
  }
  return {updates[best], best};
}

std::vector<Vec> norm_bound(const std::vector<Vec>& updates, double alpha) {
  require(alpha > 0.0, Errc::config, "norm_bound: alpha must be > 0");
  std::vector<Vec> out;
  out.reserve(updates.size());
  for (const Vec& g : updates) {
    double n = norm2(g);
    out.push_back(n > alpha ? scaled(g, alpha / n) : g);
  }
  return out;
}

Vec fltrust(const std::vector<Vec>& updates, const Vec& root_update) {
  check_updates(updates, "fltrust");
  const double root_norm = norm2(root_update);
  require(root_norm > 0.0, Errc::config, "fltrust: root update must be nonzero");
  require(root_update.size() == updates.front().size(), Errc::aggregation,
          "fltrust: root update length mismatch");

  Vec out(root_update.size(), 0.0);
  double score_sum = 0.0;
  for (const Vec& g : updates) {
    const double gn = norm2(g);
    if (gn == 0.0) continue;  // zero update carries no direction, trust 0
    const double cosine = dot(g, root_update) / (gn * root_norm);
    const double s = std::max(0.0, cosine);
    if (s == 0.0) continue;
    axpy(s * root_norm / gn, g, out);
    score_sum += s;
  }
  if (score_sum > 0.0) scale(out, 1.0 / score_sum);
  return out;
}

ModelParams neuroclip(const ModelParams& model, double eps_clip) {
  require(eps_clip > 0.0, Errc::config, "neuroclip: clip range must be > 0");
  ModelParams out = model;
  const std::size_t last = model.layout.layers.size() - 1;
  const std::size_t off = model.layout.layer_offset(last);
  for (std::size_t i = off; i < out.weights.size(); ++i)
    out.weights[i] = std::clamp(out.weights[i], -eps_clip, eps_clip);
  return out;
}

ModelParams prune(const ModelParams& model, double sigma, const Dataset& probe_data) {
  require(sigma >= 0.0 && sigma <= 1.0, Errc::config, "prune: mask rate must lie in [0,1]");
  require(probe_data.size() > 0, Errc::data, "prune: probe data is empty");

  const std::size_t last = model.layout.layers.size() - 1;
  const std::size_t h = model.layout.layers[last].in;
  const std::size_t n_mask = static_cast<std::size_t>(sigma * static_cast<double>(h));
  if (n_mask == 0) return model;

  // Mean absolute activation of each unit feeding the final layer. For a
  // single-layer model this ranks raw input features.
  Vec activity(h, 0.0);
  for (std::size_t ex = 0; ex < probe_data.size(); ++ex) {
    const auto acts = forward_activations(model, probe_data.row(ex));
    const Vec& feed = acts[last];
    for (std::size_t u = 0; u < h; ++u) activity[u] += std::abs(feed[u]);
  }

  std::vector<std::size_t> order(h);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return activity[a] < activity[b]; });

  ModelParams out = model;
  const auto& l = model.layout.layers[last];
  double* W = out.weights.data() + model.layout.layer_offset(last);
  for (std::size_t r = 0; r < n_mask; ++r) {
    const std::size_t unit = order[r];
    for (std::size_t o = 0; o < l.out; ++o) W[o * l.in + unit] = 0.0;
  }
  return out;
}

DefenseOutcome apply_defense_action(const DefenseAction& a, const std::vector<Vec>& updates,
                                    const Dataset& probe_data) {
  a.check();
  DefenseOutcome out;
  out.aggregated = trimmed_mean(norm_bound(updates, a.alpha), a.beta);
  if (a.mode == PostTrainMode::clip) {
    const double psi = a.psi;
    out.post_train = [psi](const ModelParams& m) { return neuroclip(m, psi); };
  } else {
    const double psi = a.psi;
    const Dataset probe = probe_data;
    out.post_train = [psi, probe](const ModelParams& m) { return prune(m, psi, probe); };
  }
  out.audit.rule = "norm_bound+trimmed_mean";
  out.audit.alpha = a.alpha;
  out.audit.beta = a.beta;
  out.audit.psi = a.psi;
  out.audit.trimmed_counts = {
      static_cast<std::size_t>(a.beta * static_cast<double>(updates.size()))};
  return out;
}

DefenseAction decode_defense_action(const Vec& a3, const std::vector<Vec>& updates,
                                    PostTrainMode mode, double psi_min, double psi_max) {
  require(a3.size() == 3, Errc::shape, "decode_defense_action: need a 3-vector");
  for (double v : a3)
    require(v >= 0.0 && v <= 1.0, Errc::shape, "decode_defense_action: components outside [0,1]");
  require(psi_min > 0.0 && psi_max >= psi_min, Errc::config,
          "decode_defense_action: invalid psi range");

  double max_norm = 0.0;
  for (const Vec& g : updates) max_norm = std::max(max_norm, norm2(g));

  DefenseAction a;
  a.alpha = std::max(a3[0] * max_norm, 1e-12);
  a.beta = 0.5 * a3[1] * (1.0 - 1e-6);
  a.psi = psi_min * std::pow(psi_max / psi_min, a3[2]);
  if (mode == PostTrainMode::prune) a.psi = std::min(a.psi, 1.0);
  a.mode = mode;
  return a;
}

}  // namespace metafl
