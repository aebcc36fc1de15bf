#pragma once

#include <functional>
#include <string>
#include <vector>

#include "metafl/common.hpp"
#include "metafl/fl_core.hpp"

namespace metafl {

enum class PostTrainMode { clip, prune };

// Compressed defense action (alpha, beta, psi): norm threshold, trim rate,
// post-training parameter (clip range or prune mask rate).
struct DefenseAction {
  double alpha = 1.0;
  double beta = 0.0;
  double psi = 1.0;
  PostTrainMode mode = PostTrainMode::clip;

  void check() const;
};

Vec fedavg(const std::vector<Vec>& updates);
Vec coord_median(const std::vector<Vec>& updates);
Vec trimmed_mean(const std::vector<Vec>& updates, double beta);

struct KrumResult {
  Vec update;
  std::size_t selected = 0;
};
KrumResult krum(const std::vector<Vec>& updates, std::size_t f);

std::vector<Vec> norm_bound(const std::vector<Vec>& updates, double alpha);
Vec fltrust(const std::vector<Vec>& updates, const Vec& root_update);

// Clamps final-layer weights to [-eps, +eps]; other layers untouched.
ModelParams neuroclip(const ModelParams& model, double eps_clip);

// Zeroes outgoing weights of the floor(sigma*h) units feeding the final layer
// with the smallest mean absolute activation on probe data; ties break toward
// the lowest unit index.
ModelParams prune(const ModelParams& model, double sigma, const Dataset& probe_data);

using PostTrainFn = std::function<ModelParams(const ModelParams&)>;

struct AggregationAudit {
  std::string rule;
  double alpha = 0.0;
  double beta = 0.0;
  double psi = 0.0;
  std::vector<std::size_t> trimmed_counts;  // per-coordinate trims collapse to {k}
};

struct DefenseOutcome {
  Vec aggregated;
  PostTrainFn post_train;
  AggregationAudit audit;
};

// Pipeline: norm_bound(alpha) then trimmed_mean(beta). The returned handle is
// evaluation-only surgery; it never feeds the state transition.
DefenseOutcome apply_defense_action(const DefenseAction& a, const std::vector<Vec>& updates,
                                    const Dataset& probe_data);

// Maps a policy action in [0,1]^3 onto a concrete DefenseAction. alpha scales
// against the largest update norm, beta stays below 0.5, psi is log-uniform
// over [psi_min, psi_max].
DefenseAction decode_defense_action(const Vec& a3, const std::vector<Vec>& updates,
                                    PostTrainMode mode, double psi_min, double psi_max);

}  // namespace metafl
