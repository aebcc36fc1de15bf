#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "metafl/common.hpp"
#include "metafl/rng.hpp"

namespace metafl {

enum class Activation { linear, tanh_act };

struct LayerSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation act = Activation::linear;

  std::size_t param_count() const { return in * out + out; }
  bool operator==(const LayerSpec&) const = default;
};

// Ordered dense-layer shapes. Parameters pack per layer as the weight matrix
// (row-major, out x in) followed by the bias vector.
struct ModelLayout {
  std::vector<LayerSpec> layers;

  std::size_t param_count() const;
  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }
  std::size_t layer_offset(std::size_t layer) const;
  bool operator==(const ModelLayout&) const = default;

  static ModelLayout softmax_regression(std::size_t dim, std::size_t n_classes);
  static ModelLayout mlp(std::size_t dim, std::size_t hidden1, std::size_t hidden2,
                         std::size_t n_classes);
};

// The global model w_g and every local variant of it.
struct ModelParams {
  Vec weights;
  ModelLayout layout;

  std::size_t dim() const { return weights.size(); }
  void check() const;
};

ModelParams init_model(const ModelLayout& layout, std::uint64_t seed, double scale = 0.1);

struct Dataset {
  std::size_t dim = 0;
  Vec features;             // row-major, size() * dim
  std::vector<int> labels;  // class ids in [0, C)

  std::size_t size() const { return labels.size(); }
  const double* row(std::size_t i) const { return features.data() + i * dim; }
  Dataset subset(const std::vector<std::size_t>& rows) const;
  bool operator==(const Dataset&) const = default;
};

// Poisoning bookkeeping carried next to a client's data so that the exact
// poisoned-row count stays checkable.
struct PoisonMeta {
  std::vector<std::size_t> trigger_indices;
  double trigger_value = 1.0;
  int target_label = 0;
  double ratio = 0.0;
  std::vector<std::size_t> poisoned_rows;
};

struct ClientDataset {
  Dataset data;
  std::optional<PoisonMeta> poison;
};

struct Metrics {
  double clean_loss = 0.0;
  double clean_accuracy = 0.0;
  double backdoor_accuracy = 0.0;
};

struct FLConfig {
  std::size_t n_clients = 100;
  std::size_t m1 = 0;  // targeted attackers, client ids [0, m1)
  std::size_t m2 = 0;  // untargeted attackers, client ids [m1, m1+m2)
  double subsample_rate = 0.1;
  double local_lr = 0.05;
  std::size_t local_iters = 1;
  std::size_t batch_size = 128;
  std::size_t rounds = 500;
  double non_iid_q = 0.5;
  std::uint64_t seed = 0;

  void validate(std::size_t n_classes) const;
};

// Class-conditional Gaussian blobs on a lattice in the first two feature
// dimensions, clipped to [0,1]. Stands in for the paper-scale image data.
Dataset generate_synthetic_dataset(std::size_t n_examples, std::size_t n_classes,
                                   std::size_t dim, double class_separation,
                                   std::uint64_t seed);

// Group-based label-skew partition: an instance labeled c lands in group c
// with probability q and in each other group with probability (1-q)/(C-1).
std::vector<ClientDataset> partition_non_iid(const Dataset& data, std::size_t n_clients,
                                             double q, std::size_t n_classes,
                                             std::uint64_t seed);

double forward_loss(const ModelParams& model, const Dataset& batch);
Vec grad(const ModelParams& model, const Dataset& batch);

// Per-example logits, plus post-activation values per layer when requested.
Vec logits(const ModelParams& model, const double* x);
std::vector<Vec> forward_activations(const ModelParams& model, const double* x);
int predict(const ModelParams& model, const double* x);

// Accumulated local SGD displacement: the sum of the per-iteration gradients
// along the local descent path. The server applies w <- w - eta * Aggr(g), so
// a benign update is exactly this accumulation.
Vec local_update(const ModelParams& model, const Dataset& client_data, double lr,
                 std::size_t iters, std::size_t batch_size, Rng& rng);

ModelParams global_step(const ModelParams& model, const Vec& aggregated_update, double eta);

// Clean loss/accuracy on eval data; backdoor accuracy over non-target-class
// rows with the trigger inserted (0 when no trigger is given).
Metrics evaluate(const ModelParams& model, const Dataset& eval_set,
                 const PoisonMeta* trigger = nullptr);

// CSV import/export, header row "f0,...,f{d-1},label" preceded by a metadata
// comment line carrying the generating seed.
void save_dataset_csv(const Dataset& data, const std::string& path, std::uint64_t seed);
Dataset load_dataset_csv(const std::string& path);

}  // namespace metafl
