#include "metafl/fl_core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace metafl {

namespace {

constexpr double kBlobSigma = 0.08;

double clip01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

std::size_t ModelLayout::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.param_count();
  return n;
}

std::size_t ModelLayout::layer_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < layer; ++i) off += layers[i].param_count();
  return off;
}

ModelLayout ModelLayout::softmax_regression(std::size_t dim, std::size_t n_classes) {
  ModelLayout ml;
  ml.layers.push_back({dim, n_classes, Activation::linear});
  return ml;
}

ModelLayout ModelLayout::mlp(std::size_t dim, std::size_t h1, std::size_t h2,
                             std::size_t n_classes) {
  ModelLayout ml;
  ml.layers.push_back({dim, h1, Activation::tanh_act});
  ml.layers.push_back({h1, h2, Activation::tanh_act});
  ml.layers.push_back({h2, n_classes, Activation::linear});
  return ml;
}

void ModelParams::check() const {
  require(weights.size() == layout.param_count(), Errc::shape,
          "model weights do not match layout parameter count");
  require(all_finite(weights), Errc::shape, "model weights contain non-finite entries");
}

ModelParams init_model(const ModelLayout& layout, std::uint64_t seed, double scale) {
  ModelParams m;
  m.layout = layout;
  m.weights.resize(layout.param_count());
  Rng rng(derive_seed(seed, 0x6d6f64656cULL));
  for (double& w : m.weights) w = scale * rng.normal();
  return m;
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.dim = dim;
  out.features.reserve(rows.size() * dim);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) {
    out.features.insert(out.features.end(), row(r), row(r) + dim);
    out.labels.push_back(labels[r]);
  }
  return out;
}

void FLConfig::validate(std::size_t n_classes) const {
  require(m1 + m2 <= n_clients, Errc::config, "m1 + m2 exceeds client count");
  require(subsample_rate > 0.0 && subsample_rate <= 1.0, Errc::config,
          "subsample_rate must lie in (0,1]");
  require(n_classes >= 2, Errc::config, "need at least two classes");
  require(non_iid_q >= 1.0 / static_cast<double>(n_classes), Errc::config,
          "non_iid_q must be at least 1/C");
}

Dataset generate_synthetic_dataset(std::size_t n, std::size_t n_classes, std::size_t dim,
                                   double separation, std::uint64_t seed) {
  require(n_classes >= 2, Errc::config, "generate_synthetic_dataset: need C >= 2");
  require(dim >= 2, Errc::config, "generate_synthetic_dataset: need dim >= 2");
  require(separation > 0.0, Errc::config, "generate_synthetic_dataset: separation must be > 0");

  // Class means sit on a lattice in the first two dimensions, spaced
  // separation * sigma apart and kept away from the clipping boundary.
  const std::size_t grid = static_cast<std::size_t>(
      std::ceil(std::sqrt(static_cast<double>(n_classes))));
  const std::size_t grid_rows = (n_classes + grid - 1) / grid;
  const double spacing = separation * kBlobSigma;
  std::vector<std::array<double, 2>> means(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    double gx = static_cast<double>(c % grid) - 0.5 * static_cast<double>(grid - 1);
    double gy = static_cast<double>(c / grid) - 0.5 * static_cast<double>(grid_rows - 1);
    means[c][0] = std::clamp(0.5 + gx * spacing, 0.1, 0.9);
    means[c][1] = std::clamp(0.5 + gy * spacing, 0.1, 0.9);
  }

  Dataset out;
  out.dim = dim;
  out.features.resize(n * dim);
  out.labels.resize(n);
  Rng rng(derive_seed(seed, 0x64617461ULL));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % n_classes;
    out.labels[i] = static_cast<int>(c);
    double* x = out.features.data() + i * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      double mu = j == 0 ? means[c][0] : (j == 1 ? means[c][1] : 0.5);
      x[j] = clip01(mu + kBlobSigma * rng.normal());
    }
  }
  return out;
}

std::vector<ClientDataset> partition_non_iid(const Dataset& data, std::size_t n_clients,
                                             double q, std::size_t n_classes,
                                             std::uint64_t seed) {
  require(n_classes >= 2, Errc::config, "partition_non_iid: need C >= 2");
  require(q >= 1.0 / static_cast<double>(n_classes), Errc::config,
          "partition_non_iid: q must be at least 1/C");
  require(n_clients >= n_classes, Errc::config,
          "partition_non_iid: need at least one client per group");
  require(data.labels.size() * data.dim == data.features.size(), Errc::shape,
          "partition_non_iid: dataset feature/label size mismatch");

  // Client i belongs to group i % C; remainder clients spread round-robin.
  std::vector<std::vector<std::size_t>> group_clients(n_classes);
  for (std::size_t i = 0; i < n_clients; ++i) group_clients[i % n_classes].push_back(i);

  Rng rng(derive_seed(seed, 0x706172ULL));
  std::vector<std::vector<std::size_t>> client_rows(n_clients);
  std::vector<std::size_t> group_fill(n_classes, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t c = static_cast<std::size_t>(data.labels[i]);
    require(c < n_classes, Errc::data, "partition_non_iid: label out of range");
    std::size_t g;
    if (rng.uniform01() < q) {
      g = c;
    } else {
      std::size_t other = rng.uniform_index(n_classes - 1);
      g = other < c ? other : other + 1;
    }
    const auto& clients = group_clients[g];
    client_rows[clients[group_fill[g] % clients.size()]].push_back(i);
    ++group_fill[g];
  }

  std::vector<ClientDataset> out(n_clients);
  for (std::size_t i = 0; i < n_clients; ++i) out[i].data = data.subset(client_rows[i]);
  return out;
}

Vec logits(const ModelParams& model, const double* x) {
  const auto& layers = model.layout.layers;
  Vec cur(x, x + model.layout.input_dim());
  std::size_t off = 0;
  for (const auto& l : layers) {
    Vec next(l.out, 0.0);
    const double* W = model.weights.data() + off;
    const double* b = W + l.in * l.out;
    for (std::size_t o = 0; o < l.out; ++o) {
      double s = b[o];
      const double* wrow = W + o * l.in;
      for (std::size_t i = 0; i < l.in; ++i) s += wrow[i] * cur[i];
      next[o] = l.act == Activation::tanh_act ? std::tanh(s) : s;
    }
    cur = std::move(next);
    off += l.param_count();
  }
  return cur;
}

std::vector<Vec> forward_activations(const ModelParams& model, const double* x) {
  const auto& layers = model.layout.layers;
  std::vector<Vec> acts;
  acts.emplace_back(x, x + model.layout.input_dim());
  std::size_t off = 0;
  for (const auto& l : layers) {
    const Vec& cur = acts.back();
    Vec next(l.out, 0.0);
    const double* W = model.weights.data() + off;
    const double* b = W + l.in * l.out;
    for (std::size_t o = 0; o < l.out; ++o) {
      double s = b[o];
      const double* wrow = W + o * l.in;
      for (std::size_t i = 0; i < l.in; ++i) s += wrow[i] * cur[i];
      next[o] = l.act == Activation::tanh_act ? std::tanh(s) : s;
    }
    acts.push_back(std::move(next));
    off += l.param_count();
  }
  return acts;
}

int predict(const ModelParams& model, const double* x) {
  Vec z = logits(model, x);
  std::size_t best = 0;
  for (std::size_t c = 1; c < z.size(); ++c)
    if (z[c] > z[best]) best = c;
  return static_cast<int>(best);
}

namespace {

// Stable log-softmax cross-entropy for one example; writes dlogits when asked.
double example_ce(const Vec& z, int label, Vec* dlogits) {
  double zmax = z[0];
  for (double v : z) zmax = std::max(zmax, v);
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  const double logsum = zmax + std::log(sum);
  if (dlogits) {
    dlogits->assign(z.size(), 0.0);
    for (std::size_t c = 0; c < z.size(); ++c) (*dlogits)[c] = std::exp(z[c] - logsum);
    (*dlogits)[static_cast<std::size_t>(label)] -= 1.0;
  }
  return logsum - z[static_cast<std::size_t>(label)];
}

void check_batch(const ModelParams& model, const Dataset& batch) {
  require(batch.size() > 0, Errc::data, "empty batch");
  require(batch.dim == model.layout.input_dim(), Errc::shape,
          "batch feature dimension does not match model input");
  require(batch.features.size() == batch.size() * batch.dim, Errc::shape,
          "batch feature/label size mismatch");
  const int n_out = static_cast<int>(model.layout.output_dim());
  for (int y : batch.labels)
    require(y >= 0 && y < n_out, Errc::data, "label outside model output range");
}

}  // namespace

double forward_loss(const ModelParams& model, const Dataset& batch) {
  model.check();
  check_batch(model, batch);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i)
    total += example_ce(logits(model, batch.row(i)), batch.labels[i], nullptr);
  return total / static_cast<double>(batch.size());
}

Vec grad(const ModelParams& model, const Dataset& batch) {
  model.check();
  check_batch(model, batch);
  const auto& layers = model.layout.layers;
  Vec g(model.dim(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  Vec dlogits;
  for (std::size_t ex = 0; ex < batch.size(); ++ex) {
    const auto acts = forward_activations(model, batch.row(ex));
    example_ce(acts.back(), batch.labels[ex], &dlogits);

    // Backprop through the dense stack; delta holds dLoss/d(post-activation).
    Vec delta = dlogits;
    for (std::size_t li = layers.size(); li-- > 0;) {
      const auto& l = layers[li];
      const std::size_t off = model.layout.layer_offset(li);
      const double* W = model.weights.data() + off;
      const Vec& input = acts[li];
      const Vec& output = acts[li + 1];

      // d(post)/d(pre) for tanh layers.
      Vec dpre(l.out);
      for (std::size_t o = 0; o < l.out; ++o) {
        double d = delta[o];
        if (l.act == Activation::tanh_act) d *= 1.0 - output[o] * output[o];
        dpre[o] = d;
      }
      double* gW = g.data() + off;
      double* gb = gW + l.in * l.out;
      for (std::size_t o = 0; o < l.out; ++o) {
        const double d = dpre[o] * inv_n;
        double* grow = gW + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) grow[i] += d * input[i];
        gb[o] += d;
      }
      if (li > 0) {
        Vec prev(l.in, 0.0);
        for (std::size_t o = 0; o < l.out; ++o) {
          const double d = dpre[o];
          const double* wrow = W + o * l.in;
          for (std::size_t i = 0; i < l.in; ++i) prev[i] += d * wrow[i];
        }
        delta = std::move(prev);
      }
    }
  }
  return g;
}

Vec local_update(const ModelParams& model, const Dataset& client_data, double lr,
                 std::size_t iters, std::size_t batch_size, Rng& rng) {
  require(client_data.size() > 0, Errc::data, "local_update: client data is empty");
  ModelParams local = model;
  Vec accum(model.dim(), 0.0);
  for (std::size_t it = 0; it < iters; ++it) {
    Vec g;
    if (batch_size == 0 || batch_size >= client_data.size()) {
      g = grad(local, client_data);
    } else {
      g = grad(local, client_data.subset(
                          rng.sample_without_replacement(client_data.size(), batch_size)));
    }
    axpy(1.0, g, accum);
    axpy(-lr, g, local.weights);
  }
  return accum;
}

ModelParams global_step(const ModelParams& model, const Vec& update, double eta) {
  require(update.size() == model.weights.size(), Errc::shape,
          "global_step: update length does not match model");
  ModelParams next = model;
  axpy(-eta, update, next.weights);
  next.check();
  return next;
}

Metrics evaluate(const ModelParams& model, const Dataset& eval_set, const PoisonMeta* trigger) {
  model.check();
  check_batch(model, eval_set);
  Metrics m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    Vec z = logits(model, eval_set.row(i));
    m.clean_loss += example_ce(z, eval_set.labels[i], nullptr);
    std::size_t best = 0;
    for (std::size_t c = 1; c < z.size(); ++c)
      if (z[c] > z[best]) best = c;
    if (static_cast<int>(best) == eval_set.labels[i]) ++correct;
  }
  m.clean_loss /= static_cast<double>(eval_set.size());
  m.clean_accuracy = static_cast<double>(correct) / static_cast<double>(eval_set.size());

  if (trigger != nullptr) {
    std::size_t tested = 0;
    std::size_t hits = 0;
    Vec x(eval_set.dim);
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
      if (eval_set.labels[i] == trigger->target_label) continue;
      std::memcpy(x.data(), eval_set.row(i), eval_set.dim * sizeof(double));
      for (std::size_t j : trigger->trigger_indices) {
        require(j < eval_set.dim, Errc::shape, "evaluate: trigger index out of range");
        x[j] = trigger->trigger_value;
      }
      ++tested;
      if (predict(model, x.data()) == trigger->target_label) ++hits;
    }
    m.backdoor_accuracy =
        tested == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(tested);
  }
  return m;
}

void save_dataset_csv(const Dataset& data, const std::string& path, std::uint64_t seed) {
  std::ofstream out(path);
  require(out.good(), Errc::io, "save_dataset_csv: cannot open " + path);
  out << "# metafl dataset seed=" << seed << " dim=" << data.dim << "\n";
  for (std::size_t j = 0; j < data.dim; ++j) out << "f" << j << ",";
  out << "label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.dim; ++j) out << fmt_double(data.row(i)[j]) << ",";
    out << data.labels[i] << "\n";
  }
}

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "load_dataset_csv: cannot open " + path);
  Dataset out;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      out.dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t j = 0; j < out.dim; ++j) {
      require(static_cast<bool>(std::getline(ss, cell, ',')), Errc::io,
              "load_dataset_csv: short row");
      out.features.push_back(std::strtod(cell.c_str(), nullptr));
    }
    require(static_cast<bool>(std::getline(ss, cell, ',')), Errc::io,
            "load_dataset_csv: missing label");
    out.labels.push_back(std::atoi(cell.c_str()));
  }
  require(header_seen, Errc::io, "load_dataset_csv: no header row");
  return out;
}

}  // namespace metafl
