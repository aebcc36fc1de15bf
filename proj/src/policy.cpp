#include "metafl/policy.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace metafl {

namespace {

constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;
constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kSquashEps = 1e-12;

double squash(double u) { return 0.5 * (std::tanh(u) + 1.0); }

double unsquash(double a) {
  a = std::min(std::max(a, kSquashEps), 1.0 - kSquashEps);
  return std::atanh(2.0 * a - 1.0);
}

// log |da/du| for the squash map.
double squash_logdet(double u) {
  double t = std::tanh(u);
  return std::log(0.5 * (1.0 - t * t) + 1e-300);
}

}  // namespace

double Trajectory::ret(Player p, double gamma) const {
  double total = 0.0;
  double disc = 1.0;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    total += disc * reward(t, p);
    disc *= gamma;
  }
  return total;
}

Mat StochasticPolicy::logprob_hessian(const Vec& obs, const Vec& action) const {
  const std::size_t n = n_params();
  require(n <= 4096, Errc::capability,
          "generic logprob_hessian limited to small parameter counts");
  Mat H(n, n);
  Vec e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    Vec col = logprob_grad_dir(obs, action, e);
    for (std::size_t i = 0; i < n; ++i) H.at(i, j) = col[i];
    e[j] = 0.0;
  }
  return H;
}

Vec StochasticPolicy::logprob_grad_dir(const Vec& obs, const Vec& action, const Vec& v) const {
  // Central difference of the exact analytic gradient along v.
  const double vn = norm2(v);
  if (vn == 0.0) return Vec(n_params(), 0.0);
  const double h = 1e-6 / vn;
  auto hi = clone();
  auto lo = clone();
  Vec p = params();
  Vec ph = p, pl = p;
  axpy(h, v, ph);
  axpy(-h, v, pl);
  hi->set_params(ph);
  lo->set_params(pl);
  Vec gh = hi->logprob_grad(obs, action);
  Vec gl = lo->logprob_grad(obs, action);
  axpy(-1.0, gl, gh);
  scale(gh, 1.0 / (2.0 * h));
  return gh;
}

GaussianMlpPolicy::GaussianMlpPolicy(std::size_t obs_dim, std::size_t hidden,
                                     std::size_t action_dim, std::uint64_t seed,
                                     double init_scale)
    : k_(action_dim) {
  layout_.layers.push_back({obs_dim, hidden, Activation::tanh_act});
  layout_.layers.push_back({hidden, action_dim, Activation::linear});
  params_.resize(layout_.param_count() + k_);
  Rng rng(derive_seed(seed, 0x706f6c696379ULL));
  for (std::size_t i = 0; i < layout_.param_count(); ++i) params_[i] = init_scale * rng.normal();
  for (std::size_t i = 0; i < k_; ++i) params_[layout_.param_count() + i] = -1.0;
}

void GaussianMlpPolicy::set_params(const Vec& p) {
  require(p.size() == params_.size(), Errc::shape, "policy parameter length mismatch");
  require(all_finite(p), Errc::shape, "policy parameters contain non-finite entries");
  params_ = p;
}

double GaussianMlpPolicy::effective_logstd(std::size_t dim, bool* active) const {
  const double raw = params_[layout_.param_count() + dim];
  const double clamped = std::min(std::max(raw, kLogStdMin), kLogStdMax);
  if (active != nullptr) *active = raw > kLogStdMin && raw < kLogStdMax;
  return clamped;
}

Vec GaussianMlpPolicy::net_mean(const Vec& obs) const {
  require(obs.size() == layout_.input_dim(), Errc::shape, "policy observation dim mismatch");
  ModelParams view;
  view.layout = layout_;
  view.weights.assign(params_.begin(), params_.begin() + layout_.param_count());
  return logits(view, obs.data());
}

Vec GaussianMlpPolicy::mean_action(const Vec& obs) const {
  Vec m = net_mean(obs);
  for (double& v : m) v = squash(v);
  return m;
}

std::pair<Vec, double> GaussianMlpPolicy::sample(const Vec& obs, Rng& rng) const {
  Vec m = net_mean(obs);
  Vec action(k_);
  double logp = 0.0;
  for (std::size_t d = 0; d < k_; ++d) {
    const double ls = effective_logstd(d, nullptr);
    const double sigma = std::exp(ls);
    const double u = m[d] + sigma * rng.normal();
    const double z = (u - m[d]) / sigma;
    action[d] = squash(u);
    logp += -0.5 * z * z - ls - kHalfLog2Pi - squash_logdet(u);
  }
  return {action, logp};
}

double GaussianMlpPolicy::log_prob(const Vec& obs, const Vec& action) const {
  require(action.size() == k_, Errc::shape, "policy action dim mismatch");
  Vec m = net_mean(obs);
  double logp = 0.0;
  for (std::size_t d = 0; d < k_; ++d) {
    const double ls = effective_logstd(d, nullptr);
    const double sigma = std::exp(ls);
    const double u = unsquash(action[d]);
    const double z = (u - m[d]) / sigma;
    logp += -0.5 * z * z - ls - kHalfLog2Pi - squash_logdet(u);
  }
  return logp;
}

Vec GaussianMlpPolicy::logprob_grad(const Vec& obs, const Vec& action) const {
  require(action.size() == k_, Errc::shape, "policy action dim mismatch");
  const auto acts = [&] {
    ModelParams view;
    view.layout = layout_;
    view.weights.assign(params_.begin(), params_.begin() + layout_.param_count());
    return forward_activations(view, obs.data());
  }();
  const Vec& m = acts.back();

  Vec g(params_.size(), 0.0);
  Vec dmean(k_, 0.0);
  for (std::size_t d = 0; d < k_; ++d) {
    bool active = false;
    const double ls = effective_logstd(d, &active);
    const double sigma = std::exp(ls);
    const double u = unsquash(action[d]);
    const double z = (u - m[d]) / sigma;
    dmean[d] = z / sigma;
    if (active) g[layout_.param_count() + d] = z * z - 1.0;
  }

  // Backprop dmean through the dense stack.
  Vec delta = dmean;
  const auto& layers = layout_.layers;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& l = layers[li];
    const std::size_t off = layout_.layer_offset(li);
    const double* W = params_.data() + off;
    const Vec& input = acts[li];
    const Vec& output = acts[li + 1];
    Vec dpre(l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
      double d = delta[o];
      if (l.act == Activation::tanh_act) d *= 1.0 - output[o] * output[o];
      dpre[o] = d;
    }
    double* gW = g.data() + off;
    double* gb = gW + l.in * l.out;
    for (std::size_t o = 0; o < l.out; ++o) {
      double* grow = gW + o * l.in;
      for (std::size_t i = 0; i < l.in; ++i) grow[i] += dpre[o] * input[i];
      gb[o] += dpre[o];
    }
    if (li > 0) {
      Vec prev(l.in, 0.0);
      for (std::size_t o = 0; o < l.out; ++o) {
        const double* wrow = W + o * l.in;
        for (std::size_t i = 0; i < l.in; ++i) prev[i] += dpre[o] * wrow[i];
      }
      delta = std::move(prev);
    }
  }
  return g;
}

std::unique_ptr<StochasticPolicy> GaussianMlpPolicy::clone() const {
  return std::make_unique<GaussianMlpPolicy>(*this);
}

TabularSoftmaxPolicy::TabularSoftmaxPolicy(std::size_t n_states, std::size_t n_actions)
    : n_states_(n_states), n_actions_(n_actions), params_(n_states * n_actions, 0.0) {}

void TabularSoftmaxPolicy::set_params(const Vec& p) {
  require(p.size() == params_.size(), Errc::shape, "tabular policy parameter length mismatch");
  require(all_finite(p), Errc::shape, "tabular policy parameters contain non-finite entries");
  params_ = p;
}

Vec TabularSoftmaxPolicy::probs(std::size_t state) const {
  require(state < n_states_, Errc::shape, "tabular policy: state out of range");
  const double* row = params_.data() + state * n_actions_;
  double zmax = row[0];
  for (std::size_t a = 1; a < n_actions_; ++a) zmax = std::max(zmax, row[a]);
  Vec p(n_actions_);
  double sum = 0.0;
  for (std::size_t a = 0; a < n_actions_; ++a) {
    p[a] = std::exp(row[a] - zmax);
    sum += p[a];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::pair<Vec, double> TabularSoftmaxPolicy::sample(const Vec& obs, Rng& rng) const {
  const std::size_t s = static_cast<std::size_t>(obs.at(0));
  Vec p = probs(s);
  double r = rng.uniform01();
  std::size_t a = n_actions_ - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < n_actions_; ++i) {
    acc += p[i];
    if (r < acc) {
      a = i;
      break;
    }
  }
  return {Vec{static_cast<double>(a)}, std::log(p[a])};
}

double TabularSoftmaxPolicy::log_prob(const Vec& obs, const Vec& action) const {
  const std::size_t s = static_cast<std::size_t>(obs.at(0));
  const std::size_t a = static_cast<std::size_t>(action.at(0));
  return std::log(probs(s)[a]);
}

Vec TabularSoftmaxPolicy::logprob_grad(const Vec& obs, const Vec& action) const {
  const std::size_t s = static_cast<std::size_t>(obs.at(0));
  const std::size_t a = static_cast<std::size_t>(action.at(0));
  Vec p = probs(s);
  Vec g(params_.size(), 0.0);
  double* row = g.data() + s * n_actions_;
  for (std::size_t b = 0; b < n_actions_; ++b) row[b] = (b == a ? 1.0 : 0.0) - p[b];
  return g;
}

Mat TabularSoftmaxPolicy::logprob_hessian(const Vec& obs, const Vec& action) const {
  (void)action;  // the softmax log-Hessian does not depend on the action
  const std::size_t s = static_cast<std::size_t>(obs.at(0));
  Vec p = probs(s);
  Mat H(params_.size(), params_.size());
  const std::size_t base = s * n_actions_;
  for (std::size_t b = 0; b < n_actions_; ++b)
    for (std::size_t c = 0; c < n_actions_; ++c)
      H.at(base + b, base + c) = p[b] * p[c] - (b == c ? p[b] : 0.0);
  return H;
}

Vec TabularSoftmaxPolicy::logprob_grad_dir(const Vec& obs, const Vec& action,
                                           const Vec& v) const {
  (void)action;
  const std::size_t s = static_cast<std::size_t>(obs.at(0));
  Vec p = probs(s);
  Vec out(params_.size(), 0.0);
  const std::size_t base = s * n_actions_;
  double pv = 0.0;
  for (std::size_t c = 0; c < n_actions_; ++c) pv += p[c] * v[base + c];
  for (std::size_t b = 0; b < n_actions_; ++b) out[base + b] = p[b] * (pv - v[base + b]);
  return out;
}

std::unique_ptr<StochasticPolicy> TabularSoftmaxPolicy::clone() const {
  return std::make_unique<TabularSoftmaxPolicy>(*this);
}

std::uint64_t params_checksum(const Vec& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double d : params) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void save_policy(const StochasticPolicy& policy, const std::string& path, std::uint64_t seed,
                 const std::string& config_hash) {
  std::ofstream out(path);
  require(out.good(), Errc::io, "save_policy: cannot open " + path);
  if (const auto* g = dynamic_cast<const GaussianMlpPolicy*>(&policy)) {
    const auto& ls = g->layout().layers;
    out << "metafl-policy v1 kind=gaussian_mlp obs=" << ls[0].in << " hidden=" << ls[0].out
        << " actions=" << g->action_dim() << " seed=" << seed << " config=" << config_hash
        << "\n";
  } else if (const auto* t = dynamic_cast<const TabularSoftmaxPolicy*>(&policy)) {
    out << "metafl-policy v1 kind=tabular states=" << t->n_states()
        << " actions=" << t->n_actions() << " seed=" << seed << " config=" << config_hash
        << "\n";
  } else {
    fail(Errc::capability, "save_policy: unknown policy kind");
  }
  for (double p : policy.params()) out << fmt_double(p) << "\n";
}

std::unique_ptr<StochasticPolicy> load_policy(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "load_policy: cannot open " + path);
  std::string header;
  require(static_cast<bool>(std::getline(in, header)), Errc::io, "load_policy: empty file");
  require(header.rfind("metafl-policy v1 ", 0) == 0, Errc::io,
          "load_policy: unrecognized header");

  auto field = [&](const std::string& key) -> std::string {
    auto pos = header.find(key + "=");
    require(pos != std::string::npos, Errc::io, "load_policy: missing field " + key);
    pos += key.size() + 1;
    auto end = header.find(' ', pos);
    return header.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
  };

  std::unique_ptr<StochasticPolicy> policy;
  const std::string kind = field("kind");
  if (kind == "gaussian_mlp") {
    policy = std::make_unique<GaussianMlpPolicy>(std::stoul(field("obs")),
                                                 std::stoul(field("hidden")),
                                                 std::stoul(field("actions")), 0);
  } else if (kind == "tabular") {
    policy = std::make_unique<TabularSoftmaxPolicy>(std::stoul(field("states")),
                                                    std::stoul(field("actions")));
  } else {
    fail(Errc::io, "load_policy: unknown kind " + kind);
  }

  Vec params;
  params.reserve(policy->n_params());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    params.push_back(std::strtod(line.c_str(), nullptr));
  }
  policy->set_params(params);
  return policy;
}

}  // namespace metafl
