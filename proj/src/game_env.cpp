#include "metafl/game_env.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

namespace metafl {

namespace {

std::size_t g_workers = 0;  // 0 = uninitialized

std::size_t detect_workers() {
  if (const char* env = std::getenv("METAFL_WORKERS")) {
    long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace

std::size_t worker_count() {
  if (g_workers == 0) g_workers = detect_workers();
  return g_workers;
}

void set_worker_count(std::size_t n) { g_workers = n == 0 ? 1 : n; }

std::vector<Trajectory> sample_batch(const GameEnv& env, const StochasticPolicy& theta,
                                     const StochasticPolicy* phi, std::size_t type,
                                     std::size_t n, std::uint64_t seed) {
  std::vector<Trajectory> out(n);
  const std::size_t workers = std::min(worker_count(), n == 0 ? std::size_t(1) : n);
  if (workers <= 1 || n < 4) {
    for (std::size_t i = 0; i < n; ++i)
      out[i] = env.rollout(theta, phi, type, derive_seed(seed, i));
    return out;
  }
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      out[i] = env.rollout(theta, phi, type, derive_seed(seed, i));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  return out;
}

std::vector<std::size_t> sample_types(const GameEnv& env, std::size_t k, Rng& rng) {
  require(k >= 1, Errc::config, "sample_types: K must be at least 1");
  Vec weights(env.n_types());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] = env.type_weight(i);
    total += weights[i];
  }
  require(total > 0.0, Errc::config, "sample_types: degenerate type prior");

  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t draw = 0; draw < k; ++draw) {
    double r = rng.uniform01() * total;
    double acc = 0.0;
    std::size_t pick = weights.size() - 1;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (r < acc) {
        pick = i;
        break;
      }
    }
    out.push_back(pick);
  }
  return out;
}

}  // namespace metafl
