#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "metafl/policy.hpp"

namespace metafl {

// A two-player episodic game the training loops can roll out. Implemented by
// the simulated FL world and by tabular games; everything above this
// interface is agnostic to which one it is driving.
class GameEnv {
 public:
  virtual ~GameEnv() = default;

  virtual double gamma() const = 0;
  virtual std::size_t horizon() const = 0;
  virtual std::size_t obs_dim() const = 0;
  virtual std::size_t defender_action_dim() const = 0;
  virtual std::size_t attacker_action_dim() const = 0;

  virtual std::size_t n_types() const = 0;
  virtual bool type_adaptive(std::size_t type) const = 0;
  virtual double type_weight(std::size_t type) const = 0;

  // One full episode against attack type `type`. phi may be null for types
  // with a fixed strategy. Deterministic in (policies, type, seed).
  virtual Trajectory rollout(const StochasticPolicy& theta, const StochasticPolicy* phi,
                             std::size_t type, std::uint64_t seed) const = 0;

  virtual std::unique_ptr<StochasticPolicy> make_defender_policy(std::uint64_t seed) const = 0;
  virtual std::unique_ptr<StochasticPolicy> make_attacker_policy(std::size_t type,
                                                                 std::uint64_t seed) const = 0;
};

// Samples n trajectories with per-index derived seeds. Worker threads only
// fill disjoint slots, so the result is independent of scheduling.
std::vector<Trajectory> sample_batch(const GameEnv& env, const StochasticPolicy& theta,
                                     const StochasticPolicy* phi, std::size_t type,
                                     std::size_t n, std::uint64_t seed);

// Draws K i.i.d. type indices from the environment prior.
std::vector<std::size_t> sample_types(const GameEnv& env, std::size_t k, Rng& rng);

// Worker-count control; reads METAFL_WORKERS once, clamped to [1, hw].
std::size_t worker_count();
void set_worker_count(std::size_t n);

}  // namespace metafl
