#pragma once

#include <optional>
#include <string>

#include "metafl/env.hpp"
#include "metafl/meta_train.hpp"

namespace metafl {

struct AdaptConfig {
  std::optional<AttackType> attack;  // live attack; defaults to the first domain type
  std::size_t adapt_rounds = 50;
  std::size_t l = 1;
  double eta = 0.05;
  std::size_t batch_size = 4;
};

struct OutputConfig {
  std::string dir = ".";
};

// The whole experiment in one validated value: parse -> serialize -> parse
// is the identity, and unknown keys are rejected everywhere.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  BSMGConfig game;  // includes FLConfig and the attack-type prior
  MetaTrainConfig train;
  AdaptConfig adapt;
  OutputConfig output;

  void validate() const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);
std::string serialize_config(const ExperimentConfig& config);

// FNV-1a of the canonical serialization; stamped into every artifact.
std::string config_hash(const ExperimentConfig& config);

}  // namespace metafl
