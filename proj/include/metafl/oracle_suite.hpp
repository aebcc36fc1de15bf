#pragma once

#include <string>
#include <vector>

#include "metafl/common.hpp"

namespace metafl {

struct OracleRow {
  std::string check;
  std::uint64_t instance = 0;
  double observed = 0.0;
  double reference = 0.0;
  bool pass = false;
};

struct OracleReport {
  std::vector<OracleRow> rows;
  std::size_t failures = 0;
};

// Runs the enumeration-backed oracle comparisons (gradients, aggregation
// rules, policy-gradient estimators, the trajectory-distribution bound chain)
// scaled by n_instances. fault_inject deliberately corrupts one comparison;
// the harness contract test uses it.
OracleReport run_oracle_suite(std::uint64_t seed, std::size_t n_instances,
                              bool fault_inject = false);

void save_oracle_csv(const OracleReport& report, const std::string& path);

}  // namespace metafl
