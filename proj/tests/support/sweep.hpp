// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rilmine/forge.hpp"

namespace rilmine::testing {

struct SweepResult {
  int programs = 0;
  int agreed = 0;
  std::size_t commands = 0;  // total across all programs
  double seconds = 0;
  std::vector<std::string> mismatches;  // one entry per disagreeing seed
};

/// Generator settings used by the seeded sweep; at most 200 functions.
forge::RandomParams sweep_params(std::uint64_t seed);

/// For each seed, runs the full per-binary pipeline over the generated IR
/// file and compares the command set it writes with the oracle's.
SweepResult oracle_sweep(std::uint64_t first_seed, int count);

}  // namespace rilmine::testing
