// SPDX-License-Identifier: Apache-2.0
//
// Crash probing and mutation of hybrid commands against the simulator.

#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rilmine/commands.hpp"
#include "rilmine/sim.hpp"
#include "rilmine/taint.hpp"

namespace rilmine::attack {

enum class CrashClass : std::uint8_t { None, Temporary, Recoverable, Permanent };
std::string_view to_string(CrashClass c);

struct ProbeReport {
  std::vector<std::uint8_t> payload;
  CrashClass observed = CrashClass::None;
  /// (step, state): pre, post-inject, post-recovery-window, post-reboot.
  std::vector<std::pair<std::string, sim::ServiceState>> trace;
  std::vector<int> codes;
  bool rebooted = false;
};

/// Inject, then query right away. Still in service: none. Back in service
/// within 2 x recover_after ticks: temporary. Otherwise reboot: in service
/// means recoverable, still down means permanent. The simulator is reflashed
/// afterwards.
ProbeReport probe_command(sim::Simulator& s, std::span<const std::uint8_t> payload);

inline constexpr std::uint8_t kInterestingBytes[] = {0x00, 0x01, 0x7f, 0x80, 0xff};

struct MutationState {
  explicit MutationState(std::uint64_t seed, std::size_t budget = 0) : rng(seed), budget(budget) {}

  std::mt19937_64 rng;
  std::size_t budget;
  std::size_t executions = 0;
  std::vector<taint::PayloadBytes> corpus;
  std::set<std::pair<int, sim::ServiceState>> history;
};

/// One mutation at a dynamic position. Throws NoMutableBytes when every
/// byte is static.
taint::PayloadBytes mutate(const taint::PayloadBytes& payload, MutationState& state);

struct Finding {
  CrashClass crash = CrashClass::None;
  std::string root_function;
  std::vector<std::uint8_t> payload;
  std::size_t executions = 0;  // probes spent on this command
  bool operator==(const Finding&) const = default;
};

/// Probes every solicited static command once and mutates each hybrid one
/// (seed first) until it crashes or `budget` probes are spent. Inputs with a
/// new (response code, post-inject state) pair join the corpus.
std::vector<Finding> campaign(sim::Simulator& s, const cmd::CommandDB& db, std::size_t budget,
                              std::uint64_t seed = 1);

struct NvProbe {
  sim::NvRequest request;
  sim::NvResult result;
  bool escape = false;  // the request was served from outside the sandbox
};

NvProbe probe_nv(sim::Simulator& s, const sim::NvRequest& req);

/// `crash_type<TAB>root_function<TAB>payload_hex` rows after a header row.
std::string findings_tsv(const std::vector<Finding>& findings, const std::vector<NvProbe>& nv = {});

}  // namespace rilmine::attack
