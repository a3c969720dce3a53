// SPDX-License-Identifier: Apache-2.0
//
// Deterministic stand-in for the cellular processor. Payloads are injected
// on an in-process channel, a behavior table decides what each one does, and
// the Nv file-access surface resolves paths inside a sandbox directory.
// Time is counted in logical ticks.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rilmine::sim {

enum class ServiceState : std::uint8_t { InService, OutOfService };
std::string_view to_string(ServiceState s);

/// Response codes outside the configured valid set.
inline constexpr int kNoService = -1;
inline constexpr int kRejected = -2;

struct Effect {
  enum class Kind : std::uint8_t { Ok, TemporaryCrash, RecoverableCrash, PermanentCrash };
  Kind kind = Kind::Ok;
  std::int64_t recover_after = 0;  // TemporaryCrash only
  bool operator==(const Effect&) const = default;
};

std::string to_string(const Effect& e);

/// Byte pattern with single-byte wildcards; `prefix` accepts any tail.
struct Matcher {
  std::vector<std::optional<std::uint8_t>> bytes;
  bool prefix = false;

  bool matches(std::span<const std::uint8_t> payload) const;
  std::string to_string() const;
  bool operator==(const Matcher&) const = default;
};

struct BehaviorRow {
  Matcher matcher;
  Effect effect;
  bool operator==(const BehaviorRow&) const = default;
};

struct NvRequest {
  enum class Op : std::uint8_t { Open, Read, Write };
  Op op = Op::Open;
  std::string path;
  std::vector<std::uint8_t> data;  // Write only
  bool operator==(const NvRequest&) const = default;
};

std::string_view to_string(NvRequest::Op op);

struct SimConfig {
  std::string channel = "/dev/umts_ipc0";
  std::vector<BehaviorRow> behavior;  // first match wins
  std::set<int> valid_codes = {0};
  std::filesystem::path sandbox_root;
  bool symlink_check = false;
  bool dotdot_check = true;
  std::int64_t recover_after = 3;
  /// Nv requests the `sim` subcommand replays after the campaign.
  std::vector<NvRequest> nv_probes;
};

/// `key = value` lines and `matcher -> effect` rows; '#' starts a comment.
/// A relative sandbox_root is resolved against `base_dir`.
SimConfig parse_sim_config(std::string_view text, std::string_view source = "<sim>",
                           const std::filesystem::path& base_dir = {});
SimConfig load_sim_config(const std::filesystem::path& path);

struct Response {
  int code = 0;
  std::vector<std::uint8_t> body;
  bool operator==(const Response&) const = default;
};

struct Latch {
  enum class Kind : std::uint8_t { None, Temporary, Recoverable, Permanent };
  Kind kind = Kind::None;
  std::int64_t until = 0;  // Temporary only: first tick back in service
  bool operator==(const Latch&) const = default;
};

struct NvResult {
  bool ok = false;
  std::string reason;  // dotdot | symlink-escape | not-found | empty-path | io-error
  std::filesystem::path resolved;
  bool escaped = false;  // resolved outside the sandbox root
  std::vector<std::uint8_t> data;
};

struct LogEntry {
  std::int64_t tick = 0;
  int code = 0;
  std::vector<std::uint8_t> payload;
  bool operator==(const LogEntry&) const = default;
};

class Simulator {
 public:
  explicit Simulator(SimConfig config);

  /// Applies the first matching behavior row. Unmatched payloads are
  /// rejected. Effects latch even while out of service; latches only
  /// escalate. Does not advance time.
  Response inject(std::span<const std::uint8_t> payload);
  ServiceState query_state() const;

  void advance(std::int64_t ticks);
  /// Clears recoverable and temporary latches.
  void reboot();
  /// Clears every latch.
  void reflash();

  NvResult nv_handle(const NvRequest& req);

  std::int64_t tick() const { return tick_; }
  const Latch& latch() const { return latch_; }
  const std::vector<LogEntry>& log() const { return log_; }
  const SimConfig& config() const { return config_; }

 private:
  void raise(Latch l);
  void expire();

  SimConfig config_;
  Latch latch_;
  std::int64_t tick_ = 0;
  std::vector<LogEntry> log_;
};

}  // namespace rilmine::sim
