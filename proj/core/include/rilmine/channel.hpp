// SPDX-License-Identifier: Apache-2.0
//
// Channel-based command filtering: a system-call site is analyzed only when
// its file descriptor comes from opening a /dev/ node.

#pragma once

#include <string>
#include <vector>

#include "rilmine/callgraph.hpp"
#include "rilmine/commands.hpp"
#include "rilmine/config.hpp"
#include "rilmine/ir.hpp"

namespace rilmine::chan {

/// The device-path pattern, verbatim.
inline constexpr std::string_view kDevicePathPattern = "^/dev/([^/ ]*)+(/[^/ ]*)*?$";

bool match_device_path(std::string_view path);

struct FdOrigin {
  enum class Kind : std::uint8_t { OpenFamily, Pipe, Socket, Unknown };
  Kind kind = Kind::Unknown;
  std::string path;    // OpenFamily with a constant path
  std::string detail;  // producing call or why it is unknown
  bool operator==(const FdOrigin&) const = default;
};

std::string_view to_string(FdOrigin::Kind k);

struct ChannelResolution {
  ir::Site site;
  std::vector<FdOrigin> origins;  // deduplicated, discovery order
  bool keep = false;
  std::string reason;   // discard reason: pipe | socket | non-dev-path | unresolved | mixed
  std::string channel;  // device path (or "socket") when kept
  std::vector<std::string> diagnostics;

  /// The first origin, or an unknown origin when none was found.
  FdOrigin fd_origin() const { return origins.empty() ? FdOrigin{} : origins.front(); }
};

ChannelResolution resolve_channel(const ir::Program& p, const cg::CallGraph& cg, const ir::Site& site,
                                  int fd_arg_index, const AnalysisConfig& config = {});

struct FilterCounters {
  std::size_t sites = 0;
  std::size_t kept = 0;
  std::size_t discarded = 0;
  std::size_t backward_traces = 0;
  std::size_t forward_traces = 0;
  std::size_t incomplete_traces = 0;
  /// Taint analyses started; one per kept site.
  std::size_t taint_queries = 0;
};

struct FilterResult {
  cmd::CommandDB db;
  std::vector<ChannelResolution> resolutions;  // every source site, site order
  FilterCounters counters;
  std::vector<std::string> diagnostics;
};

/// Resolves every source site's channel and runs taint extraction only for
/// the kept ones. Records carry module labels from `config`.
FilterResult filter_commands(const ir::Program& p, const cg::CallGraph& cg, const AnalysisConfig& config = {},
                             std::string binary = {});

}  // namespace rilmine::chan
