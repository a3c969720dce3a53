// SPDX-License-Identifier: Apache-2.0
//
// Reference analyzer for tests. It shares no analysis code with the library:
// every function is executed as a potential root over an abstract machine
// (byte-addressed frames, objects whose fields come from their class's
// constructors and members, vtable dispatch through loaded pointers), every
// branch is forked and every call is followed. Nothing is cached between
// paths, so it is slow and only suitable for fixture-sized programs.

#pragma once

#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "rilmine/forge.hpp"
#include "rilmine/ir.hpp"

namespace rilmine::oracle {

struct Command {
  bool solicited = true;
  std::string api;
  std::string site;
  std::string root_function;  // name
  std::string payload;        // "07 00 .." form
  std::string channel;
  std::string length;  // solicited only
  std::optional<std::string> handler;

  auto tie() const { return std::tie(solicited, api, site, root_function, payload, channel, length, handler); }
  bool operator<(const Command& o) const { return tie() < o.tie(); }
  bool operator==(const Command& o) const { return tie() == o.tie(); }
};

struct Discard {
  std::string site;
  std::string reason;
  std::string path;
  auto tie() const { return std::tie(site, reason, path); }
  bool operator<(const Discard& o) const { return tie() < o.tie(); }
  bool operator==(const Discard& o) const { return tie() == o.tie(); }
};

struct Result {
  std::set<std::pair<std::string, std::string>> virtual_edges;  // (caller id, callee id)
  std::set<std::string> unresolved_sites;                       // CALLINDs never dispatched
  std::set<Command> commands;
  std::set<Discard> discards;
  std::size_t paths = 0;
  bool truncated = false;  // a path budget was hit
};

struct Options {
  int max_depth = 32;
  std::size_t max_paths_per_root = 4096;
};

Result analyze(const ir::Program& p, const Options& options = {});

/// The result in manifest form. Unresolved entries carry an empty reason,
/// so compare them by site only.
forge::Manifest to_manifest(const Result& r, const forge::Manifest& like);

}  // namespace rilmine::oracle
