// SPDX-License-Identifier: Apache-2.0
//
// Taint analysis from system-call boundaries. Backward traces follow a sent
// buffer to the function that fills it; forward traces follow a received
// buffer to the comparisons that dispatch on it.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rilmine/callgraph.hpp"
#include "rilmine/ir.hpp"

namespace rilmine::taint {

enum class Direction : std::uint8_t { Backward, Forward };

/// System-call API with the argument roles the analysis needs.
struct ApiSpec {
  std::string name;
  std::vector<int> tainted_args;
  Direction direction = Direction::Backward;
  int fd_arg = 0;
  int buffer_arg = 1;
  int length_arg = -1;  // -1: no length argument
};

/// write, __write_chk, ioctl, sendto, read, __read_chk.
const std::vector<ApiSpec>& source_apis();
const ApiSpec* find_api(std::string_view name);
/// __write_chk -> write, __read_chk -> read, others unchanged.
std::string canonical_api(std::string_view name);

struct TaintQuery {
  ir::Site site;
  std::string api;
  std::vector<int> tainted_args;
  Direction direction = Direction::Backward;

  auto operator<=>(const TaintQuery&) const = default;
};

/// One query per CALL to a source API, in site order. With no direction
/// given, both directions are returned.
std::vector<TaintQuery> find_sources(const ir::Program& p, std::optional<Direction> direction = std::nullopt);

struct Step {
  std::string function;
  ir::Site site;
  ir::Varnode varnode;
  bool operator==(const Step&) const = default;
};

struct LengthSource {
  enum class Kind : std::uint8_t { ConstantArg, StrlenBounded, Unknown };
  Kind kind = Kind::Unknown;
  std::int64_t value = 0;  // the constant, or the strlen bound

  bool operator==(const LengthSource&) const = default;
};

std::string to_string(const LengthSource& l);

struct Terminator {
  enum class Kind : std::uint8_t { StackBuffer, GlobalBuffer, ConstantWord };
  Kind kind = Kind::StackBuffer;
  ir::Site at;             // point in the root where the value was pinned down
  std::int64_t value = 0;  // frame offset, data address or constant
  std::uint32_t size = 0;  // varnode size, for constant words
  bool operator==(const Terminator&) const = default;
};

struct Sink {
  ir::Site site;
  ir::Opcode op = ir::Opcode::IntEqual;
  std::int64_t constant = 0;
  std::uint32_t size = 1;
  std::optional<std::string> handler;  // first call in the guarded branch
  bool operator==(const Sink&) const = default;
};

struct TaintTrace {
  TaintQuery query;
  std::vector<Step> steps;
  std::string root;  // function id
  bool complete = false;
  std::string incomplete_reason;  // depth-exceeded | no-terminator | ...

  // Backward only.
  std::optional<Terminator> terminator;
  std::vector<ir::Site> call_path;  // call sites from the root down to the query
  LengthSource length;

  // Forward only.
  std::vector<Sink> sinks;
};

struct TaintOptions {
  int max_depth = 32;
};

/// All terminating paths of the buffer argument, one trace per path, in a
/// deterministic order. An empty result never occurs: a query with no
/// terminating path yields one incomplete trace.
std::vector<TaintTrace> backward_taint(const ir::Program& p, const cg::CallGraph& cg, const TaintQuery& q,
                                       const TaintOptions& options = {});

TaintTrace forward_taint(const ir::Program& p, const cg::CallGraph& cg, const TaintQuery& q,
                         const TaintOptions& options = {});

struct PayloadBytes {
  enum class Mask : std::uint8_t { Static, Dynamic };
  std::vector<std::uint8_t> bytes;
  std::vector<Mask> mask;
  LengthSource length;

  bool operator==(const PayloadBytes&) const = default;

  std::size_t dynamic_count() const;
  bool is_static() const { return dynamic_count() == 0; }
};

/// "07 00 00 00 .. .." (dynamic bytes as ".."). Inverse: parse_payload_dump.
std::string dump(const PayloadBytes& payload);
std::optional<PayloadBytes> parse_payload_dump(std::string_view text);

struct Concretized {
  PayloadBytes payload;
  std::vector<std::string> diagnostics;
};

/// Emulates the root's stack frame up to the point where the buffer leaves
/// it. Requires a complete backward trace.
Concretized concretize_payload(const ir::Program& p, const TaintTrace& trace);

/// `func@block:idx varnode` lines.
std::string dump_steps(const ir::Program& p, const TaintTrace& trace);

}  // namespace rilmine::taint
