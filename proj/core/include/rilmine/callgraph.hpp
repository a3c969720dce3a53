// SPDX-License-Identifier: Apache-2.0
//
// Direct call graph plus virtual-call recovery. A CALLIND whose target has the
// shape LOAD(INT_ADD(LOAD(INT_ADD(base, k_t)), k_o)) or
// LOAD(INT_ADD(LOAD(base), k_o)) is resolved by finding which class reference
// was stored at base+k_t and reading that class's vtable at slot k_o.

#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rilmine/dataflow.hpp"
#include "rilmine/ir.hpp"

namespace rilmine::cg {

/// Canonical address: base symbol plus constant byte offset. Stack bases are
/// local to one function, so they carry its id; `index` is the slot offset
/// for stack bases and the parameter index otherwise.
struct Address {
  enum class Base : std::uint8_t { This, Param, Stack };
  Base base = Base::This;
  std::int64_t index = 0;
  std::string function;  // Stack only
  std::int64_t offset = 0;

  auto operator<=>(const Address&) const = default;
};

/// "this+0x10", "param2+0x8", "stack[0x18]@fn".
std::string to_string(const Address& a);

/// Resolves an address-valued varnode to its canonical form, following COPY
/// chains, constant INT_ADD/INT_SUB and spills through stack slots.
std::optional<Address> canonical_address(const dfa::FunctionFacts& facts, std::uint32_t block, std::uint32_t index,
                                         const ir::Varnode& v);

struct VCallSite {
  ir::Site site;
  std::string v_c;  // owning class of the enclosing function, may be empty
  Address v_t;
  std::int64_t v_o = 0;

  auto operator<=>(const VCallSite&) const = default;
};

enum class EdgeKind : std::uint8_t { Direct, Virtual };

struct Resolution {
  VCallSite vcall;
  std::string inferred_class;
  bool operator==(const Resolution&) const = default;
};

struct CallEdge {
  std::string caller;
  std::string callee;  // function id, or external name when `external`
  bool external = false;
  EdgeKind kind = EdgeKind::Direct;
  ir::Site site;
  std::optional<Resolution> resolution;  // virtual edges only

  bool operator==(const CallEdge&) const = default;
};

struct UnresolvedSite {
  ir::Site site;
  std::string reason;  // pattern-mismatch | no-owning-class | class-not-inferred | vtable-offset-out-of-range
  bool operator==(const UnresolvedSite&) const = default;
};

class CallGraph {
 public:
  std::vector<std::string> nodes;  // function ids, then "ext:<name>" nodes
  std::vector<CallEdge> edges;     // sorted by (site, kind, callee)
  std::vector<UnresolvedSite> unresolved;
  std::vector<std::string> notes;  // first-hit conflicts and similar

  /// Sorts edges and rebuilds the lookup indexes.
  void finalize();

  /// Internal edges whose callee is `function_id`.
  std::vector<const CallEdge*> callers_of(std::string_view function_id) const;
  /// Edges leaving the instruction at `site`.
  std::vector<const CallEdge*> edges_at(const ir::Site& site) const;
  std::size_t virtual_edge_count() const;

  bool operator==(const CallGraph& other) const {
    return nodes == other.nodes && edges == other.edges && unresolved == other.unresolved;
  }

 private:
  std::map<std::string, std::vector<std::size_t>, std::less<>> by_callee_;
  std::map<ir::Site, std::vector<std::size_t>> by_site_;
};

CallGraph build_direct_cg(const ir::Program& p);

struct VCallScan {
  std::vector<VCallSite> sites;
  std::vector<UnresolvedSite> unmatched;
};

/// Every CALLIND in the program, split into pattern matches and misses.
VCallScan scan_vcall_sites(const ir::Program& p);
std::vector<VCallSite> collect_vcall_sites(const ir::Program& p);

/// Classes whose reference `f` stores at `v_t`, each with its subclasses.
/// Empty when `f` never writes `v_t`.
std::vector<std::string> class_inference(const Address& v_t, const ir::Function& f, const ir::Program& p);

/// Functions searched for a site's class: ancestor constructors root-most
/// first, own constructors, then members.
std::vector<std::string> search_list(const ir::Program& p, std::string_view v_c);

CallGraph recover_vcalls(const ir::Program& p, const CallGraph& cg);

/// Convenience: build_direct_cg followed by recover_vcalls.
CallGraph build_call_graph(const ir::Program& p);

/// `caller -> callee [direct]` / `[virtual via (class, v_t, 0x30)]` lines.
std::string dump(const ir::Program& p, const CallGraph& cg);

}  // namespace rilmine::cg
