// SPDX-License-Identifier: Apache-2.0
//
// Fixture programs with ground-truth manifests. Payloads follow the
// reconstructed command layout: bytes 0-1 little-endian length, 2-3
// reserved, 4 group, 5 command, 6 subtype, then parameters. The layout is a
// reconstruction and is marked non-normative in every manifest.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rilmine/commands.hpp"
#include "rilmine/ir.hpp"

namespace rilmine::forge {

struct ExpectedEdge {
  std::string caller;  // function ids
  std::string callee;
  auto operator<=>(const ExpectedEdge&) const = default;
};

struct ExpectedCommand {
  cmd::Direction direction = cmd::Direction::Solicited;
  std::string api;
  std::string root_function;  // symbol name
  std::string payload;        // dump form, dynamic bytes as ".."
  std::string channel;
  std::string length_source;  // solicited only
  std::optional<std::string> handler;
  auto operator<=>(const ExpectedCommand&) const = default;
};

struct ExpectedDiscard {
  std::string site;    // func@block:idx
  std::string reason;  // pipe | socket | non-dev-path | unresolved | mixed
  std::string path;    // open path when one was used
  auto operator<=>(const ExpectedDiscard&) const = default;
};

struct ExpectedUnresolved {
  std::string site;
  std::string reason;
  auto operator<=>(const ExpectedUnresolved&) const = default;
};

struct Manifest {
  std::string program;
  std::string generator;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> params;
  std::vector<ExpectedEdge> virtual_edges;  // sorted
  std::vector<ExpectedUnresolved> unresolved;
  std::vector<ExpectedCommand> commands;  // sorted
  std::vector<ExpectedDiscard> discards;  // sorted
  std::string layout = "reconstructed, non-normative";

  void normalize();
  bool operator==(const Manifest&) const = default;
};

std::string to_json(const Manifest& m);
Manifest parse_manifest(std::string_view json_text);

struct Fixture {
  ir::Program program;
  Manifest manifest;
};

// --- builders ----------------------------------------------------------------

class ProgramBuilder;

/// Appends instructions to one function. Blocks are created explicitly;
/// straight-line code stays in the current block.
class FunctionBuilder {
 public:
  FunctionBuilder(ProgramBuilder& pb, std::size_t function_index);

  ir::Function& function();
  const std::string& id();

  ir::Varnode param(std::size_t k, std::uint32_t size = 8) const;
  ir::Varnode temp(std::uint32_t size = 8);
  /// INT_ADD(frame, #offset).
  ir::Varnode frame_addr(std::int64_t offset);
  ir::Varnode add(const ir::Varnode& a, std::int64_t k);
  ir::Varnode add(const ir::Varnode& a, const ir::Varnode& b);
  ir::Varnode copy(const ir::Varnode& v);
  void copy_into(const ir::Varnode& dst, const ir::Varnode& v);
  ir::Varnode load(const ir::Varnode& addr, std::uint32_t size = 8);
  void store(const ir::Varnode& addr, const ir::Varnode& value);
  /// STOREs of `bytes` at frame offset `offset`, in chunks of `chunk` bytes.
  void store_bytes(std::int64_t offset, const std::vector<std::uint8_t>& bytes, std::uint32_t chunk = 1);
  ir::Varnode compare(ir::Opcode op, const ir::Varnode& a, const ir::Varnode& b);

  std::optional<ir::Varnode> call(const std::string& callee_id, std::vector<ir::Varnode> args, bool has_result = false);
  std::optional<ir::Varnode> call_ext(const std::string& name, std::vector<ir::Varnode> args, bool has_result = false);
  std::optional<ir::Varnode> callind(const ir::Varnode& target, std::vector<ir::Varnode> args, bool has_result = false);
  /// LOAD(INT_ADD(LOAD(INT_ADD(base, k_t)), k_o)) followed by CALLIND with
  /// the loaded object reference as first argument.
  std::optional<ir::Varnode> vcall(const ir::Varnode& base, std::int64_t k_t, std::int64_t k_o,
                                   std::vector<ir::Varnode> args, bool has_result = false);

  int new_block();
  void set_block(int id);
  int current_block() const { return current_; }
  void branch(int target);
  /// CBRANCH to `taken` when `cond`, otherwise `fallthrough`.
  void cbranch(int taken, const ir::Varnode& cond, int fallthrough);
  void fallthrough(int next);
  void ret(std::optional<ir::Varnode> v = std::nullopt);

  /// Site of the most recently emitted instruction.
  ir::Site last_site();

 private:
  ir::BasicBlock& block();
  void emit(ir::Instruction ins);

  ProgramBuilder& pb_;
  std::size_t index_;
  int current_ = 0;
};

class ProgramBuilder {
 public:
  explicit ProgramBuilder(std::string name, std::uint64_t data_base = 0x10000, std::uint64_t vtable_base = 0x400000);

  ir::ClassInfo& add_class(const std::string& name, std::vector<std::string> parents = {});
  ir::ClassInfo& cls(const std::string& name);

  /// Adds a function; member functions get `this` as parameter 0
  /// automatically. `params` lists the remaining parameters. A member whose
  /// name ends in `::<Class>` is registered as a constructor, any other
  /// member as a plain member.
  FunctionBuilder add_function(const std::string& id, const std::string& name,
                               std::optional<std::string> owning_class, std::vector<ir::Param> params,
                               ir::ValueType return_type = {}, std::int64_t stack_size = 0);
  FunctionBuilder edit(const std::string& id);

  /// NUL-terminated string in the data section; returns its address.
  std::uint64_t add_string(const std::string& s);
  std::uint64_t add_data(const std::vector<std::uint8_t>& bytes);
  void use_external(const std::string& name);

  /// Links and returns the program.
  ir::Program finish();
  ir::Program& program() { return p_; }
  const ir::Program& program() const { return p_; }

 private:
  friend class FunctionBuilder;
  ir::Program p_;
  std::uint64_t next_data_;
  std::uint64_t next_vtable_;
  std::map<std::size_t, std::int64_t> next_temp_;
};

// --- generators ----------------------------------------------------------------

/// Call-list query chain: IpcTxCallGetCallList -(vcall)-> IpcModem::SendMessage
/// -> DoIoChannelRoutingTx -(vcall)-> IoChannel::Write -> write.
Fixture gen_fig2();
/// The same chain, optionally with an IpcModem5G subclass overriding
/// SendMessage.
Fixture gen_fig4(bool with_subclass = false);
/// read -> ReadPacket -(vcall)-> ProcessRxPacket -(vcall)-> Nv::ProcessRfsPacket
/// with one equality guard per constant. Empty `constants` gives a dispatcher
/// without guards.
Fixture gen_fig5(std::vector<std::uint8_t> constants = {0x01, 0x02, 0x03, 0x04});
/// Random distinct constants, count in [1, 8].
Fixture gen_fig5_random(std::uint64_t seed);

enum class Fig6Variant { Efs, Pipe, Dev };
Fixture gen_fig6(Fig6Variant variant = Fig6Variant::Efs);

/// fig2 and fig6 (efs) in one program.
Fixture gen_fig2_fig6();
/// One payload written through a /dev fd and through an /efs fd.
Fixture gen_two_fds();

enum class HybridKind { Direct, Derived, Structured };
Fixture gen_hybrid(HybridKind kind);

/// The seven crash-table commands with their symbol names and payload prefixes.
Fixture gen_table5();
/// Behavior table for the simulator matching gen_table5's payloads.
std::string table5_sim_config();
/// Sim config for the direct hybrid fixture: byte 7 == 0xff crashes.
std::string planted_ff_sim_config();

/// Base firmware with 478 write commands; current drops 63 and adds 12.
std::pair<Fixture, Fixture> gen_diff_pair();

struct RandomParams {
  int functions = 120;          // upper bound, at most 200
  double vcall_density = 0.5;   // share of command chains sent via vtables
  int distractors = 6;
  int chains = 12;              // solicited command chains
  int readers = 2;              // unsolicited dispatch chains
};

Fixture gen_random(std::uint64_t seed, const RandomParams& params = {});

/// Names accepted by the `fixtures` subcommand.
std::vector<std::string> fixture_kinds();
Fixture generate(const std::string& kind, std::uint64_t seed);

}  // namespace rilmine::forge
