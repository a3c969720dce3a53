// SPDX-License-Identifier: Apache-2.0
//
// Intra-procedural def-use facts shared by the call-graph, taint and channel
// passes. Storage is keyed by (space, offset); stack bytes written through a
// frame address (`INT_ADD(frame, #k)`) alias the stack-space key (stack, k).

#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "rilmine/ir.hpp"

namespace rilmine::dfa {

struct Key {
  ir::Space space = ir::Space::Reg;
  std::int64_t offset = 0;
  auto operator<=>(const Key&) const = default;
};

inline Key key_of(const ir::Varnode& v) { return {v.space, v.offset}; }

/// A reaching definition: an instruction in the same function, or the
/// function entry (`block == -1`).
struct DefLoc {
  std::int32_t block = -1;
  std::int32_t index = -1;

  static DefLoc entry() { return {}; }
  bool is_entry() const { return block < 0; }
  auto operator<=>(const DefLoc&) const = default;
};

using DefSet = std::vector<DefLoc>;  // sorted, unique

class FunctionFacts {
 public:
  FunctionFacts(const ir::Program& program, std::uint32_t function_index);

  const ir::Function& function() const { return *function_; }
  std::uint32_t function_index() const { return function_index_; }

  /// Definitions of `v` reaching the point just before instruction
  /// (block, index). `index == ops.size()` means the block end.
  DefSet reaching(std::uint32_t block, std::uint32_t index, const ir::Varnode& v) const;
  DefSet reaching_key(std::uint32_t block, std::uint32_t index, Key key) const;

  /// Frame offset held by `v` just before (block, index), when `v` is a
  /// frame address on every path.
  std::optional<std::int64_t> frame_offset(std::uint32_t block, std::uint32_t index, const ir::Varnode& v) const;

  /// Stack key written by the instruction: STORE through a frame address or
  /// an output in stack space.
  std::optional<Key> stack_def(std::uint32_t block, std::uint32_t index) const;
  /// Stack key read by a LOAD through a frame address.
  std::optional<Key> stack_use(std::uint32_t block, std::uint32_t index) const;

  /// Folded constant value of `v` before (block, index): literal, COPY /
  /// INT_ADD / INT_SUB of constants, or a stack slot holding a constant.
  std::optional<std::int64_t> constant_value(std::uint32_t block, std::uint32_t index, const ir::Varnode& v) const;

  /// If `v` is, on every path, the unmodified value parameter k held at
  /// entry (possibly through COPY chains), returns k.
  std::optional<std::size_t> entry_param(std::uint32_t block, std::uint32_t index, const ir::Varnode& v) const;

  /// Index of the parameter whose entry register is `v`, if any.
  std::optional<std::size_t> param_of_register(const ir::Varnode& v) const;

  const ir::Instruction& at(DefLoc d) const { return function_->blocks[d.block].ops[d.index]; }

 private:
  using State = std::map<Key, DefSet>;  // absent key == {entry}

  void solve(bool with_stack);
  void transfer(State& state, std::uint32_t block, std::uint32_t index, bool with_stack) const;
  std::optional<std::int64_t> frame_offset_of_def(DefLoc d, int depth) const;
  std::optional<std::int64_t> frame_offset_impl(std::uint32_t block, std::uint32_t index, const ir::Varnode& v,
                                                int depth) const;
  std::optional<std::int64_t> constant_impl(std::uint32_t block, std::uint32_t index, const ir::Varnode& v,
                                            int depth) const;
  DefSet reaching_impl(std::uint32_t block, std::uint32_t index, Key key, bool with_stack) const;

  const ir::Program* program_;
  const ir::Function* function_;
  std::uint32_t function_index_;
  std::vector<std::vector<std::uint32_t>> preds_;
  std::vector<State> in_registers_;  // phase A: outputs only
  std::vector<State> in_full_;       // phase B: plus stack stores
  std::vector<std::vector<std::optional<Key>>> stack_def_;
  std::vector<std::vector<std::optional<Key>>> stack_use_;
};

/// Lazily built facts for every function of a program. Not thread-safe;
/// create one per analysis thread.
class ProgramFacts {
 public:
  explicit ProgramFacts(const ir::Program& program) : program_(&program) {}
  const FunctionFacts& of(std::uint32_t function_index);
  const ir::Program& program() const { return *program_; }

 private:
  const ir::Program* program_;
  std::map<std::uint32_t, FunctionFacts> cache_;
};

}  // namespace rilmine::dfa
