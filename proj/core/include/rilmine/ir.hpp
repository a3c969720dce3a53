// SPDX-License-Identifier: Apache-2.0
//
// Intermediate representation standing in for decompiler-lifted RIL
// libraries. The on-disk format is documented in docs/ir-format.md.

#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rilmine::ir {

inline constexpr int kIrVersion = 1;

enum class Space : std::uint8_t { Const, Reg, Stack, Ram, Unique };

/// Register offset that holds the frame base. `INT_ADD(frame, #k)` is the
/// address of stack byte k; stack-space varnodes alias the same bytes.
inline constexpr std::int64_t kFrameRegister = 0x100;

/// A value cell. Const varnodes carry their literal in `offset`.
struct Varnode {
  Space space = Space::Const;
  std::int64_t offset = 0;
  std::uint32_t size = 1;

  auto operator<=>(const Varnode&) const = default;

  bool is_const() const { return space == Space::Const; }
  bool is_frame() const { return space == Space::Reg && offset == kFrameRegister; }
};

Varnode constant(std::int64_t value, std::uint32_t size = 8);
Varnode reg(std::int64_t offset, std::uint32_t size = 8);
Varnode stack(std::int64_t offset, std::uint32_t size);
Varnode ram(std::int64_t address, std::uint32_t size);
Varnode unique(std::int64_t id, std::uint32_t size = 8);
Varnode frame(std::uint32_t word_size = 8);

/// Register holding parameter `index` at function entry.
Varnode param_register(std::size_t index, std::uint32_t word_size);

enum class Opcode : std::uint8_t {
  Copy,
  Load,
  Store,
  IntAdd,
  IntSub,
  IntEqual,
  IntNotEqual,
  IntLess,
  Call,
  CallInd,
  Branch,
  CBranch,
  Return,
};

std::string_view to_string(Opcode op);
std::optional<Opcode> parse_opcode(std::string_view name);
std::string_view to_string(Space space);
std::optional<Space> parse_space(std::string_view name);

bool is_comparison(Opcode op);

struct Callee {
  enum class Kind : std::uint8_t { Function, External };
  Kind kind = Kind::Function;
  std::string name;  // function id or external API name

  auto operator<=>(const Callee&) const = default;
  bool is_external() const { return kind == Kind::External; }
};

/// CALL: in = arguments, callee set. CALLIND: in[0] = computed target,
/// in[1..] = arguments. STORE: in = {address, value}. LOAD: in = {address}.
/// BRANCH: in = {#block}. CBRANCH: in = {#block taken when true, condition}.
struct Instruction {
  Opcode op = Opcode::Copy;
  std::optional<Varnode> out;
  std::vector<Varnode> in;
  std::optional<Callee> callee;

  bool operator==(const Instruction&) const = default;
};

struct BasicBlock {
  int id = 0;
  std::vector<Instruction> ops;
  std::vector<int> successors;

  bool operator==(const BasicBlock&) const = default;
};

struct ValueType {
  enum class Kind : std::uint8_t { Integer, BytePointer, ClassPointer, StringPointer };
  Kind kind = Kind::Integer;
  std::string class_name;  // ClassPointer only

  static ValueType integer() { return {}; }
  static ValueType bytes() { return {Kind::BytePointer, {}}; }
  static ValueType string() { return {Kind::StringPointer, {}}; }
  static ValueType class_ptr(std::string name) { return {Kind::ClassPointer, std::move(name)}; }

  bool is_class() const { return kind == Kind::ClassPointer; }
  bool operator==(const ValueType&) const = default;
};

std::string to_string(const ValueType& type);
std::optional<ValueType> parse_value_type(std::string_view text);

struct Param {
  std::string name;
  ValueType type;
  bool operator==(const Param&) const = default;
};

struct Function {
  std::string id;
  std::string name;
  std::optional<std::string> owning_class;
  std::vector<Param> params;
  ValueType return_type;
  std::int64_t stack_size = 0;
  std::vector<BasicBlock> blocks;

  bool operator==(const Function&) const = default;

  /// Index into `blocks` for a block id, or nullopt.
  std::optional<std::size_t> block_index(int block_id) const;
};

struct ClassInfo {
  std::string name;
  std::vector<std::string> parents;
  std::uint64_t vtable_addr = 0;
  std::vector<std::string> vtable;  // function ids, slot order
  std::vector<std::string> constructors;
  std::vector<std::string> members;

  bool operator==(const ClassInfo&) const = default;
};

struct DataRegion {
  std::uint64_t address = 0;
  std::vector<std::uint8_t> bytes;

  bool operator==(const DataRegion&) const = default;
  bool contains(std::uint64_t addr) const { return addr >= address && addr < address + bytes.size(); }
};

/// A lifted binary. Immutable after `link()`; the index maps are derived.
class Program {
 public:
  std::string name;
  std::uint32_t word_size = 8;
  std::vector<ClassInfo> classes;
  std::vector<Function> functions;
  std::vector<DataRegion> data;
  std::vector<std::string> externals;

  /// Rebuilds the id/name indexes. Throws DuplicateId / DanglingReference.
  void link();

  const Function* find_function(std::string_view id) const;
  std::optional<std::size_t> function_index(std::string_view id) const;
  const ClassInfo* find_class(std::string_view name) const;
  bool has_external(std::string_view name) const;

  /// Region containing `addr`, if any.
  const DataRegion* region_at(std::uint64_t addr) const;
  /// NUL-terminated string starting at `addr` (to region end if no NUL).
  std::optional<std::string> c_string_at(std::uint64_t addr) const;

  /// Class plus all transitive subclasses, sorted by name.
  std::vector<std::string> with_subclasses(std::string_view class_name) const;
  /// Transitive ancestors, root-most first (parents in declaration order).
  std::vector<std::string> ancestors(std::string_view class_name) const;

  /// Field-for-field equality; the derived indexes are ignored.
  bool operator==(const Program& other) const;

 private:
  std::map<std::string, std::size_t, std::less<>> function_by_id_;
  std::map<std::string, std::size_t, std::less<>> class_by_name_;
};

/// Equality keyed by function id and class name, ignoring declaration order.
bool equivalent_by_id(const Program& a, const Program& b);

/// One instruction in one function. `block` is an index into
/// `Function::blocks`, not a block id.
struct Site {
  std::uint32_t function = 0;
  std::uint32_t block = 0;
  std::uint32_t index = 0;

  auto operator<=>(const Site&) const = default;
};

const Instruction& instruction_at(const Program& p, const Site& s);
/// `func_id@block_id:index`
std::string format_site(const Program& p, const Site& s);

}  // namespace rilmine::ir
