// SPDX-License-Identifier: Apache-2.0
#include "rilmine/ir.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <set>

#include "rilmine/error.hpp"

namespace rilmine::ir {

Varnode constant(std::int64_t value, std::uint32_t size) { return {Space::Const, value, size}; }
Varnode reg(std::int64_t offset, std::uint32_t size) { return {Space::Reg, offset, size}; }
Varnode stack(std::int64_t offset, std::uint32_t size) { return {Space::Stack, offset, size}; }
Varnode ram(std::int64_t address, std::uint32_t size) { return {Space::Ram, address, size}; }
Varnode unique(std::int64_t id, std::uint32_t size) { return {Space::Unique, id, size}; }
Varnode frame(std::uint32_t word_size) { return {Space::Reg, kFrameRegister, word_size}; }

Varnode param_register(std::size_t index, std::uint32_t word_size) {
  return {Space::Reg, static_cast<std::int64_t>(index * word_size), word_size};
}

namespace {

constexpr std::array<std::pair<Opcode, std::string_view>, 13> kOpcodeNames{{
    {Opcode::Copy, "COPY"},
    {Opcode::Load, "LOAD"},
    {Opcode::Store, "STORE"},
    {Opcode::IntAdd, "INT_ADD"},
    {Opcode::IntSub, "INT_SUB"},
    {Opcode::IntEqual, "INT_EQUAL"},
    {Opcode::IntNotEqual, "INT_NOTEQUAL"},
    {Opcode::IntLess, "INT_LESS"},
    {Opcode::Call, "CALL"},
    {Opcode::CallInd, "CALLIND"},
    {Opcode::Branch, "BRANCH"},
    {Opcode::CBranch, "CBRANCH"},
    {Opcode::Return, "RETURN"},
}};

constexpr std::array<std::pair<Space, std::string_view>, 5> kSpaceNames{{
    {Space::Const, "const"},
    {Space::Reg, "reg"},
    {Space::Stack, "stack"},
    {Space::Ram, "ram"},
    {Space::Unique, "unique"},
}};

}  // namespace

std::string_view to_string(Opcode op) {
  for (const auto& [o, n] : kOpcodeNames)
    if (o == op) return n;
  return "?";
}

std::optional<Opcode> parse_opcode(std::string_view name) {
  for (const auto& [o, n] : kOpcodeNames)
    if (n == name) return o;
  return std::nullopt;
}

std::string_view to_string(Space space) {
  for (const auto& [s, n] : kSpaceNames)
    if (s == space) return n;
  return "?";
}

std::optional<Space> parse_space(std::string_view name) {
  for (const auto& [s, n] : kSpaceNames)
    if (n == name) return s;
  return std::nullopt;
}

bool is_comparison(Opcode op) {
  return op == Opcode::IntEqual || op == Opcode::IntNotEqual || op == Opcode::IntLess;
}

std::string to_string(const ValueType& type) {
  switch (type.kind) {
    case ValueType::Kind::Integer:
      return "int";
    case ValueType::Kind::BytePointer:
      return "bytes";
    case ValueType::Kind::StringPointer:
      return "str";
    case ValueType::Kind::ClassPointer:
      return "class:" + type.class_name;
  }
  return "int";
}

std::optional<ValueType> parse_value_type(std::string_view text) {
  if (text == "int") return ValueType::integer();
  if (text == "bytes") return ValueType::bytes();
  if (text == "str") return ValueType::string();
  if (text.starts_with("class:") && text.size() > 6)
    return ValueType::class_ptr(std::string(text.substr(6)));
  return std::nullopt;
}

std::optional<std::size_t> Function::block_index(int block_id) const {
  for (std::size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].id == block_id) return i;
  return std::nullopt;
}

void Program::link() {
  function_by_id_.clear();
  class_by_name_.clear();
  for (std::size_t i = 0; i < functions.size(); ++i) {
    if (!function_by_id_.emplace(functions[i].id, i).second)
      throw DuplicateId("duplicate function id '" + functions[i].id + "'");
  }
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (!class_by_name_.emplace(classes[i].name, i).second)
      throw DuplicateId("duplicate class '" + classes[i].name + "'");
  }
  std::set<std::string, std::less<>> ext;
  for (const auto& e : externals)
    if (!ext.insert(e).second) throw DuplicateId("duplicate external '" + e + "'");

  auto need_fn = [&](const std::string& id, const std::string& ctx) {
    if (!function_by_id_.contains(id))
      throw DanglingReference(ctx + " references missing function '" + id + "'");
  };
  auto need_class = [&](const std::string& name, const std::string& ctx) {
    if (!class_by_name_.contains(name))
      throw DanglingReference(ctx + " references missing class '" + name + "'");
  };

  for (const auto& c : classes) {
    const std::string ctx = "class " + c.name;
    for (const auto& p : c.parents) need_class(p, ctx);
    for (const auto& f : c.vtable) need_fn(f, ctx + " vtable");
    for (const auto& f : c.constructors) need_fn(f, ctx + " constructors");
    for (const auto& f : c.members) need_fn(f, ctx + " members");
  }
  for (const auto& f : functions) {
    const std::string ctx = "function " + f.id;
    if (f.owning_class) need_class(*f.owning_class, ctx);
    for (const auto& p : f.params)
      if (p.type.is_class()) need_class(p.type.class_name, ctx + " param " + p.name);
    if (f.return_type.is_class()) need_class(f.return_type.class_name, ctx + " return type");
    for (const auto& b : f.blocks) {
      for (const auto& ins : b.ops) {
        if (!ins.callee) continue;
        if (ins.callee->is_external()) {
          if (!ext.contains(ins.callee->name))
            throw DanglingReference(ctx + " calls undeclared external '" + ins.callee->name + "'");
        } else {
          need_fn(ins.callee->name, ctx);
        }
      }
    }
  }
}

const Function* Program::find_function(std::string_view id) const {
  auto it = function_by_id_.find(id);
  return it == function_by_id_.end() ? nullptr : &functions[it->second];
}

std::optional<std::size_t> Program::function_index(std::string_view id) const {
  auto it = function_by_id_.find(id);
  if (it == function_by_id_.end()) return std::nullopt;
  return it->second;
}

const ClassInfo* Program::find_class(std::string_view name) const {
  auto it = class_by_name_.find(name);
  return it == class_by_name_.end() ? nullptr : &classes[it->second];
}

bool Program::has_external(std::string_view name) const {
  return std::find(externals.begin(), externals.end(), name) != externals.end();
}

const DataRegion* Program::region_at(std::uint64_t addr) const {
  for (const auto& r : data)
    if (r.contains(addr)) return &r;
  return nullptr;
}

std::optional<std::string> Program::c_string_at(std::uint64_t addr) const {
  const DataRegion* r = region_at(addr);
  if (!r) return std::nullopt;
  std::string out;
  for (std::size_t i = addr - r->address; i < r->bytes.size() && r->bytes[i] != 0; ++i)
    out.push_back(static_cast<char>(r->bytes[i]));
  return out;
}

std::vector<std::string> Program::with_subclasses(std::string_view class_name) const {
  std::set<std::string> out{std::string(class_name)};
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& c : classes) {
      if (out.contains(c.name)) continue;
      for (const auto& p : c.parents) {
        if (out.contains(p)) {
          out.insert(c.name);
          grew = true;
          break;
        }
      }
    }
  }
  return {out.begin(), out.end()};
}

std::vector<std::string> Program::ancestors(std::string_view class_name) const {
  std::vector<std::string> order;
  std::set<std::string, std::less<>> seen;
  std::function<void(std::string_view, int)> visit = [&](std::string_view name, int depth) {
    if (depth > 64) return;  // cyclic hierarchies are reported by validate()
    const ClassInfo* c = find_class(name);
    if (!c) return;
    for (const auto& p : c->parents) {
      if (seen.contains(p)) continue;
      visit(p, depth + 1);
      if (seen.insert(p).second) order.push_back(p);
    }
  };
  visit(class_name, 0);
  return order;
}

bool Program::operator==(const Program& other) const {
  return name == other.name && word_size == other.word_size && classes == other.classes &&
         functions == other.functions && data == other.data && externals == other.externals;
}

bool equivalent_by_id(const Program& a, const Program& b) {
  if (a.name != b.name || a.word_size != b.word_size) return false;
  auto sorted = [](auto v, auto key) {
    std::sort(v.begin(), v.end(), [&](const auto& x, const auto& y) { return key(x) < key(y); });
    return v;
  };
  auto fkey = [](const Function& f) { return f.id; };
  auto ckey = [](const ClassInfo& c) { return c.name; };
  auto dkey = [](const DataRegion& d) { return d.address; };
  auto ekey = [](const std::string& s) { return s; };
  return sorted(a.functions, fkey) == sorted(b.functions, fkey) &&
         sorted(a.classes, ckey) == sorted(b.classes, ckey) &&
         sorted(a.data, dkey) == sorted(b.data, dkey) &&
         sorted(a.externals, ekey) == sorted(b.externals, ekey);
}

const Instruction& instruction_at(const Program& p, const Site& s) {
  return p.functions.at(s.function).blocks.at(s.block).ops.at(s.index);
}

std::string format_site(const Program& p, const Site& s) {
  const Function& f = p.functions.at(s.function);
  return f.id + "@" + std::to_string(f.blocks.at(s.block).id) + ":" + std::to_string(s.index);
}

}  // namespace rilmine::ir
