// SPDX-License-Identifier: Apache-2.0
#include "rilmine/ir_io.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rilmine/error.hpp"
#include "rilmine/util.hpp"

namespace rilmine::ir {

using nlohmann::json;

namespace {

/// Position of byte offset `pos` in `text` as "line:col" (1-based).
std::string line_col(std::string_view text, std::size_t pos) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < pos && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

/// Walks the JSON document while tracking the field path for error messages.
class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  Program read_program() {
    const json& j = root_;
    expect_object(j, "");
    Program p;
    const auto version = integer(field(j, "ir_version", ""), "ir_version");
    if (version != kIrVersion)
      throw ParseError("ir_version", "unsupported version " + std::to_string(version));
    p.name = string(field(j, "name", ""), "name");
    if (j.contains("word_size")) {
      const auto ws = integer(j.at("word_size"), "word_size");
      if (ws != 4 && ws != 8) throw ParseError("word_size", "must be 4 or 8");
      p.word_size = static_cast<std::uint32_t>(ws);
    }
    p.externals = string_list(j, "externals", "");
    const json& data = array(field(j, "data", ""), "data");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::string path = "data[" + std::to_string(i) + "]";
      expect_object(data[i], path);
      DataRegion r;
      r.address = address(field(data[i], "addr", path), path + ".addr");
      auto bytes = util::parse_hex(string(field(data[i], "bytes", path), path + ".bytes"));
      if (!bytes) throw ParseError(path + ".bytes", "invalid hex byte string");
      r.bytes = std::move(*bytes);
      p.data.push_back(std::move(r));
    }
    const json& classes = array(field(j, "classes", ""), "classes");
    for (std::size_t i = 0; i < classes.size(); ++i)
      p.classes.push_back(read_class(classes[i], "classes[" + std::to_string(i) + "]"));
    const json& functions = array(field(j, "functions", ""), "functions");
    for (std::size_t i = 0; i < functions.size(); ++i)
      p.functions.push_back(read_function(functions[i], "functions[" + std::to_string(i) + "]"));
    return p;
  }

 private:
  static void expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw ParseError(path.empty() ? "<root>" : path, "expected an object");
  }

  static const json& field(const json& j, const char* key, const std::string& path) {
    auto it = j.find(key);
    if (it == j.end())
      throw ParseError(path.empty() ? key : path + "." + key, "missing required field");
    return *it;
  }

  static const json& array(const json& j, const std::string& path) {
    if (!j.is_array()) throw ParseError(path, "expected an array");
    return j;
  }

  static std::string string(const json& j, const std::string& path) {
    if (!j.is_string()) throw ParseError(path, "expected a string");
    return j.get<std::string>();
  }

  static std::int64_t integer(const json& j, const std::string& path) {
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_string()) {
      if (auto v = util::parse_int(j.get<std::string>())) return *v;
    }
    throw ParseError(path, "expected an integer");
  }

  static std::uint64_t address(const json& j, const std::string& path) {
    const auto v = integer(j, path);
    if (v < 0) throw ParseError(path, "negative address");
    return static_cast<std::uint64_t>(v);
  }

  static std::vector<std::string> string_list(const json& j, const char* key, const std::string& path) {
    const std::string p = path.empty() ? key : path + "." + key;
    std::vector<std::string> out;
    if (!j.contains(key)) return out;
    const json& a = array(j.at(key), p);
    for (std::size_t i = 0; i < a.size(); ++i)
      out.push_back(string(a[i], p + "[" + std::to_string(i) + "]"));
    return out;
  }

  static ValueType type(const json& j, const std::string& path) {
    auto t = parse_value_type(string(j, path));
    if (!t) throw ParseError(path, "unknown type '" + j.get<std::string>() + "'");
    return *t;
  }

  static Varnode varnode(const json& j, const std::string& path) {
    expect_object(j, path);
    Varnode v;
    const auto space_name = string(field(j, "space", path), path + ".space");
    auto space = parse_space(space_name);
    if (!space) throw ParseError(path + ".space", "unknown space '" + space_name + "'");
    v.space = *space;
    v.offset = integer(field(j, "offset", path), path + ".offset");
    const auto size = integer(field(j, "size", path), path + ".size");
    if (size < 1 || size > 64) throw ParseError(path + ".size", "size must be in [1, 64]");
    v.size = static_cast<std::uint32_t>(size);
    return v;
  }

  static Instruction instruction(const json& j, const std::string& path) {
    expect_object(j, path);
    Instruction ins;
    const auto name = string(field(j, "op", path), path + ".op");
    auto op = parse_opcode(name);
    if (!op) throw ParseError(path + ".op", "unknown opcode '" + name + "'");
    ins.op = *op;
    if (j.contains("out")) ins.out = varnode(j.at("out"), path + ".out");
    if (j.contains("in")) {
      const json& in = array(j.at("in"), path + ".in");
      for (std::size_t i = 0; i < in.size(); ++i)
        ins.in.push_back(varnode(in[i], path + ".in[" + std::to_string(i) + "]"));
    }
    if (j.contains("callee")) {
      const json& c = j.at("callee");
      const std::string cp = path + ".callee";
      expect_object(c, cp);
      if (c.contains("fn")) {
        ins.callee = Callee{Callee::Kind::Function, string(c.at("fn"), cp + ".fn")};
      } else if (c.contains("ext")) {
        ins.callee = Callee{Callee::Kind::External, string(c.at("ext"), cp + ".ext")};
      } else {
        throw ParseError(cp, "expected 'fn' or 'ext'");
      }
    }
    return ins;
  }

  static ClassInfo read_class(const json& j, const std::string& path) {
    expect_object(j, path);
    ClassInfo c;
    c.name = string(field(j, "name", path), path + ".name");
    c.parents = string_list(j, "parents", path);
    if (j.contains("vtable_addr")) c.vtable_addr = address(j.at("vtable_addr"), path + ".vtable_addr");
    c.vtable = string_list(j, "vtable", path);
    c.constructors = string_list(j, "constructors", path);
    c.members = string_list(j, "members", path);
    return c;
  }

  static Function read_function(const json& j, const std::string& path) {
    expect_object(j, path);
    Function f;
    f.id = string(field(j, "id", path), path + ".id");
    f.name = string(field(j, "name", path), path + ".name");
    if (j.contains("class")) f.owning_class = string(j.at("class"), path + ".class");
    if (j.contains("params")) {
      const json& ps = array(j.at("params"), path + ".params");
      for (std::size_t i = 0; i < ps.size(); ++i) {
        const std::string pp = path + ".params[" + std::to_string(i) + "]";
        expect_object(ps[i], pp);
        f.params.push_back({string(field(ps[i], "name", pp), pp + ".name"),
                            type(field(ps[i], "type", pp), pp + ".type")});
      }
    }
    if (j.contains("returns")) f.return_type = type(j.at("returns"), path + ".returns");
    if (j.contains("stack_size")) {
      f.stack_size = integer(j.at("stack_size"), path + ".stack_size");
      if (f.stack_size < 0) throw ParseError(path + ".stack_size", "negative stack size");
    }
    const json& blocks = array(field(j, "blocks", path), path + ".blocks");
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const std::string bp = path + ".blocks[" + std::to_string(b) + "]";
      expect_object(blocks[b], bp);
      BasicBlock block;
      block.id = static_cast<int>(integer(field(blocks[b], "id", bp), bp + ".id"));
      if (blocks[b].contains("succ")) {
        const json& s = array(blocks[b].at("succ"), bp + ".succ");
        for (std::size_t i = 0; i < s.size(); ++i)
          block.successors.push_back(static_cast<int>(integer(s[i], bp + ".succ[" + std::to_string(i) + "]")));
      }
      const json& ops = array(field(blocks[b], "ops", bp), bp + ".ops");
      for (std::size_t i = 0; i < ops.size(); ++i)
        block.ops.push_back(instruction(ops[i], bp + ".ops[" + std::to_string(i) + "]"));
      f.blocks.push_back(std::move(block));
    }
    return f;
  }

  const json& root_;
};

json to_json(const Varnode& v) {
  return json{{"space", std::string(to_string(v.space))}, {"offset", v.offset}, {"size", v.size}};
}

json to_json(const Instruction& ins) {
  json j{{"op", std::string(to_string(ins.op))}};
  if (ins.out) j["out"] = to_json(*ins.out);
  json in = json::array();
  for (const auto& v : ins.in) in.push_back(to_json(v));
  j["in"] = std::move(in);
  if (ins.callee) {
    j["callee"] = ins.callee->is_external() ? json{{"ext", ins.callee->name}}
                                            : json{{"fn", ins.callee->name}};
  }
  return j;
}

}  // namespace

Program load_program(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(line_col(text, e.byte == 0 ? 0 : e.byte - 1), "syntax error");
  }
  Program p = Reader(doc).read_program();
  p.link();
  return p;
}

Program load_program_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return load_program(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ":" + e.where(), e.what());
  }
}

std::string serialize(const Program& p) {
  json j;
  j["ir_version"] = kIrVersion;
  j["name"] = p.name;
  j["word_size"] = p.word_size;
  j["externals"] = p.externals;
  json data = json::array();
  for (const auto& r : p.data)
    data.push_back({{"addr", util::hex_address(r.address)}, {"bytes", util::to_hex(r.bytes)}});
  j["data"] = std::move(data);
  json classes = json::array();
  for (const auto& c : p.classes) {
    classes.push_back({{"name", c.name},
                       {"parents", c.parents},
                       {"vtable_addr", util::hex_address(c.vtable_addr)},
                       {"vtable", c.vtable},
                       {"constructors", c.constructors},
                       {"members", c.members}});
  }
  j["classes"] = std::move(classes);
  json functions = json::array();
  for (const auto& f : p.functions) {
    json fj{{"id", f.id}, {"name", f.name}};
    if (f.owning_class) fj["class"] = *f.owning_class;
    json params = json::array();
    for (const auto& prm : f.params) params.push_back({{"name", prm.name}, {"type", to_string(prm.type)}});
    fj["params"] = std::move(params);
    fj["returns"] = to_string(f.return_type);
    fj["stack_size"] = f.stack_size;
    json blocks = json::array();
    for (const auto& b : f.blocks) {
      json ops = json::array();
      for (const auto& ins : b.ops) ops.push_back(to_json(ins));
      blocks.push_back({{"id", b.id}, {"succ", b.successors}, {"ops", std::move(ops)}});
    }
    fj["blocks"] = std::move(blocks);
    functions.push_back(std::move(fj));
  }
  j["functions"] = std::move(functions);
  return j.dump(1) + "\n";
}

// ---------------------------------------------------------------------------

namespace {

class Validator {
 public:
  explicit Validator(const Program& p) : p_(p) {}

  std::vector<Diagnostic> run() {
    check_program();
    check_classes();
    for (const auto& f : p_.functions) check_function(f);
    return std::move(out_);
  }

 private:
  void report(std::string tag, std::string where, std::string msg) {
    out_.push_back({std::move(tag), std::move(where), std::move(msg)});
  }

  void check_program() {
    if (p_.word_size != 4 && p_.word_size != 8)
      report("word-size", "program", "word_size must be 4 or 8");
    std::set<std::string> ids;
    for (const auto& f : p_.functions)
      if (!ids.insert(f.id).second) report("unique-function-id", "function " + f.id, "duplicate function id");
    std::set<std::string> ext;
    for (const auto& e : p_.externals)
      if (!ext.insert(e).second) report("unique-external", "external " + e, "duplicate external name");
    std::vector<const DataRegion*> regions;
    for (const auto& r : p_.data) regions.push_back(&r);
    std::sort(regions.begin(), regions.end(),
              [](const DataRegion* a, const DataRegion* b) { return a->address < b->address; });
    for (std::size_t i = 1; i < regions.size(); ++i) {
      const auto* prev = regions[i - 1];
      if (prev->address + prev->bytes.size() > regions[i]->address)
        report("data-overlap", "data " + util::hex_address(regions[i]->address),
               "overlaps region at " + util::hex_address(prev->address));
    }
  }

  void check_classes() {
    for (const auto& c : p_.classes) {
      const std::string where = "class " + c.name;
      for (const auto& fid : c.vtable)
        if (!p_.find_function(fid)) report("vtable-resolves", where, "vtable entry '" + fid + "' is not a function");
      for (const auto& fid : c.constructors)
        if (!p_.find_function(fid)) report("class-function-resolves", where, "constructor '" + fid + "' missing");
      for (const auto& fid : c.members)
        if (!p_.find_function(fid)) report("class-function-resolves", where, "member '" + fid + "' missing");
      for (const auto& parent : c.parents)
        if (!p_.find_class(parent)) report("parent-resolves", where, "parent '" + parent + "' missing");
    }
    // Parent cycles: report each cycle once, at its lexicographically smallest class.
    for (const auto& c : p_.classes) {
      if (reaches(c.name, c.name)) {
        bool smallest = true;
        for (const auto& other : p_.classes)
          if (other.name < c.name && reaches(c.name, other.name) && reaches(other.name, c.name)) smallest = false;
        if (smallest) report("acyclic-parents", "class " + c.name, "class hierarchy contains a cycle");
      }
    }
  }

  /// True if `target` is reachable from `from` by one or more parent steps.
  bool reaches(const std::string& from, const std::string& target) const {
    std::set<std::string> seen;
    std::vector<std::string> work;
    if (const auto* c = p_.find_class(from)) work.assign(c->parents.begin(), c->parents.end());
    while (!work.empty()) {
      auto cur = work.back();
      work.pop_back();
      if (cur == target) return true;
      if (!seen.insert(cur).second) continue;
      if (const auto* c = p_.find_class(cur)) work.insert(work.end(), c->parents.begin(), c->parents.end());
    }
    return false;
  }

  void check_varnode(const Function& f, const Varnode& v, const std::string& where) {
    if (v.size < 1) report("varnode-size", where, "varnode size must be >= 1");
    if (v.space == Space::Stack && (v.offset < 0 || v.offset + static_cast<std::int64_t>(v.size) > f.stack_size))
      report("stack-bounds", where, "stack offset " + std::to_string(v.offset) + " outside frame of " +
                                        std::to_string(f.stack_size) + " bytes");
  }

  void check_function(const Function& f) {
    const std::string fwhere = "function " + f.id;
    if (f.owning_class) {
      if (!p_.find_class(*f.owning_class))
        report("owning-class-resolves", fwhere, "owning class '" + *f.owning_class + "' missing");
      if (f.params.empty() || f.params[0].name != "this" ||
          f.params[0].type != ValueType::class_ptr(*f.owning_class))
        report("member-this-param", fwhere, "member function lacks `this` of type class:" + *f.owning_class);
    }
    if (f.blocks.empty()) report("non-empty-function", fwhere, "function has no blocks");
    std::set<int> block_ids;
    for (const auto& b : f.blocks)
      if (!block_ids.insert(b.id).second) report("unique-block-id", fwhere, "duplicate block id " + std::to_string(b.id));
    for (const auto& b : f.blocks) {
      for (int s : b.successors)
        if (!block_ids.contains(s))
          report("successor-resolves", fwhere + " block " + std::to_string(b.id),
                 "successor " + std::to_string(s) + " is not a block of this function");
      for (std::size_t i = 0; i < b.ops.size(); ++i) {
        const std::string where = f.id + "@" + std::to_string(b.id) + ":" + std::to_string(i);
        check_instruction(f, b, b.ops[i], where, block_ids);
      }
    }
  }

  void check_instruction(const Function& f, const BasicBlock& b, const Instruction& ins, const std::string& where,
                         const std::set<int>& block_ids) {
    if (ins.out) {
      check_varnode(f, *ins.out, where);
      if (ins.out->is_const()) report("output-not-const", where, "output varnode is a constant");
      if (ins.out->is_frame()) report("frame-register-readonly", where, "frame register is written");
    }
    for (const auto& v : ins.in) check_varnode(f, v, where);
    auto arity = [&](std::size_t n, bool wants_out) {
      if (ins.in.size() != n)
        report("operand-count", where,
               std::string(to_string(ins.op)) + " expects " + std::to_string(n) + " inputs");
      if (wants_out != ins.out.has_value())
        report("operand-count", where,
               std::string(to_string(ins.op)) + (wants_out ? " needs an output" : " takes no output"));
    };
    switch (ins.op) {
      case Opcode::Copy:
      case Opcode::Load:
        arity(1, true);
        break;
      case Opcode::Store:
        arity(2, false);
        break;
      case Opcode::IntAdd:
      case Opcode::IntSub:
        arity(2, true);
        break;
      case Opcode::IntEqual:
      case Opcode::IntNotEqual:
      case Opcode::IntLess:
        arity(2, true);
        if (ins.out && ins.out->size != 1) report("comparison-shape", where, "comparison output must be 1 byte");
        break;
      case Opcode::Call:
        if (!ins.callee) {
          report("call-callee", where, "CALL without a callee");
        } else if (ins.callee->is_external() ? !p_.has_external(ins.callee->name)
                                             : p_.find_function(ins.callee->name) == nullptr) {
          report("call-callee", where, "callee '" + ins.callee->name + "' does not resolve");
        }
        break;
      case Opcode::CallInd:
        if (ins.callee) report("callind-target", where, "CALLIND must not carry a static callee");
        if (ins.in.empty()) report("callind-target", where, "CALLIND needs a computed target in input 0");
        break;
      case Opcode::Branch:
        arity(1, false);
        if (!ins.in.empty() && (!ins.in[0].is_const() || !block_ids.contains(static_cast<int>(ins.in[0].offset))))
          report("branch-target", where, "BRANCH target is not a block of this function");
        break;
      case Opcode::CBranch:
        arity(2, false);
        if (!ins.in.empty() && (!ins.in[0].is_const() || !block_ids.contains(static_cast<int>(ins.in[0].offset))))
          report("branch-target", where, "CBRANCH target is not a block of this function");
        else if (!ins.in.empty() && std::find(b.successors.begin(), b.successors.end(),
                                              static_cast<int>(ins.in[0].offset)) == b.successors.end())
          report("branch-target", where, "CBRANCH target is not a successor of its block");
        break;
      case Opcode::Return:
        if (ins.in.size() > 1) report("operand-count", where, "RETURN takes at most one input");
        if (ins.out) report("operand-count", where, "RETURN takes no output");
        break;
    }
    if (ins.op != Opcode::Call && ins.op != Opcode::CallInd && ins.callee)
      report("callee-on-non-call", where, "only CALL may carry a callee");
  }

  const Program& p_;
  std::vector<Diagnostic> out_;
};

}  // namespace

std::vector<Diagnostic> validate(const Program& program) { return Validator(program).run(); }

}  // namespace rilmine::ir
