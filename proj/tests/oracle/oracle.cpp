// SPDX-License-Identifier: Apache-2.0
#include "oracle.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace rilmine::oracle {

using ir::Opcode;
using ir::Space;

namespace {

enum class K : std::uint8_t { Unknown, Const, Frame, This, ClassRef, Obj, FnPtr, Fd, Strlen, Tainted, Cmp, Param };
enum class FdKind : std::uint8_t { Open, Pipe, Socket };

struct Val {
  K k = K::Unknown;
  std::int64_t n = 0;  // constant, pointer offset, strlen addend, param index, sink index
  int act = -1;        // owning activation for Const/Frame/This/Param
  std::string s;       // class name, callee id or open path
  int sub = 0;         // FdKind, taint source

  static Val unknown() { return {}; }
  static Val cnst(std::int64_t v, int act) { return {K::Const, v, act, {}, 0}; }
};

std::int64_t truncate(std::int64_t v, std::uint32_t size) {
  if (size >= 8) return v;
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(v) & ((std::uint64_t{1} << (8 * size)) - 1));
}

struct Cell {
  enum class St : std::uint8_t { Uninit, Static, Dynamic, Tainted } st = St::Uninit;
  std::uint8_t v = 0;
  int src = 0;
};

struct Mem {
  std::map<std::int64_t, Cell> cells;
  std::map<std::int64_t, std::pair<std::uint32_t, Val>> slots;  // exact-width values
  std::int64_t end = 0;                                          // stack size
};

struct Act {
  std::uint32_t fn = 0;
  int id = 0;
  std::uint32_t block = 0;
  std::uint32_t index = 0;
  std::map<std::pair<Space, std::int64_t>, Val> regs;
  int pending_sink = -1;  // guarded dispatch awaiting its first call
  std::uint32_t pending_block = 0;
};

struct Machine {
  std::vector<Act> stack;
  std::map<int, Mem> mem;
  int next_id = 1;
};

enum class LenKind : std::uint8_t { Const, Strlen, Unknown };

struct PathPayload {
  std::string api;
  std::vector<std::optional<std::uint8_t>> bytes;
  LenKind len = LenKind::Unknown;
  std::int64_t amount = 0;  // constant length or strlen addend
  auto tie() const { return std::tie(api, bytes, len, amount); }
  bool operator<(const PathPayload& o) const { return tie() < o.tie(); }
};

struct SinkInfo {
  int src = 0;
  std::string cmp_site;
  std::string function;
  std::int64_t constant = 0;
  std::uint32_t size = 1;
  auto tie() const { return std::tie(src, cmp_site, constant, size); }
  bool operator<(const SinkInfo& o) const { return tie() < o.tie(); }
};

// An fd origin seen at one system-call site. "param" origins are settled
// once every root has run and the callers are known.
using Origin = std::tuple<std::string, std::string, std::uint32_t>;  // kind, path, root fn

std::string hex2(std::uint8_t b) {
  char buf[3];
  std::snprintf(buf, sizeof buf, "%02x", b);
  return buf;
}

bool device_path(const std::string& path) {
  return path.rfind("/dev/", 0) == 0 && path.find(' ', 5) == std::string::npos;
}

class Explorer {
 public:
  Explorer(const ir::Program& p, const Options& o) : p_(p), opt_(o) {}

  Result run() {
    for (std::uint32_t f = 0; f < p_.functions.size(); ++f) explore_root(f);
    return assemble();
  }

 private:
  struct Api {
    bool solicited;
    int fd, buf, len;
  };

  static std::optional<Api> api_of(const std::string& name) {
    if (name == "write" || name == "__write_chk" || name == "sendto") return Api{true, 0, 1, 2};
    if (name == "ioctl") return Api{true, 0, 1, -1};
    if (name == "read" || name == "__read_chk") return Api{false, 0, 1, 2};
    return std::nullopt;
  }

  std::string site_str(std::uint32_t fn, std::uint32_t block, std::uint32_t index) const {
    const auto& f = p_.functions[fn];
    return f.id + "@" + std::to_string(f.blocks[block].id) + ":" + std::to_string(index);
  }

  // --- roots -----------------------------------------------------------------------

  Act entry(std::uint32_t fn, int id, const std::vector<Val>& args) const {
    Act a;
    a.fn = fn;
    a.id = id;
    const auto& f = p_.functions[fn];
    for (std::size_t k = 0; k < f.params.size(); ++k) {
      Val v = k < args.size() ? args[k] : Val::unknown();
      if (k == 0 && f.owning_class && f.params[0].type.is_class()) v = Val{K::This, 0, id, *f.owning_class, 0};
      a.regs[{Space::Reg, static_cast<std::int64_t>(k * p_.word_size)}] = v;
    }
    return a;
  }

  void explore(std::uint32_t fn, const std::vector<Val>& args) {
    Machine m;
    m.stack.push_back(entry(fn, 0, args));
    m.mem[0].end = p_.functions[fn].stack_size;
    std::vector<Machine> work{std::move(m)};
    std::size_t paths = 0;
    while (!work.empty()) {
      Machine cur = std::move(work.back());
      work.pop_back();
      if (++paths > opt_.max_paths_per_root) {
        truncated_ = true;
        break;
      }
      while (!cur.stack.empty()) step(cur, work);
    }
    total_paths_ += paths;
  }

  void explore_root(std::uint32_t fn) {
    root_ = fn;
    const auto& f = p_.functions[fn];
    std::vector<Val> args;
    for (std::size_t k = 0; k < f.params.size(); ++k) args.push_back(Val{K::Param, static_cast<std::int64_t>(k), 0, {}, 0});
    explore(fn, args);
  }

  // --- object layout ---------------------------------------------------------------

  /// Values stored at this+off by the first function of the class's search
  /// order (parent constructors, own constructors, members) that stores there.
  const std::vector<Val>& field(const std::string& cls, std::int64_t off) {
    static const std::vector<Val> none;
    if (!layouts_.contains(cls)) {
      if (building_.contains(cls)) return none;
      building_.insert(cls);
      build_layout(cls);
      building_.erase(cls);
    }
    auto& layout = layouts_[cls];
    auto it = layout.find(off);
    return it == layout.end() ? none : it->second;
  }

  void build_layout(const std::string& cls) {
    std::vector<std::string> order;
    auto push = [&](const std::string& id) {
      if (std::find(order.begin(), order.end(), id) == order.end()) order.push_back(id);
    };
    for (const auto& anc : p_.ancestors(cls))
      if (const auto* c = p_.find_class(anc))
        for (const auto& ctor : c->constructors) push(ctor);
    if (const auto* c = p_.find_class(cls)) {
      for (const auto& ctor : c->constructors) push(ctor);
      for (const auto& m : c->members) push(m);
    }
    std::map<std::int64_t, std::vector<Val>> layout;
    const auto saved_root = root_;
    const bool saved_mode = recording_;
    auto saved_stores = std::move(stores_);
    for (const auto& id : order) {
      auto fi = p_.function_index(id);
      if (!fi) continue;
      const auto& f = p_.functions[*fi];
      std::vector<Val> args;
      for (std::size_t k = 0; k < f.params.size(); ++k) {
        const auto& t = f.params[k].type;
        args.push_back(t.is_class() ? Val{K::ClassRef, 0, 0, t.class_name, 0}
                                    : Val{K::Param, static_cast<std::int64_t>(k), 0, {}, 0});
      }
      recording_ = true;
      stores_.clear();
      root_ = static_cast<std::uint32_t>(*fi);
      explore(root_, args);
      for (auto& [off, vals] : stores_) {
        if (layout.contains(off)) continue;
        layout[off] = std::move(vals);
      }
    }
    stores_ = std::move(saved_stores);
    recording_ = saved_mode;
    root_ = saved_root;
    layouts_[cls] = std::move(layout);
  }

  // --- machine ---------------------------------------------------------------------

  Val read(Machine& m, const ir::Varnode& v) {
    auto& a = m.stack.back();
    switch (v.space) {
      case Space::Const:
        return Val::cnst(truncate(v.offset, v.size), a.id);
      case Space::Stack: {
        auto vals = load(m, Val{K::Frame, v.offset, a.id, {}, 0}, v.size);
        return vals.size() == 1 ? vals.front() : Val::unknown();
      }
      case Space::Ram: {
        auto vals = load(m, Val::cnst(v.offset, a.id), v.size);
        return vals.size() == 1 ? vals.front() : Val::unknown();
      }
      case Space::Reg:
        if (v.offset == ir::kFrameRegister) return Val{K::Frame, 0, a.id, {}, 0};
        [[fallthrough]];
      case Space::Unique: {
        auto it = a.regs.find({v.space, v.offset});
        if (it == a.regs.end()) return Val::unknown();
        Val out = it->second;
        if (out.k == K::Const) out.n = truncate(out.n, v.size);
        return out;
      }
    }
    return Val::unknown();
  }

  void write(Machine& m, const ir::Varnode& v, Val val) {
    auto& a = m.stack.back();
    if (v.space == Space::Stack) {
      store(m, Val{K::Frame, v.offset, a.id, {}, 0}, val, v.size);
      return;
    }
    if (val.k == K::Const) val.n = truncate(val.n, v.size);
    a.regs[{v.space, v.offset}] = std::move(val);
  }

  std::vector<Val> load(Machine& m, const Val& addr, std::uint32_t size) {
    const int here = m.stack.back().id;
    switch (addr.k) {
      case K::Frame: {
        auto mit = m.mem.find(addr.act);
        if (mit == m.mem.end()) return {Val::unknown()};
        auto& mem = mit->second;
        if (auto s = mem.slots.find(addr.n); s != mem.slots.end() && s->second.first == size) return {s->second.second};
        std::uint64_t v = 0;
        bool all_static = true;
        for (std::uint32_t k = 0; k < size; ++k) {
          auto c = mem.cells.find(addr.n + k);
          if (c != mem.cells.end() && c->second.st == Cell::St::Tainted) return {Val{K::Tainted, 0, -1, {}, c->second.src}};
          if (c == mem.cells.end() || c->second.st != Cell::St::Static) all_static = false;
          else v |= static_cast<std::uint64_t>(c->second.v) << (8 * k);
        }
        if (all_static) return {Val::cnst(static_cast<std::int64_t>(v), here)};
        return {Val::unknown()};
      }
      case K::This: {
        if (recording_ && addr.act == 0) return {Val::unknown()};
        std::vector<Val> out;
        for (const auto& v : field(addr.s, addr.n)) {
          if (v.k == K::ClassRef) {
            for (const auto& c : p_.with_subclasses(v.s)) out.push_back(Val{K::Obj, 0, -1, c, 0});
          } else {
            Val copy = v;
            if (copy.k == K::Const || copy.k == K::Param) copy.act = -1;
            out.push_back(std::move(copy));
          }
        }
        if (out.empty()) out.push_back(Val::unknown());
        return out;
      }
      case K::Obj: {
        // An object reference loaded from a field doubles as its vtable pointer.
        const auto* c = p_.find_class(addr.s);
        const auto ws = static_cast<std::int64_t>(p_.word_size);
        if (c && addr.n >= 0 && addr.n % ws == 0 && static_cast<std::size_t>(addr.n / ws) < c->vtable.size())
          return {Val{K::FnPtr, 0, -1, c->vtable[static_cast<std::size_t>(addr.n / ws)], 0}};
        return {Val::unknown()};
      }
      case K::Const: {
        const auto x = static_cast<std::uint64_t>(addr.n);
        if (const auto* r = p_.region_at(x); r && r->contains(x + size - 1)) {
          std::uint64_t v = 0;
          for (std::uint32_t k = 0; k < size; ++k) v |= static_cast<std::uint64_t>(r->bytes[x - r->address + k]) << (8 * k);
          return {Val::cnst(static_cast<std::int64_t>(v), here)};
        }
        // A literal vtable address: any class sharing that layout.
        const ir::ClassInfo* best = nullptr;
        for (const auto& c : p_.classes) {
          if (c.vtable_addr == 0 || c.vtable_addr > x) continue;
          if (!best || c.vtable_addr > best->vtable_addr) best = &c;
        }
        const auto ws = p_.word_size;
        if (!best || (x - best->vtable_addr) % ws != 0 || x - best->vtable_addr >= 64ull * ws) return {Val::unknown()};
        const auto slot = (x - best->vtable_addr) / ws;
        std::vector<Val> out;
        for (const auto& name : p_.with_subclasses(best->name)) {
          const auto* c = p_.find_class(name);
          if (c && slot < c->vtable.size()) out.push_back(Val{K::FnPtr, 0, -1, c->vtable[slot], 0});
        }
        if (out.empty()) out.push_back(Val::unknown());
        return out;
      }
      default:
        return {Val::unknown()};
    }
  }

  void set_cells(Mem& mem, std::int64_t off, std::int64_t count, Cell cell) {
    for (std::int64_t k = 0; k < count; ++k) mem.cells[off + k] = cell;
    for (auto it = mem.slots.begin(); it != mem.slots.end();) {
      const bool overlap = it->first < off + count && it->first + it->second.first > off;
      it = overlap ? mem.slots.erase(it) : std::next(it);
    }
  }

  void store(Machine& m, const Val& addr, const Val& v, std::uint32_t size) {
    if (addr.k == K::This && recording_ && addr.act == 0) {
      stores_[addr.n].push_back(v);
      return;
    }
    if (addr.k != K::Frame) return;
    auto mit = m.mem.find(addr.act);
    if (mit == m.mem.end()) return;
    auto& mem = mit->second;
    if (v.k == K::Const) {
      set_cells(mem, addr.n, 0, {});
      for (std::uint32_t k = 0; k < size; ++k)
        mem.cells[addr.n + k] = {Cell::St::Static, static_cast<std::uint8_t>(static_cast<std::uint64_t>(v.n) >> (8 * k)), 0};
    } else if (v.k == K::Tainted) {
      set_cells(mem, addr.n, size, {Cell::St::Tainted, 0, v.sub});
    } else {
      set_cells(mem, addr.n, size, {Cell::St::Dynamic, 0, 0});
    }
    set_cells(mem, addr.n, 0, {});
    for (auto it = mem.slots.begin(); it != mem.slots.end();) {
      const bool overlap = it->first < addr.n + size && it->first + it->second.first > addr.n;
      it = overlap ? mem.slots.erase(it) : std::next(it);
    }
    mem.slots[addr.n] = {size, v};
  }

  static Val shift(Val v, std::int64_t by, int here) {
    switch (v.k) {
      case K::Frame:
      case K::This:
      case K::Obj:
      case K::Strlen:
        v.n += by;
        return v;
      case K::Const:
        return Val::cnst(v.n + by, here);
      case K::Tainted:
        return v;
      default:
        return Val::unknown();
    }
  }

  Val arith(Opcode op, const Val& a, const Val& b, int here) {
    if (op == Opcode::IntAdd) {
      if (b.k == K::Const) return shift(a, b.n, here);
      if (a.k == K::Const) return shift(b, a.n, here);
    } else if (b.k == K::Const) {
      return shift(a, -b.n, here);
    }
    if (a.k == K::Tainted) return a;
    if (b.k == K::Tainted) return b;
    return Val::unknown();
  }

  void goto_block(Act& a, std::int64_t block_id) {
    const auto& f = p_.functions[a.fn];
    auto bi = f.block_index(static_cast<int>(block_id));
    a.pending_sink = -1;
    if (!bi) {
      a.block = static_cast<std::uint32_t>(f.blocks.size());
      return;
    }
    a.block = static_cast<std::uint32_t>(*bi);
    a.index = 0;
  }

  void do_return(Machine& m, const Val& value) {
    const int id = m.stack.back().id;
    m.stack.pop_back();
    m.mem.erase(id);
    if (m.stack.empty()) return;
    auto& caller = m.stack.back();
    const auto& ins = p_.functions[caller.fn].blocks[caller.block].ops[caller.index];
    if (ins.out) write(m, *ins.out, value);
    ++m.stack.back().index;
  }

  void note_handler(Act& a, const std::string& callee_id) {
    if (a.pending_sink < 0 || a.block != a.pending_block) return;
    const auto* f = p_.find_function(callee_id);
    auto& h = handlers_[static_cast<std::size_t>(a.pending_sink)];
    if (!h) h = f ? f->name : callee_id;
    a.pending_sink = -1;
  }

  bool enter(Machine& m, const std::string& callee_id, const std::vector<Val>& args) {
    auto fi = p_.function_index(callee_id);
    if (!fi) return false;
    if (static_cast<int>(m.stack.size()) >= opt_.max_depth) return false;
    for (const auto& a : m.stack)
      if (a.fn == *fi) return false;
    const int id = m.next_id++;
    m.mem[id].end = p_.functions[*fi].stack_size;
    m.stack.push_back(entry(static_cast<std::uint32_t>(*fi), id, args));
    return true;
  }

  void step(Machine& m, std::vector<Machine>& work) {
    auto& a = m.stack.back();
    const auto& f = p_.functions[a.fn];
    if (a.block >= f.blocks.size()) {
      do_return(m, Val::unknown());
      return;
    }
    const auto& bb = f.blocks[a.block];
    if (a.index >= bb.ops.size()) {
      if (bb.successors.empty()) do_return(m, Val::unknown());
      else goto_block(a, bb.successors.front());
      return;
    }
    const auto& ins = bb.ops[a.index];
    const int here = a.id;
    auto advance = [&] { ++m.stack.back().index; };

    switch (ins.op) {
      case Opcode::Copy:
        write(m, *ins.out, read(m, ins.in[0]));
        advance();
        return;
      case Opcode::Load: {
        auto vals = load(m, read(m, ins.in[0]), ins.out->size);
        for (std::size_t k = 1; k < vals.size(); ++k) {
          Machine alt = m;
          write(alt, *ins.out, vals[k]);
          ++alt.stack.back().index;
          work.push_back(std::move(alt));
        }
        write(m, *ins.out, vals.front());
        advance();
        return;
      }
      case Opcode::Store:
        store(m, read(m, ins.in[0]), read(m, ins.in[1]), ins.in[1].size);
        advance();
        return;
      case Opcode::IntAdd:
      case Opcode::IntSub:
        write(m, *ins.out, arith(ins.op, read(m, ins.in[0]), read(m, ins.in[1]), here));
        advance();
        return;
      case Opcode::IntEqual:
      case Opcode::IntNotEqual:
      case Opcode::IntLess: {
        const Val x = read(m, ins.in[0]);
        const Val y = read(m, ins.in[1]);
        Val out;
        if (x.k == K::Const && y.k == K::Const) {
          const bool r = ins.op == Opcode::IntEqual ? x.n == y.n : ins.op == Opcode::IntNotEqual ? x.n != y.n : x.n < y.n;
          out = Val::cnst(r ? 1 : 0, here);
        } else if (ins.op != Opcode::IntLess && !recording_) {
          const ir::Varnode* lit = nullptr;
          const Val* tainted = nullptr;
          if (x.k == K::Tainted && ins.in[1].is_const()) tainted = &x, lit = &ins.in[1];
          if (y.k == K::Tainted && ins.in[0].is_const()) tainted = &y, lit = &ins.in[0];
          if (tainted) {
            SinkInfo s{tainted->sub, site_str(a.fn, a.block, a.index), f.name, truncate(lit->offset, lit->size), lit->size};
            auto [it, fresh] = sink_index_.emplace(s, sinks_.size());
            if (fresh) {
              sinks_.push_back(s);
              handlers_.emplace_back();
            }
            out = Val{K::Cmp, static_cast<std::int64_t>(it->second), -1, ins.op == Opcode::IntEqual ? "eq" : "ne", 0};
          }
        }
        write(m, *ins.out, out);
        advance();
        return;
      }
      case Opcode::Branch:
        goto_block(a, ins.in[0].offset);
        return;
      case Opcode::CBranch: {
        const Val c = read(m, ins.in[1]);
        const std::int64_t taken = ins.in[0].offset;
        std::optional<std::int64_t> other;
        for (int s : bb.successors)
          if (s != taken) {
            other = s;
            break;
          }
        if (c.k == K::Const) {
          if (c.n != 0) goto_block(a, taken);
          else if (other) goto_block(a, *other);
          else do_return(m, Val::unknown());
          return;
        }
        std::optional<std::int64_t> equal_side;
        if (c.k == K::Cmp) equal_side = c.s == "eq" ? std::optional(taken) : other;
        auto go = [&](Machine& mm, std::optional<std::int64_t> target) {
          if (!target) {
            do_return(mm, Val::unknown());
            return;
          }
          auto& top = mm.stack.back();
          goto_block(top, *target);
          if (equal_side && *target == *equal_side) {
            top.pending_sink = static_cast<int>(c.n);
            top.pending_block = top.block;
          }
        };
        Machine alt = m;
        go(alt, other);
        work.push_back(std::move(alt));
        go(m, taken);
        return;
      }
      case Opcode::Return:
        do_return(m, ins.in.empty() ? Val::unknown() : read(m, ins.in[0]));
        return;
      case Opcode::Call: {
        std::vector<Val> args;
        for (const auto& v : ins.in) args.push_back(read(m, v));
        if (ins.callee->is_external()) {
          external(m, ins.callee->name, args, ins);
          return;
        }
        note_handler(a, ins.callee->name);
        if (!enter(m, ins.callee->name, args)) {
          if (ins.out) write(m, *ins.out, Val::unknown());
          advance();
        }
        return;
      }
      case Opcode::CallInd: {
        const std::string site = site_str(a.fn, a.block, a.index);
        callind_seen_.insert(site);
        const Val target = read(m, ins.in[0]);
        if (target.k != K::FnPtr) {
          if (ins.out) write(m, *ins.out, Val::unknown());
          advance();
          return;
        }
        dispatched_.insert(site);
        if (!recording_) edges_.insert({f.id, target.s});
        note_handler(a, target.s);
        std::vector<Val> args;
        for (std::size_t k = 1; k < ins.in.size(); ++k) args.push_back(read(m, ins.in[k]));
        if (!enter(m, target.s, args)) {
          if (ins.out) write(m, *ins.out, Val::unknown());
          advance();
        }
        return;
      }
    }
  }

  // --- externals -------------------------------------------------------------------

  Origin origin_of(const Val& fd) const {
    if (fd.k == K::Fd) {
      switch (static_cast<FdKind>(fd.sub)) {
        case FdKind::Open:
          if (fd.s.empty()) return {"unresolved", "", 0};
          return {device_path(fd.s) ? "dev" : "non-dev-path", fd.s, 0};
        case FdKind::Pipe:
          return {"pipe", "", 0};
        case FdKind::Socket:
          return {"socket", "", 0};
      }
    }
    if (fd.k == K::Param && fd.act == 0) return {"param", "", root_};
    return {"unresolved", "", 0};
  }

  void fill_to_end(Mem& mem, std::int64_t off, Cell cell) {
    if (mem.end > off) set_cells(mem, off, mem.end - off, cell);
  }

  void external(Machine& m, const std::string& name, const std::vector<Val>& args, const ir::Instruction& ins) {
    auto& a = m.stack.back();
    const int here = a.id;
    auto arg = [&](std::size_t k) { return k < args.size() ? args[k] : Val::unknown(); };
    Val out;

    if (auto api = api_of(name); api && !recording_) {
      const auto site = site_str(a.fn, a.block, a.index);
      origins_[site].insert(origin_of(arg(static_cast<std::size_t>(api->fd))));
      apis_[site] = name;
      const Val buf = arg(static_cast<std::size_t>(api->buf));
      const Val len = api->len >= 0 ? arg(static_cast<std::size_t>(api->len)) : Val::unknown();
      if (api->solicited) solicited(m, site, name, buf, len, ins.in[static_cast<std::size_t>(api->buf)].size);
      else forward(m, site, buf, len);
    } else if (name == "open" || name == "__open_2" || name == "fopen") {
      std::string path;
      if (const Val p0 = arg(0); p0.k == K::Const)
        if (auto s = p_.c_string_at(static_cast<std::uint64_t>(p0.n))) path = *s;
      out = Val{K::Fd, 0, -1, path, static_cast<int>(FdKind::Open)};
    } else if (name == "pipe") {
      if (const Val p0 = arg(0); p0.k == K::Frame) {
        const Val fd{K::Fd, 0, -1, {}, static_cast<int>(FdKind::Pipe)};
        store(m, p0, fd, 4);
        store(m, shift(p0, 4, here), fd, 4);
      }
    } else if (name == "socket") {
      out = Val{K::Fd, 0, -1, {}, static_cast<int>(FdKind::Socket)};
    } else if (name == "strlen") {
      out = Val{K::Strlen, 0, -1, {}, 0};
    } else if (name == "memcpy" || name == "memmove" || name == "strncpy" || name == "memset") {
      copy_like(m, name, arg(0), arg(1), arg(2));
    } else {
      for (const auto& v : args) {
        if (v.k != K::Frame) continue;
        if (auto mit = m.mem.find(v.act); mit != m.mem.end()) fill_to_end(mit->second, v.n, {Cell::St::Dynamic, 0, 0});
      }
    }
    if (ins.out) write(m, *ins.out, out);
    ++m.stack.back().index;
  }

  void copy_like(Machine& m, const std::string& name, const Val& dst, const Val& src, const Val& n) {
    if (dst.k != K::Frame) return;
    auto mit = m.mem.find(dst.act);
    if (mit == m.mem.end()) return;
    auto& mem = mit->second;
    if (n.k != K::Const) {
      fill_to_end(mem, dst.n, {Cell::St::Dynamic, 0, 0});
      return;
    }
    const std::int64_t count = n.n;
    if (name == "memset") {
      if (src.k == K::Const) {
        set_cells(mem, dst.n, count, {Cell::St::Static, static_cast<std::uint8_t>(src.n), 0});
      } else {
        set_cells(mem, dst.n, count, {Cell::St::Dynamic, 0, 0});
      }
      return;
    }
    std::vector<Cell> cells;
    if (src.k == K::Frame && m.mem.contains(src.act)) {
      const auto& from = m.mem.at(src.act);
      for (std::int64_t k = 0; k < count; ++k) {
        auto c = from.cells.find(src.n + k);
        cells.push_back(c == from.cells.end() || c->second.st == Cell::St::Uninit ? Cell{Cell::St::Dynamic, 0, 0} : c->second);
      }
    } else if (src.k == K::Const) {
      const auto x = static_cast<std::uint64_t>(src.n);
      const auto* r = p_.region_at(x);
      if (r && count > 0 && r->contains(x + static_cast<std::uint64_t>(count) - 1)) {
        bool ended = false;
        for (std::int64_t k = 0; k < count; ++k) {
          std::uint8_t b = r->bytes[x - r->address + static_cast<std::uint64_t>(k)];
          if (name == "strncpy" && (ended || b == 0)) {
            ended = true;
            b = 0;
          }
          cells.push_back({Cell::St::Static, b, 0});
        }
      }
    }
    if (cells.empty()) {
      set_cells(mem, dst.n, count, {Cell::St::Dynamic, 0, 0});
      return;
    }
    set_cells(mem, dst.n, 0, {});
    for (std::int64_t k = 0; k < count; ++k) set_cells(mem, dst.n + k, 1, cells[static_cast<std::size_t>(k)]);
  }

  void solicited(Machine& m, const std::string& site, const std::string& api, const Val& buf, const Val& len,
                 std::uint32_t buf_size) {
    PathPayload pp;
    pp.api = api;
    if (len.k == K::Const) {
      pp.len = LenKind::Const;
      pp.amount = len.n;
    } else if (len.k == K::Strlen) {
      pp.len = LenKind::Strlen;
      pp.amount = len.n;
    }
    if (api == "ioctl") {
      if (buf.k != K::Const || buf.act != 0) return;
      for (std::uint32_t k = 0; k < buf_size; ++k) pp.bytes.emplace_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(buf.n) >> (8 * k)));
      pp.len = LenKind::Const;
      pp.amount = buf_size;
    } else if (buf.k == K::Frame && buf.act == 0) {
      const auto& mem = m.mem.at(0);
      std::int64_t count = 0;
      if (pp.len == LenKind::Const) {
        count = pp.amount;
      } else {
        for (const auto& [off, c] : mem.cells)
          if (off >= buf.n && c.st != Cell::St::Uninit) count = std::max(count, off - buf.n + 1);
      }
      for (std::int64_t k = 0; k < count; ++k) {
        auto c = mem.cells.find(buf.n + k);
        if (c != mem.cells.end() && c->second.st == Cell::St::Static) pp.bytes.emplace_back(c->second.v);
        else pp.bytes.emplace_back(std::nullopt);
      }
    } else if (buf.k == K::Const && buf.act == 0) {
      const auto x = static_cast<std::uint64_t>(buf.n);
      const auto* r = p_.region_at(x);
      if (!r) return;
      const auto avail = static_cast<std::int64_t>(r->address + r->bytes.size() - x);
      const auto count = pp.len == LenKind::Const ? pp.amount : avail;
      for (std::int64_t k = 0; k < count; ++k) {
        if (k < avail) pp.bytes.emplace_back(r->bytes[x - r->address + static_cast<std::uint64_t>(k)]);
        else pp.bytes.emplace_back(std::nullopt);
      }
    } else {
      return;
    }
    payloads_[{site, root_}].insert(std::move(pp));
  }

  void forward(Machine& m, const std::string& site, const Val& buf, const Val& len) {
    if (buf.k != K::Frame) return;
    auto mit = m.mem.find(buf.act);
    if (mit == m.mem.end()) return;
    auto [it, fresh] = source_index_.emplace(site, static_cast<int>(sources_.size()));
    if (fresh) sources_.push_back(site);
    const Cell cell{Cell::St::Tainted, 0, it->second};
    if (len.k == K::Const) set_cells(mit->second, buf.n, len.n, cell);
    else fill_to_end(mit->second, buf.n, cell);
  }

  // --- results ---------------------------------------------------------------------

  Result assemble() {
    Result r;
    r.paths = total_paths_;
    r.truncated = truncated_;
    r.virtual_edges = edges_;
    for (std::uint32_t fi = 0; fi < p_.functions.size(); ++fi) {
      const auto& f = p_.functions[fi];
      for (std::uint32_t b = 0; b < f.blocks.size(); ++b)
        for (std::uint32_t i = 0; i < f.blocks[b].ops.size(); ++i)
          if (f.blocks[b].ops[i].op == Opcode::CallInd && !dispatched_.contains(site_str(fi, b, i)))
            r.unresolved_sites.insert(site_str(fi, b, i));
    }

    std::set<std::string> has_callers;
    for (const auto& f : p_.functions)
      for (const auto& bb : f.blocks)
        for (const auto& ins : bb.ops)
          if (ins.op == Opcode::Call && ins.callee && !ins.callee->is_external()) has_callers.insert(ins.callee->name);
    for (const auto& [from, to] : edges_) has_callers.insert(to);

    std::map<std::string, std::string> channel;  // kept sites
    for (const auto& [site, raw] : origins_) {
      std::set<std::pair<std::string, std::string>> kinds;
      for (const auto& [kind, path, fn] : raw) {
        if (kind == "param") {
          if (has_callers.contains(p_.functions[fn].id)) continue;
          kinds.insert({"unresolved", ""});
        } else {
          kinds.insert({kind, path});
        }
      }
      if (kinds.empty()) kinds.insert({"unresolved", ""});
      const bool all_dev = std::all_of(kinds.begin(), kinds.end(), [](const auto& k) { return k.first == "dev"; });
      if (all_dev) {
        channel[site] = kinds.begin()->second;
        continue;
      }
      std::set<std::string> reasons;
      for (const auto& k : kinds) reasons.insert(k.first);
      if (reasons.size() > 1 || kinds.size() > 1) {
        r.discards.insert({site, "mixed", ""});
      } else {
        const auto& k = *kinds.begin();
        r.discards.insert({site, k.first, k.first == "non-dev-path" ? k.second : ""});
      }
    }

    for (const auto& [key, set] : payloads_) {
      const auto& [site, root] = key;
      auto ch = channel.find(site);
      if (ch == channel.end()) continue;
      const auto& root_name = p_.functions[root].name;
      std::vector<PathPayload> consts, strlens, others;
      for (const auto& pp : set) {
        if (pp.len == LenKind::Const) consts.push_back(pp);
        else if (pp.len == LenKind::Strlen) strlens.push_back(pp);
        else others.push_back(pp);
      }
      auto emit = [&](const PathPayload& pp, const std::string& length) {
        Command c;
        c.api = pp.api;
        c.site = site;
        c.root_function = root_name;
        c.payload = dump(pp.bytes);
        c.channel = ch->second;
        c.length = length;
        r.commands.insert(std::move(c));
      };
      if (!consts.empty() && !strlens.empty()) {
        // One path clamps the strlen-derived length to a constant.
        const auto longest = *std::max_element(consts.begin(), consts.end(),
                                               [](const auto& x, const auto& y) { return x.amount < y.amount; });
        emit(longest, "strlen-bounded(" + std::to_string(longest.amount - strlens.front().amount) + ")");
        continue;
      }
      for (const auto& pp : consts) emit(pp, "constant-arg");
      for (const auto& pp : strlens) emit(pp, "unknown");
      for (const auto& pp : others) emit(pp, "unknown");
    }

    for (std::size_t k = 0; k < sinks_.size(); ++k) {
      const auto& s = sinks_[k];
      const auto& read_site = sources_[static_cast<std::size_t>(s.src)];
      auto ch = channel.find(read_site);
      if (ch == channel.end()) continue;
      Command c;
      c.solicited = false;
      c.api = apis_[read_site];
      c.site = read_site;
      c.root_function = s.function;
      std::vector<std::optional<std::uint8_t>> bytes;
      for (std::uint32_t b = 0; b < s.size; ++b) bytes.emplace_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(s.constant) >> (8 * b)));
      c.payload = dump(bytes);
      c.channel = ch->second;
      c.handler = handlers_[k];
      r.commands.insert(std::move(c));
    }
    return r;
  }

  static std::string dump(const std::vector<std::optional<std::uint8_t>>& bytes) {
    std::string out;
    for (std::size_t k = 0; k < bytes.size(); ++k) {
      if (k) out.push_back(' ');
      out += bytes[k] ? hex2(*bytes[k]) : "..";
    }
    return out;
  }

  const ir::Program& p_;
  Options opt_;
  std::uint32_t root_ = 0;
  bool recording_ = false;
  bool truncated_ = false;
  std::size_t total_paths_ = 0;

  std::map<std::string, std::map<std::int64_t, std::vector<Val>>> layouts_;
  std::set<std::string> building_;
  std::map<std::int64_t, std::vector<Val>> stores_;

  std::set<std::pair<std::string, std::string>> edges_;
  std::set<std::string> callind_seen_;
  std::set<std::string> dispatched_;
  std::map<std::string, std::set<Origin>> origins_;
  std::map<std::string, std::string> apis_;
  std::map<std::pair<std::string, std::uint32_t>, std::set<PathPayload>> payloads_;
  std::map<std::string, int> source_index_;
  std::vector<std::string> sources_;
  std::map<SinkInfo, std::size_t> sink_index_;
  std::vector<SinkInfo> sinks_;
  std::vector<std::optional<std::string>> handlers_;
};

}  // namespace

Result analyze(const ir::Program& p, const Options& options) { return Explorer(p, options).run(); }

forge::Manifest to_manifest(const Result& r, const forge::Manifest& like) {
  forge::Manifest m;
  m.program = like.program;
  m.generator = like.generator;
  m.seed = like.seed;
  m.params = like.params;
  for (const auto& [caller, callee] : r.virtual_edges) m.virtual_edges.push_back({caller, callee});
  for (const auto& s : r.unresolved_sites) m.unresolved.push_back({s, ""});
  for (const auto& c : r.commands) {
    forge::ExpectedCommand e;
    e.direction = c.solicited ? cmd::Direction::Solicited : cmd::Direction::Unsolicited;
    e.api = c.api;
    e.root_function = c.root_function;
    e.payload = c.payload;
    e.channel = c.channel;
    e.length_source = c.length;
    e.handler = c.handler;
    m.commands.push_back(std::move(e));
  }
  for (const auto& d : r.discards) m.discards.push_back({d.site, d.reason, d.path});
  m.normalize();
  return m;
}

}  // namespace rilmine::oracle
