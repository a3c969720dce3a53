// SPDX-License-Identifier: Apache-2.0
#include "rilmine/taint.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "rilmine/dataflow.hpp"
#include "rilmine/util.hpp"

namespace rilmine::taint {

using ir::Opcode;

namespace {

constexpr int kLocalDepth = 64;

std::uint32_t u32(std::int32_t v) { return static_cast<std::uint32_t>(v); }
std::uint32_t u32(std::size_t v) { return static_cast<std::uint32_t>(v); }

/// Argument `k` of the call at `s`, skipping the CALLIND target operand.
std::optional<ir::Varnode> call_arg(const ir::Program& p, const ir::Site& s, std::size_t k) {
  const auto& ins = ir::instruction_at(p, s);
  const std::size_t idx = k + (ins.op == Opcode::CallInd ? 1 : 0);
  if (idx >= ins.in.size()) return std::nullopt;
  return ins.in[idx];
}

std::string ext_name(const ir::Instruction& ins) {
  return ins.op == Opcode::Call && ins.callee && ins.callee->is_external() ? ins.callee->name : std::string{};
}

// ---------------------------------------------------------------------------
// Length classification along a fixed call path.

struct LengthAtoms {
  std::set<std::int64_t> constants;
  bool strlen = false;
  bool other = false;
};

class LengthWalker {
 public:
  LengthWalker(const ir::Program& p, dfa::ProgramFacts& facts, const std::vector<ir::Site>& path)
      : p_(p), facts_(facts), path_(path) {}

  std::optional<std::int64_t> exact(std::uint32_t fn, std::uint32_t b, std::uint32_t i, const ir::Varnode& v,
                                    int pos) {
    const auto& f = facts_.of(fn);
    if (auto c = f.constant_value(b, i, v)) return c;
    if (auto k = f.entry_param(b, i, v); k && pos >= 0) {
      const auto& s = path_[static_cast<std::size_t>(pos)];
      if (auto arg = call_arg(p_, s, *k)) return exact(s.function, s.block, s.index, *arg, pos - 1);
    }
    return std::nullopt;
  }

  void atoms(std::uint32_t fn, std::uint32_t b, std::uint32_t i, const ir::Varnode& v, int pos, int depth,
             LengthAtoms& out) {
    if (depth > kLocalDepth) {
      out.other = true;
      return;
    }
    if (v.is_const()) {
      out.constants.insert(v.offset);
      return;
    }
    const auto& f = facts_.of(fn);
    if (auto k = f.entry_param(b, i, v)) {
      if (pos < 0) {
        out.other = true;
        return;
      }
      const auto& s = path_[static_cast<std::size_t>(pos)];
      if (auto arg = call_arg(p_, s, *k)) atoms(s.function, s.block, s.index, *arg, pos - 1, depth + 1, out);
      else out.other = true;
      return;
    }
    for (const auto& d : f.reaching(b, i, v)) {
      if (d.is_entry()) {
        out.other = true;
        continue;
      }
      def_atoms(fn, d, pos, depth + 1, out);
    }
  }

 private:
  void def_atoms(std::uint32_t fn, dfa::DefLoc d, int pos, int depth, LengthAtoms& out) {
    const auto& f = facts_.of(fn);
    const auto& ins = f.at(d);
    const auto b = u32(d.block), i = u32(d.index);
    switch (ins.op) {
      case Opcode::Copy:
        atoms(fn, b, i, ins.in[0], pos, depth, out);
        return;
      case Opcode::Store:
        atoms(fn, b, i, ins.in[1], pos, depth, out);
        return;
      case Opcode::IntAdd:
        if (ins.in[1].is_const()) atoms(fn, b, i, ins.in[0], pos, depth, out);
        else if (ins.in[0].is_const()) atoms(fn, b, i, ins.in[1], pos, depth, out);
        else out.other = true;
        return;
      case Opcode::Call:
        if (ext_name(ins) == "strlen") out.strlen = true;
        else out.other = true;
        return;
      case Opcode::Load:
        if (auto slot = f.stack_use(b, i)) {
          for (const auto& sd : f.reaching_key(b, i, *slot)) {
            if (sd.is_entry()) out.other = true;
            else def_atoms(fn, sd, pos, depth + 1, out);
          }
          return;
        }
        out.other = true;
        return;
      default:
        out.other = true;
        return;
    }
  }

  const ir::Program& p_;
  dfa::ProgramFacts& facts_;
  const std::vector<ir::Site>& path_;
};

LengthSource classify_length(LengthWalker& w, std::uint32_t fn, std::uint32_t b, std::uint32_t i,
                             const ir::Varnode& v, int pos) {
  if (auto c = w.exact(fn, b, i, v, pos)) return {LengthSource::Kind::ConstantArg, *c};
  LengthAtoms atoms;
  w.atoms(fn, b, i, v, pos, 0, atoms);
  if (!atoms.other && atoms.strlen && atoms.constants.size() == 1)
    return {LengthSource::Kind::StrlenBounded, *atoms.constants.begin()};
  return {};
}

// ---------------------------------------------------------------------------
// Backward traversal.

class Backward {
 public:
  Backward(const ir::Program& p, const cg::CallGraph& g, const TaintQuery& q, const TaintOptions& opt)
      : p_(p), g_(g), q_(q), opt_(opt), facts_(p), api_(find_api(q.api)) {}

  std::vector<TaintTrace> run() {
    if (!api_) return {incomplete({}, "unknown-api")};
    const auto arg = call_arg(p_, q_.site, static_cast<std::size_t>(api_->buffer_arg));
    if (!arg) return {incomplete({}, "missing-argument")};
    Path start;
    start.on_path.insert(q_.site.function);
    resolve(q_.site.function, q_.site.block, q_.site.index, *arg, start, 0);
    if (out_.empty()) out_.push_back(incomplete({}, "no-terminator"));
    for (auto& t : out_) {
      if (t.complete) t.length = length_for(t);
    }
    return std::move(out_);
  }

 private:
  struct Path {
    std::vector<ir::Site> call_path;
    std::vector<Step> steps;
    std::set<std::uint32_t> on_path;
    int depth = 0;
  };

  TaintTrace incomplete(const Path& path, std::string reason) const {
    TaintTrace t;
    t.query = q_;
    t.steps = path.steps;
    t.call_path = path.call_path;
    t.root = path.call_path.empty() ? p_.functions[q_.site.function].id
                                    : p_.functions[path.call_path.front().function].id;
    t.incomplete_reason = std::move(reason);
    return t;
  }

  void terminate(std::uint32_t fn, const ir::Site& at, const Path& path, Terminator::Kind kind, std::int64_t value,
                 std::uint32_t size) {
    TaintTrace t;
    t.query = q_;
    t.steps = path.steps;
    t.root = p_.functions[fn].id;
    t.complete = true;
    t.terminator = Terminator{kind, at, value, size};
    t.call_path = path.call_path;
    out_.push_back(std::move(t));
  }

  void resolve(std::uint32_t fn, std::uint32_t b, std::uint32_t i, const ir::Varnode& v, Path path, int local) {
    const ir::Site here{fn, b, i};
    path.steps.push_back({p_.functions[fn].id, here, v});
    if (local > kLocalDepth) {
      out_.push_back(incomplete(path, "no-terminator"));
      return;
    }
    const bool word = api_->name == "ioctl";
    const auto& f = facts_.of(fn);
    if (!word) {
      if (auto off = f.frame_offset(b, i, v)) {
        terminate(fn, here, path, Terminator::Kind::StackBuffer, *off, v.size);
        return;
      }
    }
    if (auto c = f.constant_value(b, i, v)) {
      if (word) {
        terminate(fn, here, path, Terminator::Kind::ConstantWord, *c, v.size);
      } else if (c >= 0 && p_.region_at(static_cast<std::uint64_t>(*c))) {
        terminate(fn, here, path, Terminator::Kind::GlobalBuffer, *c, v.size);
      } else {
        out_.push_back(incomplete(path, "no-terminator"));
      }
      return;
    }
    if (auto k = f.entry_param(b, i, v)) {
      if (path.depth + 1 > opt_.max_depth) {
        out_.push_back(incomplete(path, "depth-exceeded"));
        return;
      }
      const auto callers = g_.callers_of(p_.functions[fn].id);
      if (callers.empty()) {
        out_.push_back(incomplete(path, "no-callers"));
        return;
      }
      for (const auto* e : callers) {
        const auto caller = e->site.function;
        if (path.on_path.contains(caller)) continue;
        auto arg = call_arg(p_, e->site, *k);
        if (!arg) continue;
        Path next = path;
        next.call_path.insert(next.call_path.begin(), e->site);
        next.on_path.insert(caller);
        next.depth += 1;
        resolve(caller, e->site.block, e->site.index, *arg, std::move(next), local + 1);
      }
      return;
    }
    if (v.is_const()) {
      out_.push_back(incomplete(path, "no-terminator"));
      return;
    }
    for (const auto& d : f.reaching(b, i, v)) {
      if (d.is_entry()) {
        out_.push_back(incomplete(path, "no-terminator"));
        continue;
      }
      def(fn, d, path, local + 1);
    }
  }

  void def(std::uint32_t fn, dfa::DefLoc d, const Path& path, int local) {
    const auto& f = facts_.of(fn);
    const auto& ins = f.at(d);
    const auto b = u32(d.block), i = u32(d.index);
    switch (ins.op) {
      case Opcode::Copy:
        resolve(fn, b, i, ins.in[0], path, local);
        return;
      case Opcode::Store:
        resolve(fn, b, i, ins.in[1], path, local);
        return;
      case Opcode::Load:
        if (auto slot = f.stack_use(b, i)) {
          for (const auto& sd : f.reaching_key(b, i, *slot)) {
            if (sd.is_entry()) out_.push_back(incomplete(path, "no-terminator"));
            else def(fn, sd, path, local + 1);
          }
          return;
        }
        [[fallthrough]];
      default:
        out_.push_back(incomplete(path, "no-terminator"));
        return;
    }
  }

  LengthSource length_for(const TaintTrace& t) {
    if (api_->length_arg < 0) {
      return {LengthSource::Kind::ConstantArg, static_cast<std::int64_t>(t.terminator->size)};
    }
    auto len = call_arg(p_, q_.site, static_cast<std::size_t>(api_->length_arg));
    if (!len) return {};
    LengthWalker w(p_, facts_, t.call_path);
    return classify_length(w, q_.site.function, q_.site.block, q_.site.index, *len,
                           static_cast<int>(t.call_path.size()) - 1);
  }

  const ir::Program& p_;
  const cg::CallGraph& g_;
  const TaintQuery& q_;
  const TaintOptions& opt_;
  dfa::ProgramFacts facts_;
  const ApiSpec* api_;
  std::vector<TaintTrace> out_;
};

// ---------------------------------------------------------------------------
// Forward propagation.

using TaintBits = std::uint8_t;
constexpr TaintBits kPtr = 1;
constexpr TaintBits kVal = 2;

class Forward {
 public:
  Forward(const ir::Program& p, const cg::CallGraph& g, const TaintQuery& q, const TaintOptions& opt)
      : p_(p), g_(g), q_(q), opt_(opt), facts_(p) {}

  TaintTrace run() {
    TaintTrace t;
    t.query = q_;
    const auto* api = find_api(q_.api);
    const auto reader = q_.site.function;
    t.root = p_.functions[reader].id;
    if (!api) {
      t.incomplete_reason = "unknown-api";
      return t;
    }
    auto& st = states_[reader];
    const auto& f = facts_.of(reader);
    auto buf = call_arg(p_, q_.site, static_cast<std::size_t>(api->buffer_arg));
    if (!buf) {
      t.incomplete_reason = "missing-argument";
      return t;
    }
    const auto& site = q_.site;
    if (auto off = f.frame_offset(site.block, site.index, *buf)) {
      std::int64_t hi = p_.functions[reader].stack_size;
      if (api->length_arg >= 0) {
        if (auto len = call_arg(p_, site, static_cast<std::size_t>(api->length_arg))) {
          if (auto n = f.constant_value(site.block, site.index, *len)) hi = *off + *n;
        }
      }
      st.ranges.emplace_back(*off, hi);
    } else if (!buf->is_const()) {
      st.vars[dfa::key_of(*buf)] |= kPtr;
    }
    steps_.push_back({p_.functions[reader].id, site, *buf});
    analyze(reader, {}, 0);
    for (auto& [s, sink] : sinks_) t.sinks.push_back(sink);
    if (!t.sinks.empty()) t.root = p_.functions[t.sinks.front().site.function].id;
    t.steps = std::move(steps_);
    t.complete = !depth_exceeded_;
    if (depth_exceeded_) t.incomplete_reason = "depth-exceeded";
    return t;
  }

 private:
  struct FnState {
    std::map<dfa::Key, TaintBits> vars;
    std::map<std::int64_t, TaintBits> slots;
    std::vector<std::pair<std::int64_t, std::int64_t>> ranges;  // tainted stack bytes [lo, hi)
    std::vector<TaintBits> entry;
    TaintBits ret = 0;
    bool analyzed = false;
    bool dirty = false;  // entry grew while the function was being analyzed
  };

  static bool join(TaintBits& dst, TaintBits src) {
    const TaintBits before = dst;
    dst |= src;
    return dst != before;
  }

  bool in_ranges(const FnState& st, std::int64_t off) const {
    return std::any_of(st.ranges.begin(), st.ranges.end(),
                       [&](const auto& r) { return off >= r.first && off < r.second; });
  }

  TaintBits taint_of(const FnState& st, const dfa::FunctionFacts& f, std::uint32_t b, std::uint32_t i,
                     const ir::Varnode& v) const {
    if (v.is_const()) return 0;
    TaintBits t = 0;
    if (auto off = f.frame_offset(b, i, v)) {
      if (in_ranges(st, *off)) t |= kPtr;
    }
    if (v.space == ir::Space::Stack) {
      if (auto it = st.slots.find(v.offset); it != st.slots.end()) t |= it->second;
      if (in_ranges(st, v.offset)) t |= kVal;
      return t;
    }
    if (auto it = st.vars.find(dfa::key_of(v)); it != st.vars.end()) t |= it->second;
    return t;
  }

  bool set_out(FnState& st, const ir::Varnode& out, TaintBits t) {
    if (!t) return false;
    if (out.space == ir::Space::Stack) return join(st.slots[out.offset], t);
    return join(st.vars[dfa::key_of(out)], t);
  }

  TaintBits call_into(std::uint32_t callee, const std::vector<TaintBits>& args, int depth) {
    if (std::none_of(args.begin(), args.end(), [](TaintBits t) { return t != 0; })) {
      return states_.contains(callee) ? states_[callee].ret : 0;
    }
    return analyze(callee, args, depth + 1);
  }

  TaintBits analyze(std::uint32_t fn, const std::vector<TaintBits>& entry, int depth) {
    if (depth > opt_.max_depth) {
      depth_exceeded_ = true;
      return 0;
    }
    auto& st = states_[fn];
    const auto& func = p_.functions[fn];
    bool grew = !st.analyzed;
    if (st.entry.size() < func.params.size()) st.entry.resize(func.params.size(), 0);
    for (std::size_t k = 0; k < entry.size() && k < st.entry.size(); ++k) grew |= join(st.entry[k], entry[k]);
    if (!grew) return st.ret;
    for (std::size_t k = 0; k < st.entry.size(); ++k) {
      if (!st.entry[k]) continue;
      const auto reg = ir::param_register(k, p_.word_size);
      if (join(st.vars[dfa::key_of(reg)], st.entry[k])) steps_.push_back({func.id, {fn, 0, 0}, reg});
    }
    if (active_.contains(fn)) {
      st.dirty = true;
      return st.ret;
    }
    st.analyzed = true;
    active_.insert(fn);
    const auto& f = facts_.of(fn);
    bool changed = true;
    while (changed) {
      changed = st.dirty;
      st.dirty = false;
      for (std::uint32_t b = 0; b < func.blocks.size(); ++b) {
        for (std::uint32_t i = 0; i < func.blocks[b].ops.size(); ++i) {
          changed |= step(fn, st, f, b, i, depth);
        }
      }
    }
    active_.erase(fn);
    return st.ret;
  }

  bool step(std::uint32_t fn, FnState& st, const dfa::FunctionFacts& f, std::uint32_t b, std::uint32_t i,
            int depth) {
    const auto& ins = p_.functions[fn].blocks[b].ops[i];
    auto t = [&](const ir::Varnode& v) { return taint_of(st, f, b, i, v); };
    switch (ins.op) {
      case Opcode::Copy:
        return ins.out && set_out(st, *ins.out, t(ins.in[0]));
      case Opcode::IntAdd:
      case Opcode::IntSub:
        return ins.out && set_out(st, *ins.out, t(ins.in[0]) | t(ins.in[1]));
      case Opcode::Load: {
        TaintBits r = 0;
        if (t(ins.in[0]) & kPtr) r |= kVal;
        if (auto off = f.frame_offset(b, i, ins.in[0])) {
          if (in_ranges(st, *off)) r |= kVal;
          if (auto it = st.slots.find(*off); it != st.slots.end()) r |= it->second;
        }
        return ins.out && set_out(st, *ins.out, r);
      }
      case Opcode::Store: {
        const auto off = f.frame_offset(b, i, ins.in[0]);
        const auto tv = t(ins.in[1]);
        return off && tv && join(st.slots[*off], tv);
      }
      case Opcode::IntEqual:
      case Opcode::IntNotEqual: {
        const ir::Site site{fn, b, i};
        if (sinks_.contains(site)) return false;
        for (int k = 0; k < 2; ++k) {
          if ((t(ins.in[k]) & kVal) && ins.in[1 - k].is_const()) {
            sinks_[site] = make_sink(f, site, ins, ins.in[1 - k]);
            steps_.push_back({p_.functions[fn].id, site, ins.in[k]});
            return false;
          }
        }
        return false;
      }
      case Opcode::Return:
        if (!ins.in.empty()) return join(st.ret, t(ins.in[0]));
        return false;
      case Opcode::Call:
      case Opcode::CallInd:
        return call(fn, st, f, b, i, depth);
      default:
        return false;
    }
  }

  bool call(std::uint32_t fn, FnState& st, const dfa::FunctionFacts& f, std::uint32_t b, std::uint32_t i,
            int depth) {
    const auto& ins = p_.functions[fn].blocks[b].ops[i];
    const ir::Site site{fn, b, i};
    const std::size_t first = ins.op == Opcode::CallInd ? 1 : 0;
    auto t = [&](const ir::Varnode& v) { return taint_of(st, f, b, i, v); };
    if (ins.op == Opcode::Call && ins.callee && ins.callee->is_external()) {
      const auto& name = ins.callee->name;
      if ((name == "memcpy" || name == "memmove" || name == "strncpy") && ins.in.size() >= 3) {
        const bool src_tainted = (t(ins.in[1]) & kPtr) != 0;
        auto doff = f.frame_offset(b, i, ins.in[0]);
        if (!src_tainted || !doff) return false;
        std::int64_t hi = p_.functions[fn].stack_size;
        if (auto n = f.constant_value(b, i, ins.in[2])) hi = *doff + *n;
        for (const auto& r : st.ranges) {
          if (r.first == *doff && r.second == hi) return false;
        }
        st.ranges.emplace_back(*doff, hi);
        return true;
      }
      return false;
    }
    std::vector<TaintBits> args;
    for (std::size_t k = first; k < ins.in.size(); ++k) args.push_back(t(ins.in[k]));
    TaintBits ret = 0;
    if (ins.op == Opcode::Call && ins.callee) {
      if (auto callee = p_.function_index(ins.callee->name)) ret |= call_into(u32(*callee), args, depth);
    } else {
      for (const auto* e : g_.edges_at(site)) {
        if (e->external) continue;
        if (auto callee = p_.function_index(e->callee)) ret |= call_into(u32(*callee), args, depth);
      }
    }
    return ins.out && set_out(st, *ins.out, ret);
  }

  Sink make_sink(const dfa::FunctionFacts& f, const ir::Site& site, const ir::Instruction& cmp,
                 const ir::Varnode& constant) const {
    Sink s;
    s.site = site;
    s.op = cmp.op;
    s.constant = constant.offset;
    s.size = constant.size;
    const auto& func = p_.functions[site.function];
    const auto& block = func.blocks[site.block];
    if (!cmp.out) return s;
    for (std::uint32_t j = site.index + 1; j < block.ops.size(); ++j) {
      const auto& br = block.ops[j];
      if (br.op != Opcode::CBranch || br.in.size() < 2) continue;
      const auto defs = f.reaching(site.block, j, br.in[1]);
      if (defs.size() != 1 || defs.front() != dfa::DefLoc{static_cast<std::int32_t>(site.block),
                                                          static_cast<std::int32_t>(site.index)})
        continue;
      std::optional<int> guarded;
      const int taken = static_cast<int>(br.in[0].offset);
      if (cmp.op == Opcode::IntEqual) {
        guarded = taken;
      } else {
        for (int succ : block.successors) {
          if (succ != taken) {
            guarded = succ;
            break;
          }
        }
      }
      if (!guarded) break;
      auto gi = func.block_index(*guarded);
      if (!gi) break;
      const auto& gb = func.blocks[*gi];
      for (std::uint32_t k = 0; k < gb.ops.size(); ++k) {
        const auto& c = gb.ops[k];
        if (c.op == Opcode::Call && c.callee) {
          s.handler = c.callee->name;
          break;
        }
        if (c.op == Opcode::CallInd) {
          const auto edges = g_.edges_at({site.function, u32(*gi), k});
          if (!edges.empty()) s.handler = edges.front()->callee;
          break;
        }
      }
      break;
    }
    return s;
  }

  const ir::Program& p_;
  const cg::CallGraph& g_;
  const TaintQuery& q_;
  const TaintOptions& opt_;
  dfa::ProgramFacts facts_;
  std::map<std::uint32_t, FnState> states_;
  std::set<std::uint32_t> active_;
  std::map<ir::Site, Sink> sinks_;
  std::vector<Step> steps_;
  bool depth_exceeded_ = false;
};

// ---------------------------------------------------------------------------
// Stack emulation.

struct ByteCell {
  enum class State : std::uint8_t { Uninit, Static, Dynamic };
  State state = State::Uninit;
  std::uint8_t value = 0;
};

class FrameEmulator {
 public:
  FrameEmulator(const ir::Program& p, const dfa::FunctionFacts& f, std::int64_t base,
                std::optional<std::int64_t> length)
      : p_(p), f_(f), base_(base), length_(length) {}

  void run(const ir::Site& exit) {
    const auto& func = f_.function();
    for (std::uint32_t b = 0; b < func.blocks.size(); ++b) {
      for (std::uint32_t i = 0; i < func.blocks[b].ops.size(); ++i) {
        if (b == exit.block && i == exit.index) return;
        step(b, i);
      }
    }
  }

  std::map<std::int64_t, ByteCell> cells;
  std::optional<std::int64_t> bounded_copy;
  std::vector<std::string> diagnostics;

 private:
  std::int64_t payload_end() const {
    return length_ ? base_ + *length_ : std::max<std::int64_t>(f_.function().stack_size, base_);
  }

  void set_static(std::int64_t off, std::uint64_t value, std::uint32_t size) {
    for (std::uint32_t k = 0; k < size; ++k) cells[off + k] = {ByteCell::State::Static, static_cast<std::uint8_t>(value >> (8 * k))};
  }
  void set_dynamic(std::int64_t off, std::int64_t count) {
    for (std::int64_t k = 0; k < count; ++k) cells[off + k] = {ByteCell::State::Dynamic, 0};
  }
  void dynamic_to_end(std::int64_t off, const std::string& why) {
    const auto end = payload_end();
    if (!length_) diagnostics.push_back(why + ": extent unknown, marked to frame end");
    if (end > off) set_dynamic(off, end - off);
  }

  void step(std::uint32_t b, std::uint32_t i) {
    const auto& ins = f_.function().blocks[b].ops[i];
    switch (ins.op) {
      case Opcode::Store: {
        auto off = f_.frame_offset(b, i, ins.in[0]);
        if (!off) return;
        if (auto c = f_.constant_value(b, i, ins.in[1])) set_static(*off, static_cast<std::uint64_t>(*c), ins.in[1].size);
        else set_dynamic(*off, ins.in[1].size);
        return;
      }
      case Opcode::Call:
      case Opcode::CallInd:
        call(b, i, ins);
        break;
      default:
        break;
    }
    if (ins.out && ins.out->space == ir::Space::Stack) {
      std::optional<std::int64_t> c;
      if (ins.op == Opcode::Copy) c = f_.constant_value(b, i, ins.in[0]);
      if (c) set_static(ins.out->offset, static_cast<std::uint64_t>(*c), ins.out->size);
      else set_dynamic(ins.out->offset, ins.out->size);
    }
  }

  void call(std::uint32_t b, std::uint32_t i, const ir::Instruction& ins) {
    const auto name = ext_name(ins);
    if ((name == "memcpy" || name == "memmove" || name == "strncpy" || name == "memset") && ins.in.size() >= 3) {
      auto dst = f_.frame_offset(b, i, ins.in[0]);
      if (!dst) return;
      auto n = f_.constant_value(b, i, ins.in[2]);
      if (!n) {
        LengthWalker w(p_, dummy_facts(), no_path_);
        LengthAtoms atoms;
        w.atoms(f_.function_index(), b, i, ins.in[2], -1, 0, atoms);
        if (!atoms.other && atoms.strlen && atoms.constants.size() == 1) {
          const auto m = *atoms.constants.begin();
          set_dynamic(*dst, m);
          bounded_copy = m;
        } else {
          dynamic_to_end(*dst, name + " with unresolved length");
        }
        return;
      }
      if (name == "memset") {
        if (auto c = f_.constant_value(b, i, ins.in[1])) {
          for (std::int64_t k = 0; k < *n; ++k) cells[*dst + k] = {ByteCell::State::Static, static_cast<std::uint8_t>(*c)};
        } else {
          set_dynamic(*dst, *n);
        }
        return;
      }
      if (auto soff = f_.frame_offset(b, i, ins.in[1])) {
        std::vector<ByteCell> copy;
        for (std::int64_t k = 0; k < *n; ++k) {
          auto it = cells.find(*soff + k);
          copy.push_back(it == cells.end() || it->second.state == ByteCell::State::Uninit
                             ? ByteCell{ByteCell::State::Dynamic, 0}
                             : it->second);
        }
        for (std::int64_t k = 0; k < *n; ++k) cells[*dst + k] = copy[static_cast<std::size_t>(k)];
        return;
      }
      if (auto addr = f_.constant_value(b, i, ins.in[1]); addr && *addr >= 0) {
        const auto* region = p_.region_at(static_cast<std::uint64_t>(*addr));
        if (region && region->contains(static_cast<std::uint64_t>(*addr + *n - 1))) {
          bool ended = false;
          for (std::int64_t k = 0; k < *n; ++k) {
            std::uint8_t v = region->bytes[static_cast<std::size_t>(*addr + k - static_cast<std::int64_t>(region->address))];
            if (name == "strncpy" && (ended || v == 0)) {
              ended = true;
              v = 0;
            }
            cells[*dst + k] = {ByteCell::State::Static, v};
          }
          return;
        }
      }
      set_dynamic(*dst, *n);
      return;
    }
    // Any other callee handed a pointer into the payload fills it at run time.
    const std::size_t first = ins.op == Opcode::CallInd ? 1 : 0;
    for (std::size_t k = first; k < ins.in.size(); ++k) {
      auto off = f_.frame_offset(b, i, ins.in[k]);
      if (off && *off >= base_ && *off < payload_end()) {
        dynamic_to_end(*off, "call filling the payload");
        return;
      }
    }
  }

  dfa::ProgramFacts& dummy_facts() {
    if (!facts_) facts_.emplace(p_);
    return *facts_;
  }

  const ir::Program& p_;
  const dfa::FunctionFacts& f_;
  std::int64_t base_;
  std::optional<std::int64_t> length_;
  std::optional<dfa::ProgramFacts> facts_;
  const std::vector<ir::Site> no_path_;
};

}  // namespace

const std::vector<ApiSpec>& source_apis() {
  static const std::vector<ApiSpec> apis = {
      {"write", {0, 1, 2}, Direction::Backward, 0, 1, 2},
      {"__write_chk", {0, 1, 2}, Direction::Backward, 0, 1, 2},
      {"ioctl", {1}, Direction::Backward, 0, 1, -1},
      {"sendto", {1, 2}, Direction::Backward, 0, 1, 2},
      {"read", {0, 1, 2}, Direction::Forward, 0, 1, 2},
      {"__read_chk", {0, 1, 2}, Direction::Forward, 0, 1, 2},
  };
  return apis;
}

const ApiSpec* find_api(std::string_view name) {
  for (const auto& a : source_apis()) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

std::string canonical_api(std::string_view name) {
  if (name == "__write_chk") return "write";
  if (name == "__read_chk") return "read";
  return std::string(name);
}

std::vector<TaintQuery> find_sources(const ir::Program& p, std::optional<Direction> direction) {
  std::vector<TaintQuery> out;
  for (std::uint32_t fi = 0; fi < p.functions.size(); ++fi) {
    const auto& f = p.functions[fi];
    for (std::uint32_t b = 0; b < f.blocks.size(); ++b) {
      for (std::uint32_t i = 0; i < f.blocks[b].ops.size(); ++i) {
        const auto* api = find_api(ext_name(f.blocks[b].ops[i]));
        if (!api || (direction && api->direction != *direction)) continue;
        out.push_back({{fi, b, i}, api->name, api->tainted_args, api->direction});
      }
    }
  }
  return out;
}

std::string to_string(const LengthSource& l) {
  switch (l.kind) {
    case LengthSource::Kind::ConstantArg:
      return "constant-arg";
    case LengthSource::Kind::StrlenBounded:
      return "strlen-bounded(" + std::to_string(l.value) + ")";
    case LengthSource::Kind::Unknown:
      return "unknown";
  }
  return "unknown";
}

std::vector<TaintTrace> backward_taint(const ir::Program& p, const cg::CallGraph& cg, const TaintQuery& q,
                                       const TaintOptions& options) {
  return Backward(p, cg, q, options).run();
}

TaintTrace forward_taint(const ir::Program& p, const cg::CallGraph& cg, const TaintQuery& q,
                         const TaintOptions& options) {
  return Forward(p, cg, q, options).run();
}

std::size_t PayloadBytes::dynamic_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), Mask::Dynamic));
}

std::string dump(const PayloadBytes& payload) {
  std::string out;
  for (std::size_t k = 0; k < payload.bytes.size(); ++k) {
    if (k) out.push_back(' ');
    out += payload.mask[k] == PayloadBytes::Mask::Dynamic ? ".." : util::hex_byte(payload.bytes[k]);
  }
  return out;
}

std::optional<PayloadBytes> parse_payload_dump(std::string_view text) {
  PayloadBytes out;
  std::istringstream is{std::string(text)};
  std::string tok;
  while (is >> tok) {
    if (tok == "..") {
      out.bytes.push_back(0);
      out.mask.push_back(PayloadBytes::Mask::Dynamic);
      continue;
    }
    auto b = util::parse_hex(tok);
    if (!b || b->size() != 1) return std::nullopt;
    out.bytes.push_back((*b)[0]);
    out.mask.push_back(PayloadBytes::Mask::Static);
  }
  return out;
}

Concretized concretize_payload(const ir::Program& p, const TaintTrace& trace) {
  Concretized out;
  if (!trace.complete || !trace.terminator) {
    out.diagnostics.push_back("trace incomplete");
    return out;
  }
  const auto& term = *trace.terminator;
  auto& pay = out.payload;
  pay.length = trace.length;
  const bool const_len = trace.length.kind == LengthSource::Kind::ConstantArg;
  auto push = [&](std::uint8_t v, bool dynamic) {
    pay.bytes.push_back(dynamic ? 0 : v);
    pay.mask.push_back(dynamic ? PayloadBytes::Mask::Dynamic : PayloadBytes::Mask::Static);
  };

  switch (term.kind) {
    case Terminator::Kind::ConstantWord:
      for (std::uint32_t k = 0; k < term.size; ++k) push(static_cast<std::uint8_t>(static_cast<std::uint64_t>(term.value) >> (8 * k)), false);
      pay.length = {LengthSource::Kind::ConstantArg, static_cast<std::int64_t>(term.size)};
      return out;
    case Terminator::Kind::GlobalBuffer: {
      const auto addr = static_cast<std::uint64_t>(term.value);
      const auto* region = p.region_at(addr);
      const std::uint64_t avail = region->address + region->bytes.size() - addr;
      const std::uint64_t n = const_len ? static_cast<std::uint64_t>(trace.length.value) : avail;
      for (std::uint64_t k = 0; k < n; ++k) {
        if (k < avail) push(region->bytes[addr - region->address + k], false);
        else push(0, true);
      }
      if (n > avail) out.diagnostics.push_back("global payload runs past its data region");
      return out;
    }
    case Terminator::Kind::StackBuffer:
      break;
  }

  const auto root = static_cast<std::uint32_t>(*p.function_index(trace.root));
  const dfa::FunctionFacts facts(p, root);
  const ir::Site exit = trace.call_path.empty() ? trace.query.site : trace.call_path.front();
  std::optional<std::int64_t> length;
  if (const_len) length = trace.length.value;
  FrameEmulator emu(p, facts, term.value, length);
  emu.run(exit);
  out.diagnostics = emu.diagnostics;

  std::int64_t n = 0;
  if (length) {
    n = *length;
  } else {
    for (const auto& [off, cell] : emu.cells) {
      if (off >= term.value && cell.state != ByteCell::State::Uninit) n = std::max(n, off - term.value + 1);
    }
    if (trace.length.kind == LengthSource::Kind::Unknown && emu.bounded_copy)
      pay.length = {LengthSource::Kind::StrlenBounded, *emu.bounded_copy};
  }
  std::int64_t uninit = 0;
  for (std::int64_t k = 0; k < n; ++k) {
    auto it = emu.cells.find(term.value + k);
    if (it == emu.cells.end() || it->second.state == ByteCell::State::Uninit) {
      ++uninit;
      push(0, true);
    } else {
      push(it->second.value, it->second.state == ByteCell::State::Dynamic);
    }
  }
  if (uninit > 0) out.diagnostics.push_back(std::to_string(uninit) + " uninitialized payload byte(s) marked dynamic");
  return out;
}

std::string dump_steps(const ir::Program& p, const TaintTrace& trace) {
  std::ostringstream os;
  for (const auto& s : trace.steps) {
    os << ir::format_site(p, s.site) << ' ' << ir::to_string(s.varnode.space) << ':'
       << util::hex_address(static_cast<std::uint64_t>(s.varnode.offset)) << ':' << s.varnode.size << '\n';
  }
  return os.str();
}

}  // namespace rilmine::taint
