// SPDX-License-Identifier: Apache-2.0
#include "rilmine/callgraph.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>

#include "rilmine/util.hpp"

namespace rilmine::cg {

using ir::Opcode;

namespace {

constexpr int kMaxDepth = 16;

std::string signed_hex(std::int64_t v) {
  if (v == 0) return {};
  return v > 0 ? "+" + util::hex_address(static_cast<std::uint64_t>(v))
               : "-" + util::hex_address(static_cast<std::uint64_t>(-v));
}

std::uint32_t u32(std::int32_t v) { return static_cast<std::uint32_t>(v); }

/// The unique non-COPY definition of `v`, skipping COPY chains.
std::optional<dfa::DefLoc> value_def(const dfa::FunctionFacts& facts, std::uint32_t block, std::uint32_t index,
                                     ir::Varnode v) {
  for (int depth = 0; depth < kMaxDepth; ++depth) {
    if (v.is_const()) return std::nullopt;
    const auto defs = facts.reaching(block, index, v);
    if (defs.size() != 1 || defs.front().is_entry()) return std::nullopt;
    const auto d = defs.front();
    const auto& ins = facts.at(d);
    if (ins.op != Opcode::Copy) return d;
    block = u32(d.block);
    index = u32(d.index);
    v = ins.in[0];
  }
  return std::nullopt;
}

std::optional<Address> canonical_impl(const dfa::FunctionFacts& facts, std::uint32_t block, std::uint32_t index,
                                      const ir::Varnode& v, int depth) {
  if (depth > kMaxDepth || v.is_const()) return std::nullopt;
  const auto& fn = facts.function();
  if (auto off = facts.frame_offset(block, index, v)) return Address{Address::Base::Stack, *off, fn.id, 0};
  if (auto k = facts.entry_param(block, index, v)) {
    const bool is_this = *k == 0 && fn.owning_class && fn.params[0].type.is_class();
    return Address{is_this ? Address::Base::This : Address::Base::Param, static_cast<std::int64_t>(*k), {}, 0};
  }
  const auto defs = facts.reaching(block, index, v);
  if (defs.size() != 1 || defs.front().is_entry()) return std::nullopt;
  const auto d = defs.front();
  const auto& ins = facts.at(d);
  const auto b = u32(d.block), i = u32(d.index);
  auto shifted = [](std::optional<Address> a, std::int64_t by) {
    if (!a) return a;
    if (a->base == Address::Base::Stack) a->index += by;
    else a->offset += by;
    return a;
  };
  switch (ins.op) {
    case Opcode::Copy:
      return canonical_impl(facts, b, i, ins.in[0], depth + 1);
    case Opcode::IntAdd:
      if (ins.in[1].is_const()) return shifted(canonical_impl(facts, b, i, ins.in[0], depth + 1), ins.in[1].offset);
      if (ins.in[0].is_const()) return shifted(canonical_impl(facts, b, i, ins.in[1], depth + 1), ins.in[0].offset);
      return std::nullopt;
    case Opcode::IntSub:
      if (ins.in[1].is_const()) return shifted(canonical_impl(facts, b, i, ins.in[0], depth + 1), -ins.in[1].offset);
      return std::nullopt;
    case Opcode::Load: {
      // Reload of a spilled pointer.
      auto slot = facts.stack_use(b, i);
      if (!slot) return std::nullopt;
      const auto sdefs = facts.reaching_key(b, i, *slot);
      if (sdefs.size() != 1 || sdefs.front().is_entry()) return std::nullopt;
      const auto& st = facts.at(sdefs.front());
      const auto sb = u32(sdefs.front().block), si = u32(sdefs.front().index);
      if (st.op == Opcode::Store) return canonical_impl(facts, sb, si, st.in[1], depth + 1);
      if (st.op == Opcode::Copy) return canonical_impl(facts, sb, si, st.in[0], depth + 1);
      return std::nullopt;
    }
    default:
      return std::nullopt;
  }
}

struct ClassTracer {
  const ir::Program& p;
  const dfa::FunctionFacts& facts;
  std::set<std::string> out;

  void add_class(const std::string& name) {
    for (auto& c : p.with_subclasses(name)) out.insert(std::move(c));
  }

  void value(std::uint32_t block, std::uint32_t index, const ir::Varnode& v, int depth) {
    if (depth > kMaxDepth) return;
    if (v.is_const()) {
      for (const auto& c : p.classes) {
        if (c.vtable_addr != 0 && static_cast<std::int64_t>(c.vtable_addr) == v.offset) add_class(c.name);
      }
      return;
    }
    for (const auto& d : facts.reaching(block, index, v)) {
      if (d.is_entry()) {
        if (auto k = facts.param_of_register(v)) {
          const auto& type = facts.function().params[*k].type;
          if (type.is_class()) add_class(type.class_name);
        }
        continue;
      }
      def(d, depth + 1);
    }
  }

  void def(dfa::DefLoc d, int depth) {
    if (depth > kMaxDepth) return;
    const auto& ins = facts.at(d);
    const auto b = u32(d.block), i = u32(d.index);
    switch (ins.op) {
      case Opcode::Copy:
        value(b, i, ins.in[0], depth);
        break;
      case Opcode::Store:
        value(b, i, ins.in[1], depth);
        break;
      case Opcode::Call:
        if (ins.callee && !ins.callee->is_external()) {
          if (const auto* callee = p.find_function(ins.callee->name); callee && callee->return_type.is_class())
            add_class(callee->return_type.class_name);
        }
        break;
      case Opcode::Load:
        if (auto slot = facts.stack_use(b, i)) {
          for (const auto& sd : facts.reaching_key(b, i, *slot)) {
            if (!sd.is_entry()) def(sd, depth + 1);
          }
        }
        break;
      default:
        break;
    }
  }
};

}  // namespace

std::string to_string(const Address& a) {
  switch (a.base) {
    case Address::Base::This:
      return "this" + signed_hex(a.offset);
    case Address::Base::Param:
      return "param" + std::to_string(a.index) + signed_hex(a.offset);
    case Address::Base::Stack:
      return "stack[" + util::hex_address(static_cast<std::uint64_t>(a.index)) + "]@" + a.function;
  }
  return {};
}

std::optional<Address> canonical_address(const dfa::FunctionFacts& facts, std::uint32_t block, std::uint32_t index,
                                         const ir::Varnode& v) {
  auto a = canonical_impl(facts, block, index, v, 0);
  if (a && a->base == Address::Base::Stack) {
    a->index += a->offset;
    a->offset = 0;
  }
  return a;
}

void CallGraph::finalize() {
  std::sort(edges.begin(), edges.end(), [](const CallEdge& a, const CallEdge& b) {
    return std::tie(a.site, a.kind, a.callee, a.external) < std::tie(b.site, b.kind, b.callee, b.external);
  });
  std::sort(unresolved.begin(), unresolved.end(),
            [](const UnresolvedSite& a, const UnresolvedSite& b) { return a.site < b.site; });
  by_callee_.clear();
  by_site_.clear();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!edges[i].external) by_callee_[edges[i].callee].push_back(i);
    by_site_[edges[i].site].push_back(i);
  }
}

std::vector<const CallEdge*> CallGraph::callers_of(std::string_view function_id) const {
  std::vector<const CallEdge*> out;
  if (auto it = by_callee_.find(function_id); it != by_callee_.end()) {
    for (auto i : it->second) out.push_back(&edges[i]);
  }
  return out;
}

std::vector<const CallEdge*> CallGraph::edges_at(const ir::Site& site) const {
  std::vector<const CallEdge*> out;
  if (auto it = by_site_.find(site); it != by_site_.end()) {
    for (auto i : it->second) out.push_back(&edges[i]);
  }
  return out;
}

std::size_t CallGraph::virtual_edge_count() const {
  return static_cast<std::size_t>(
      std::count_if(edges.begin(), edges.end(), [](const CallEdge& e) { return e.kind == EdgeKind::Virtual; }));
}

CallGraph build_direct_cg(const ir::Program& p) {
  CallGraph g;
  for (const auto& f : p.functions) g.nodes.push_back(f.id);
  for (const auto& e : p.externals) g.nodes.push_back("ext:" + e);
  for (std::uint32_t fi = 0; fi < p.functions.size(); ++fi) {
    const auto& f = p.functions[fi];
    for (std::uint32_t b = 0; b < f.blocks.size(); ++b) {
      for (std::uint32_t i = 0; i < f.blocks[b].ops.size(); ++i) {
        const auto& ins = f.blocks[b].ops[i];
        if (ins.op != Opcode::Call || !ins.callee) continue;
        CallEdge e;
        e.caller = f.id;
        e.callee = ins.callee->name;
        e.external = ins.callee->is_external();
        e.site = {fi, b, i};
        g.edges.push_back(std::move(e));
      }
    }
  }
  g.finalize();
  return g;
}

VCallScan scan_vcall_sites(const ir::Program& p) {
  VCallScan scan;
  dfa::ProgramFacts all(p);
  for (std::uint32_t fi = 0; fi < p.functions.size(); ++fi) {
    const auto& f = p.functions[fi];
    bool has_callind = false;
    for (const auto& bb : f.blocks) {
      for (const auto& ins : bb.ops) has_callind |= ins.op == Opcode::CallInd;
    }
    if (!has_callind) continue;
    const auto& facts = all.of(fi);
    for (std::uint32_t b = 0; b < f.blocks.size(); ++b) {
      for (std::uint32_t i = 0; i < f.blocks[b].ops.size(); ++i) {
        const auto& ins = f.blocks[b].ops[i];
        if (ins.op != Opcode::CallInd || ins.in.empty()) continue;
        const ir::Site site{fi, b, i};
        auto miss = [&] { scan.unmatched.push_back({site, "pattern-mismatch"}); };
        auto d1 = value_def(facts, b, i, ins.in[0]);
        if (!d1 || facts.at(*d1).op != Opcode::Load) {
          miss();
          continue;
        }
        auto d2 = value_def(facts, u32(d1->block), u32(d1->index), facts.at(*d1).in[0]);
        if (!d2 || facts.at(*d2).op != Opcode::IntAdd) {
          miss();
          continue;
        }
        const auto& add = facts.at(*d2);
        const int ci = add.in[1].is_const() ? 1 : add.in[0].is_const() ? 0 : -1;
        if (ci < 0) {
          miss();
          continue;
        }
        const std::int64_t v_o = add.in[ci].offset;
        auto d3 = value_def(facts, u32(d2->block), u32(d2->index), add.in[1 - ci]);
        if (!d3 || facts.at(*d3).op != Opcode::Load || v_o < 0 || v_o % p.word_size != 0) {
          miss();
          continue;
        }
        auto v_t = canonical_address(facts, u32(d3->block), u32(d3->index), facts.at(*d3).in[0]);
        if (!v_t) {
          miss();
          continue;
        }
        scan.sites.push_back({site, f.owning_class.value_or(""), *v_t, v_o});
      }
    }
  }
  return scan;
}

std::vector<VCallSite> collect_vcall_sites(const ir::Program& p) { return scan_vcall_sites(p).sites; }

std::vector<std::string> class_inference(const Address& v_t, const ir::Function& f, const ir::Program& p) {
  auto fi = p.function_index(f.id);
  if (!fi) return {};
  if (v_t.base == Address::Base::Stack && v_t.function != f.id) return {};
  const dfa::FunctionFacts facts(p, static_cast<std::uint32_t>(*fi));
  ClassTracer tracer{p, facts, {}};
  const dfa::Key slot{ir::Space::Stack, v_t.index};
  for (std::uint32_t b = 0; b < f.blocks.size(); ++b) {
    for (std::uint32_t i = 0; i < f.blocks[b].ops.size(); ++i) {
      const auto& ins = f.blocks[b].ops[i];
      const dfa::DefLoc here{static_cast<std::int32_t>(b), static_cast<std::int32_t>(i)};
      if (v_t.base == Address::Base::Stack) {
        if (facts.stack_def(b, i) == slot) tracer.def(here, 0);
        continue;
      }
      if (ins.op != Opcode::Store) continue;
      if (auto a = canonical_address(facts, b, i, ins.in[0]); a && *a == v_t) tracer.def(here, 0);
    }
  }
  return {tracer.out.begin(), tracer.out.end()};
}

std::vector<std::string> search_list(const ir::Program& p, std::string_view v_c) {
  std::vector<std::string> out;
  auto push = [&](const std::string& id) {
    if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
  };
  for (const auto& anc : p.ancestors(v_c)) {
    if (const auto* c = p.find_class(anc)) {
      for (const auto& ctor : c->constructors) push(ctor);
    }
  }
  if (const auto* c = p.find_class(v_c)) {
    for (const auto& ctor : c->constructors) push(ctor);
    for (const auto& m : c->members) push(m);
  }
  return out;
}

CallGraph recover_vcalls(const ir::Program& p, const CallGraph& cg) {
  CallGraph out;
  out.nodes = cg.nodes;
  for (const auto& e : cg.edges) {
    if (e.kind == EdgeKind::Direct) out.edges.push_back(e);
  }
  const auto scan = scan_vcall_sites(p);
  out.unresolved = scan.unmatched;

  struct Outcome {
    std::vector<std::pair<std::string, std::string>> targets;  // (class, callee id)
    std::string reason;
  };
  std::map<std::tuple<std::string, Address, std::int64_t>, Outcome> solved;

  for (const auto& site : scan.sites) {
    const auto key = std::make_tuple(site.v_c, site.v_t, site.v_o);
    auto it = solved.find(key);
    if (it == solved.end()) {
      Outcome oc;
      std::vector<std::string> classes;
      if (site.v_t.base == Address::Base::Stack) {
        classes = class_inference(site.v_t, p.functions[site.site.function], p);
      } else if (site.v_c.empty()) {
        oc.reason = "no-owning-class";
      } else {
        std::string first_fn;
        for (const auto& fid : search_list(p, site.v_c)) {
          const auto* f = p.find_function(fid);
          if (!f) continue;
          auto found = class_inference(site.v_t, *f, p);
          if (found.empty()) continue;
          if (classes.empty()) {
            classes = std::move(found);
            first_fn = fid;
          } else if (found != classes) {
            out.notes.push_back("vcall " + site.v_c + " " + to_string(site.v_t) + " " +
                                util::hex_address(static_cast<std::uint64_t>(site.v_o)) + ": kept classes from " +
                                first_fn + ", ignored candidate from " + fid);
          }
        }
      }
      if (oc.reason.empty() && classes.empty()) oc.reason = "class-not-inferred";
      if (oc.reason.empty()) {
        const auto slot = static_cast<std::size_t>(site.v_o / p.word_size);
        for (const auto& c : classes) {
          const auto* info = p.find_class(c);
          if (info && slot < info->vtable.size()) oc.targets.emplace_back(c, info->vtable[slot]);
        }
        if (oc.targets.empty()) oc.reason = "vtable-offset-out-of-range";
      }
      it = solved.emplace(key, std::move(oc)).first;
    }
    const auto& oc = it->second;
    if (oc.targets.empty()) {
      out.unresolved.push_back({site.site, oc.reason});
      continue;
    }
    std::set<std::string> seen;
    for (const auto& [cls, callee] : oc.targets) {
      if (!seen.insert(callee).second) continue;
      CallEdge e;
      e.caller = p.functions[site.site.function].id;
      e.callee = callee;
      e.kind = EdgeKind::Virtual;
      e.site = site.site;
      e.resolution = Resolution{site, cls};
      out.edges.push_back(std::move(e));
    }
  }
  out.finalize();
  return out;
}

CallGraph build_call_graph(const ir::Program& p) { return recover_vcalls(p, build_direct_cg(p)); }

std::string dump(const ir::Program& p, const CallGraph& cg) {
  std::ostringstream os;
  for (const auto& e : cg.edges) {
    os << e.caller << " -> " << (e.external ? "ext:" : "") << e.callee;
    if (e.kind == EdgeKind::Direct) {
      os << " [direct]";
    } else {
      const auto& r = *e.resolution;
      os << " [virtual via (" << r.inferred_class << ", " << to_string(r.vcall.v_t) << ", "
         << util::hex_address(static_cast<std::uint64_t>(r.vcall.v_o)) << ")]";
    }
    os << '\n';
  }
  for (const auto& u : cg.unresolved) os << "unresolved " << ir::format_site(p, u.site) << ' ' << u.reason << '\n';
  return os.str();
}

}  // namespace rilmine::cg
