// SPDX-License-Identifier: Apache-2.0
#include "rilmine/channel.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "rilmine/dataflow.hpp"
#include "rilmine/regex.hpp"
#include "rilmine/taint.hpp"

namespace rilmine::chan {

using ir::Opcode;

namespace {

std::uint32_t u32(std::int32_t v) { return static_cast<std::uint32_t>(v); }

bool is_open_family(std::string_view name) { return name == "open" || name == "__open_2" || name == "fopen"; }

/// Bytes of a `pipe(int fds[2])` array reachable from its base address.
constexpr std::int64_t kPipeSlotSpan = 16;

class FdTracer {
 public:
  FdTracer(const ir::Program& p, const cg::CallGraph& g, const AnalysisConfig& cfg)
      : p_(p), g_(g), cfg_(cfg), facts_(p) {}

  void value(std::uint32_t fn, std::uint32_t b, std::uint32_t i, const ir::Varnode& v, int depth) {
    if (depth > cfg_.channel_depth) {
      unknown("depth limit reached");
      return;
    }
    if (v.is_const()) {
      unknown("constant fd");
      return;
    }
    const auto key = std::make_tuple(fn, b, i, v.space, v.offset);
    if (!seen_.insert(key).second) return;
    const auto& f = facts_.of(fn);
    if (auto k = f.entry_param(b, i, v)) {
      const auto callers = g_.callers_of(p_.functions[fn].id);
      if (callers.empty()) unknown("fd parameter of " + p_.functions[fn].id + " has no callers");
      for (const auto* e : callers) {
        const auto& ins = ir::instruction_at(p_, e->site);
        const std::size_t idx = *k + (ins.op == Opcode::CallInd ? 1 : 0);
        if (idx < ins.in.size()) value(e->site.function, e->site.block, e->site.index, ins.in[idx], depth + 1);
      }
      return;
    }
    for (const auto& d : f.reaching(b, i, v)) {
      if (d.is_entry()) unknown("fd register undefined at entry of " + p_.functions[fn].id);
      else def(fn, d, depth);
    }
  }

  std::vector<FdOrigin> origins;
  std::vector<std::string> diagnostics;

 private:
  void add(FdOrigin o) {
    if (std::find(origins.begin(), origins.end(), o) == origins.end()) origins.push_back(std::move(o));
  }
  void unknown(std::string why) {
    diagnostics.push_back(why);
    add({FdOrigin::Kind::Unknown, {}, std::move(why)});
  }

  void def(std::uint32_t fn, dfa::DefLoc d, int depth) {
    const auto& f = facts_.of(fn);
    const auto& ins = f.at(d);
    const auto b = u32(d.block), i = u32(d.index);
    switch (ins.op) {
      case Opcode::Copy:
        value(fn, b, i, ins.in[0], depth);
        return;
      case Opcode::Store:
        value(fn, b, i, ins.in[1], depth);
        return;
      case Opcode::Call:
        if (ins.callee && ins.callee->is_external()) {
          external(fn, b, i, ins);
        } else if (ins.callee) {
          if (auto callee = p_.function_index(ins.callee->name)) returns(static_cast<std::uint32_t>(*callee), depth);
        }
        return;
      case Opcode::CallInd: {
        const auto edges = g_.edges_at({fn, b, i});
        if (edges.empty()) unknown("fd returned by unresolved indirect call");
        for (const auto* e : edges) {
          if (auto callee = p_.function_index(e->callee)) returns(static_cast<std::uint32_t>(*callee), depth);
        }
        return;
      }
      case Opcode::Load:
        load(fn, b, i, ins, depth);
        return;
      default:
        unknown("fd computed by " + std::string(ir::to_string(ins.op)));
        return;
    }
  }

  void external(std::uint32_t fn, std::uint32_t b, std::uint32_t i, const ir::Instruction& ins) {
    const auto& name = ins.callee->name;
    if (is_open_family(name)) {
      const auto& f = facts_.of(fn);
      std::optional<std::string> path;
      if (!ins.in.empty()) {
        if (auto addr = f.constant_value(b, i, ins.in[0]); addr && *addr >= 0)
          path = p_.c_string_at(static_cast<std::uint64_t>(*addr));
      }
      if (!path) {
        diagnostics.push_back(name + " path at " + ir::format_site(p_, {fn, b, i}) + " is not a constant string");
        add({FdOrigin::Kind::OpenFamily, {}, name});
        return;
      }
      add({FdOrigin::Kind::OpenFamily, *path, name});
      return;
    }
    if (name == "socket") {
      add({FdOrigin::Kind::Socket, {}, name});
      return;
    }
    unknown("fd returned by " + name);
  }

  void returns(std::uint32_t callee, int depth) {
    const auto& func = p_.functions[callee];
    bool any = false;
    for (std::uint32_t b = 0; b < func.blocks.size(); ++b) {
      for (std::uint32_t i = 0; i < func.blocks[b].ops.size(); ++i) {
        const auto& ins = func.blocks[b].ops[i];
        if (ins.op != Opcode::Return || ins.in.empty()) continue;
        any = true;
        value(callee, b, i, ins.in[0], depth + 1);
      }
    }
    if (!any) unknown(func.id + " returns no value");
  }

  void load(std::uint32_t fn, std::uint32_t b, std::uint32_t i, const ir::Instruction& ins, int depth) {
    const auto& f = facts_.of(fn);
    if (auto slot = f.stack_use(b, i)) {
      if (from_pipe(fn, slot->offset)) {
        add({FdOrigin::Kind::Pipe, {}, "pipe"});
        return;
      }
      for (const auto& sd : f.reaching_key(b, i, *slot)) {
        if (sd.is_entry()) unknown("stack slot read before written");
        else def(fn, sd, depth);
      }
      return;
    }
    auto addr = cg::canonical_address(f, b, i, ins.in[0]);
    const auto& func = p_.functions[fn];
    if (!addr || addr->base != cg::Address::Base::This || !func.owning_class) {
      unknown("fd loaded from untracked memory");
      return;
    }
    bool found = false;
    for (const auto& id : cg::search_list(p_, *func.owning_class)) {
      auto idx = p_.function_index(id);
      if (!idx) continue;
      const auto gi = static_cast<std::uint32_t>(*idx);
      const auto& g = facts_.of(gi);
      const auto& gf = p_.functions[gi];
      for (std::uint32_t gb = 0; gb < gf.blocks.size(); ++gb) {
        for (std::uint32_t gk = 0; gk < gf.blocks[gb].ops.size(); ++gk) {
          const auto& st = gf.blocks[gb].ops[gk];
          if (st.op != Opcode::Store) continue;
          auto a = cg::canonical_address(g, gb, gk, st.in[0]);
          if (!a || *a != *addr) continue;
          found = true;
          value(gi, gb, gk, st.in[1], depth + 1);
        }
      }
    }
    if (!found) unknown("no store to field " + cg::to_string(*addr) + " of " + *func.owning_class);
  }

  bool from_pipe(std::uint32_t fn, std::int64_t slot) {
    const auto& f = facts_.of(fn);
    const auto& func = p_.functions[fn];
    for (std::uint32_t b = 0; b < func.blocks.size(); ++b) {
      for (std::uint32_t i = 0; i < func.blocks[b].ops.size(); ++i) {
        const auto& ins = func.blocks[b].ops[i];
        if (ins.op != Opcode::Call || !ins.callee || !ins.callee->is_external() || ins.callee->name != "pipe" ||
            ins.in.empty())
          continue;
        if (auto base = f.frame_offset(b, i, ins.in[0]); base && slot >= *base && slot < *base + kPipeSlotSpan)
          return true;
      }
    }
    return false;
  }

  const ir::Program& p_;
  const cg::CallGraph& g_;
  const AnalysisConfig& cfg_;
  dfa::ProgramFacts facts_;
  std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t, ir::Space, std::int64_t>> seen_;
};

taint::PayloadBytes constant_payload(std::int64_t value, std::uint32_t size) {
  taint::PayloadBytes out;
  for (std::uint32_t k = 0; k < size; ++k) {
    out.bytes.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * k)));
    out.mask.push_back(taint::PayloadBytes::Mask::Static);
  }
  out.length = {taint::LengthSource::Kind::ConstantArg, size};
  return out;
}

}  // namespace

bool match_device_path(std::string_view path) {
  static const rx::Regex re(kDevicePathPattern);
  return re.full_match(path);
}

std::string_view to_string(FdOrigin::Kind k) {
  switch (k) {
    case FdOrigin::Kind::OpenFamily:
      return "open-family";
    case FdOrigin::Kind::Pipe:
      return "pipe";
    case FdOrigin::Kind::Socket:
      return "socket";
    case FdOrigin::Kind::Unknown:
      return "unknown";
  }
  return "unknown";
}

ChannelResolution resolve_channel(const ir::Program& p, const cg::CallGraph& cg, const ir::Site& site,
                                  int fd_arg_index, const AnalysisConfig& config) {
  ChannelResolution r;
  r.site = site;
  const auto& ins = ir::instruction_at(p, site);
  FdTracer tracer(p, cg, config);
  if (fd_arg_index < 0 || static_cast<std::size_t>(fd_arg_index) >= ins.in.size()) {
    r.reason = "unresolved";
    r.diagnostics.push_back("fd argument missing");
    return r;
  }
  tracer.value(site.function, site.block, site.index, ins.in[static_cast<std::size_t>(fd_arg_index)], 0);
  r.origins = tracer.origins;
  r.diagnostics = tracer.diagnostics;

  std::vector<std::string> reasons;
  std::set<std::string> kept_channels;
  for (const auto& o : r.origins) {
    switch (o.kind) {
      case FdOrigin::Kind::OpenFamily:
        if (o.path.empty()) reasons.push_back("unresolved");
        else if (match_device_path(o.path)) kept_channels.insert(o.path);
        else reasons.push_back("non-dev-path");
        break;
      case FdOrigin::Kind::Pipe:
        reasons.push_back("pipe");
        break;
      case FdOrigin::Kind::Socket:
        if (config.keep_sockets) kept_channels.insert("socket");
        else reasons.push_back("socket");
        break;
      case FdOrigin::Kind::Unknown:
        reasons.push_back("unresolved");
        break;
    }
  }
  if (r.origins.empty()) {
    r.reason = "unresolved";
  } else if (reasons.empty()) {
    r.keep = true;
    r.channel = *kept_channels.begin();
    if (kept_channels.size() > 1) r.diagnostics.push_back("several device channels; reporting " + r.channel);
  } else if (!kept_channels.empty()) {
    r.reason = "mixed";
  } else {
    r.reason = reasons.front();
  }
  return r;
}

FilterResult filter_commands(const ir::Program& p, const cg::CallGraph& cg, const AnalysisConfig& config,
                             std::string binary) {
  FilterResult out;
  out.db.binary = binary.empty() ? p.name : std::move(binary);
  out.db.config_hash = config.hash();
  const taint::TaintOptions topt{config.taint_depth};
  for (const auto& q : taint::find_sources(p)) {
    const auto* api = taint::find_api(q.api);
    auto res = resolve_channel(p, cg, q.site, api->fd_arg, config);
    ++out.counters.sites;
    const auto where = ir::format_site(p, q.site);
    for (const auto& d : res.diagnostics) out.diagnostics.push_back(where + ": " + d);
    if (!res.keep) {
      ++out.counters.discarded;
      out.resolutions.push_back(std::move(res));
      continue;
    }
    ++out.counters.kept;
    ++out.counters.taint_queries;
    if (q.direction == taint::Direction::Backward) {
      const auto traces = taint::backward_taint(p, cg, q, topt);
      out.counters.backward_traces += traces.size();
      for (const auto& t : traces) {
        if (!t.complete) {
          ++out.counters.incomplete_traces;
          out.diagnostics.push_back(where + ": incomplete backward trace (" + t.incomplete_reason + ")");
          continue;
        }
        auto conc = taint::concretize_payload(p, t);
        for (const auto& d : conc.diagnostics) out.diagnostics.push_back(where + ": " + d);
        const auto* root = p.find_function(t.root);
        cmd::CommandRecord rec;
        rec.binary = out.db.binary;
        rec.direction = cmd::Direction::Solicited;
        rec.api = q.api;
        rec.site = where;
        rec.root_function = root->name;
        rec.module = cmd::classify_module(root->name, config);
        rec.payload = std::move(conc.payload);
        rec.channel = res.channel;
        out.db.insert(std::move(rec));
      }
    } else {
      const auto t = taint::forward_taint(p, cg, q, topt);
      ++out.counters.forward_traces;
      if (!t.complete) {
        ++out.counters.incomplete_traces;
        out.diagnostics.push_back(where + ": incomplete forward trace (" + t.incomplete_reason + ")");
      }
      for (const auto& s : t.sinks) {
        const auto& root = p.functions[s.site.function];
        cmd::CommandRecord rec;
        rec.binary = out.db.binary;
        rec.direction = cmd::Direction::Unsolicited;
        rec.api = q.api;
        rec.site = where;
        rec.root_function = root.name;
        rec.module = cmd::classify_module(root.name, config);
        rec.payload = constant_payload(s.constant, s.size);
        rec.channel = res.channel;
        if (s.handler) {
          const auto* h = p.find_function(*s.handler);
          rec.handler = h ? h->name : *s.handler;
        }
        out.db.insert(std::move(rec));
      }
    }
    out.resolutions.push_back(std::move(res));
  }
  return out;
}

}  // namespace rilmine::chan
