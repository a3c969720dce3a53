// SPDX-License-Identifier: Apache-2.0
//
// Randomized RIL-like programs. Every construct the generator emits has an
// outcome it can state up front, which becomes the manifest.

#include <algorithm>
#include <cstdio>
#include <functional>
#include <random>
#include <set>

#include "forge_detail.hpp"
#include "rilmine/util.hpp"

namespace rilmine::forge {

using ir::Opcode;
using ir::Varnode;
using VT = ir::ValueType;

namespace {

const std::vector<std::pair<std::string, std::uint8_t>> kModules = {
    {"Call", 0x02}, {"Sms", 0x04}, {"Net", 0x08}, {"Sim", 0x05}, {"Ss", 0x0c},
    {"Misc", 0x0a}, {"Gps", 0x11}, {"Power", 0x01}, {"Sap", 0x12}, {"Imei", 0x10},
};
const std::vector<std::string> kVerbs = {"Get", "Set", "Req", "Query", "Update", "Send", "Config"};
const std::vector<std::string> kNouns = {"Status", "Mode", "Info", "List", "Table", "Entry", "Profile", "Param"};
const std::vector<std::string> kDevices = {"/dev/umts_rfs0", "/dev/umts_router", "/dev/umts_boot0",
                                           "/dev/umts_dm0",  "/dev/umts_ipc1",   "/dev/umts_loopback"};

/// Where a chain's payload ends up: a callable entry and its device path.
struct Terminal {
  enum class Kind { Writer, Relay } kind = Kind::Writer;
  std::string id;  // writer(buf, len) or relay Forward(this, buf, len)
  std::string channel;
};

class RandomGen {
 public:
  RandomGen(std::uint64_t seed, const RandomParams& params)
      : rng_(seed), params_(params), pb_("random-" + std::to_string(seed)) {
    m_.generator = "random";
    m_.seed = seed;
    m_.params["functions"] = std::to_string(params.functions);
    m_.params["vcall_density"] = std::to_string(params.vcall_density);
    m_.params["distractors"] = std::to_string(params.distractors);
    m_.params["chains"] = std::to_string(params.chains);
    m_.params["readers"] = std::to_string(params.readers);
    limit_ = std::clamp(params.functions, 40, 200);
  }

  Fixture run() {
    modem_subclass_ = coin(0.4);
    detail::emit_ipc_core(pb_, {.tx = true, .reader = false, .modem_subclass = modem_subclass_}, m_);
    const int extra_channels = static_cast<int>(pick(3));
    for (int k = 0; k < extra_channels; ++k) emit_channel(k);
    const int writers = 1 + static_cast<int>(pick(2));
    for (int k = 0; k < writers; ++k) emit_writer(k);

    for (int k = 0; k < params_.readers && room(12); ++k) emit_reader(k, false);
    for (int k = 0; k < params_.distractors && room(4); ++k) emit_distractor(k);
    for (int k = 0; k < params_.chains && room(8); ++k) emit_chain(k);
    const int fillers = static_cast<int>(pick(6));
    for (int k = 0; k < fillers && room(1); ++k) emit_filler(k);
    return detail::finish(pb_, std::move(m_));
  }

 private:
  // --- rng helpers ---------------------------------------------------------------
  std::uint64_t pick(std::uint64_t n) { return n == 0 ? 0 : rng_() % n; }
  bool coin(double p) { return static_cast<double>(rng_() % 10000) < p * 10000.0; }
  template <class T>
  const T& choose(const std::vector<T>& v) {
    return v[pick(v.size())];
  }
  std::uint8_t byte() { return static_cast<std::uint8_t>(rng_() & 0xff); }

  bool room(int needed) const { return static_cast<int>(pb_.program().functions.size()) + needed <= limit_; }

  std::string next_id() {
    char buf[16];
    std::snprintf(buf, sizeof buf, "f%03d", serial_++);
    return buf;
  }

  FunctionBuilder fn(const std::string& name, std::optional<std::string> cls, std::vector<ir::Param> params,
                     VT ret = {}, std::int64_t stack = 0) {
    return pb_.add_function(next_id(), name, std::move(cls), std::move(params), std::move(ret), stack);
  }

  std::string unique_device() {
    for (const auto& d : kDevices)
      if (used_devices_.insert(d).second) return d;
    return "/dev/umts_extra" + std::to_string(used_devices_.size());
  }

  Varnode open_path(FunctionBuilder& f, const std::string& path) {
    return *f.call_ext("open", {ir::constant(static_cast<std::int64_t>(pb_.add_string(path))), ir::constant(2)}, true);
  }

  /// Emits a write-family call. Returns its site.
  ir::Site emit_write(FunctionBuilder& f, const Varnode& fd, const Varnode& buf, const Varnode& len,
                      std::string* api = nullptr) {
    const bool chk = coin(0.25);
    if (chk) f.call_ext("__write_chk", {fd, buf, len, len}, true);
    else f.call_ext("write", {fd, buf, len}, true);
    if (api) *api = chk ? "__write_chk" : "write";
    return f.last_site();
  }

  // --- infrastructure ------------------------------------------------------------

  /// IpcChannelK with an fd field, plus IpcRelayK forwarding through a vtable.
  void emit_channel(int k) {
    const auto ch = "IpcChannel" + std::to_string(k);
    const auto relay = "IpcRelay" + std::to_string(k);
    const auto device = unique_device();
    pb_.add_class(ch);
    pb_.add_class(relay);

    std::string opener;
    if (coin(0.5)) {
      auto o = fn("OpenDeviceNode" + std::to_string(k), std::nullopt, {}, VT::integer());
      o.ret(open_path(o, device));
      opener = o.id();
    }
    auto ctor = fn(ch + "::" + ch, ch, {});
    Varnode fd = opener.empty() ? open_path(ctor, device) : *ctor.call(opener, {}, true);
    if (coin(0.5)) fd = ctor.copy(fd);
    ctor.store(ctor.add(ctor.param(0), 8), fd);
    ctor.ret();
    auto dtor = fn(ch + "::~" + ch, ch, {});
    dtor.ret();
    auto w = fn(ch + "::Write", ch, {{"buf", VT::bytes()}, {"len", VT::integer()}}, VT::integer());
    std::string api;
    emit_write(w, w.load(w.add(w.param(0), 8)), w.param(1), w.param(2), &api);
    w.ret();
    pb_.cls(ch).vtable = {dtor.id(), w.id()};

    auto rctor = fn(relay + "::" + relay, relay, {{"channel", VT::class_ptr(ch)}});
    rctor.store(rctor.add(rctor.param(0), 8), rctor.param(1));
    rctor.ret();
    auto rdtor = fn(relay + "::~" + relay, relay, {});
    rdtor.ret();
    auto fwd = fn(relay + "::Forward", relay, {{"buf", VT::bytes()}, {"len", VT::integer()}});
    fwd.vcall(fwd.param(0), 8, 8, {fwd.param(1), fwd.param(2)});
    fwd.ret();
    pb_.cls(relay).vtable = {rdtor.id(), fwd.id()};
    m_.virtual_edges.push_back({fwd.id(), w.id()});
    terminals_.push_back({Terminal::Kind::Relay, fwd.id(), device});
    apis_[fwd.id()] = api;
  }

  void emit_writer(int k) {
    const auto device = unique_device();
    auto w = fn("IpcWriteDirect" + std::to_string(k), std::nullopt, {{"buf", VT::bytes()}, {"len", VT::integer()}},
                VT::integer());
    auto fd = open_path(w, device);
    std::string api;
    emit_write(w, fd, w.param(0), w.param(1), &api);
    w.ret();
    terminals_.push_back({Terminal::Kind::Writer, w.id(), device});
    apis_[w.id()] = api;
  }

  // --- solicited chains -------------------------------------------------------------

  struct Plan {
    std::vector<std::optional<std::uint8_t>> bytes;
  };

  /// Fills bytes [7, len) of the buffer at frame offset `buf` with random
  /// segments and returns the expected byte plan.
  std::vector<std::optional<std::uint8_t>> emit_payload(FunctionBuilder& f, std::int64_t buf, std::int64_t len,
                                                         std::uint8_t group, std::uint8_t command) {
    std::vector<std::optional<std::uint8_t>> plan;
    const std::vector<std::uint8_t> header{static_cast<std::uint8_t>(len), 0, 0, 0, group, command,
                                           static_cast<std::uint8_t>(pick(4))};
    f.store_bytes(buf, header, coin(0.5) ? 4 : 1);
    plan.assign(header.begin(), header.end());
    while (static_cast<std::int64_t>(plan.size()) < len) {
      const auto at = buf + static_cast<std::int64_t>(plan.size());
      const auto left = static_cast<std::uint64_t>(len) - plan.size();
      switch (pick(6)) {
        case 0: {  // plain stores
          const auto n = 1 + pick(std::min<std::uint64_t>(left, 4));
          std::vector<std::uint8_t> bytes;
          for (std::uint64_t k = 0; k < n; ++k) bytes.push_back(byte());
          f.store_bytes(at, bytes, n == 4 ? 4 : n == 2 ? 2 : 1);
          plan.insert(plan.end(), bytes.begin(), bytes.end());
          break;
        }
        case 1: {  // constant through a COPY
          const std::uint32_t n = left >= 2 && coin(0.5) ? 2 : 1;
          std::uint64_t v = 0;
          for (std::uint32_t k = 0; k < n; ++k) {
            const auto b = byte();
            v |= static_cast<std::uint64_t>(b) << (8 * k);
            plan.emplace_back(b);
          }
          auto t = f.copy(ir::constant(static_cast<std::int64_t>(v), n));
          f.store(f.frame_addr(at), t);
          break;
        }
        case 2: {  // parameter byte(s)
          const std::uint32_t n = left >= 4 && coin(0.3) ? 4 : left >= 2 && coin(0.5) ? 2 : 1;
          f.store(f.frame_addr(at), f.param(1, n));
          plan.insert(plan.end(), n, std::nullopt);
          break;
        }
        case 3: {  // memcpy from a constant table
          const auto n = 1 + pick(std::min<std::uint64_t>(left, 6));
          std::vector<std::uint8_t> table;
          for (std::uint64_t k = 0; k < n + pick(4); ++k) table.push_back(byte());
          const auto addr = pb_.add_data(table);
          f.call_ext("memcpy", {f.frame_addr(at), ir::constant(static_cast<std::int64_t>(addr)),
                                ir::constant(static_cast<std::int64_t>(n))});
          plan.insert(plan.end(), table.begin(), table.begin() + static_cast<std::ptrdiff_t>(n));
          break;
        }
        case 4: {  // memset
          const auto n = 1 + pick(std::min<std::uint64_t>(left, 6));
          const auto v = byte();
          f.call_ext("memset", {f.frame_addr(at), ir::constant(v, 4), ir::constant(static_cast<std::int64_t>(n))});
          plan.insert(plan.end(), n, v);
          break;
        }
        default: {  // memcpy from the data parameter
          const auto n = 1 + pick(std::min<std::uint64_t>(left, 6));
          f.call_ext("memcpy", {f.frame_addr(at), f.param(2), ir::constant(static_cast<std::int64_t>(n))});
          plan.insert(plan.end(), n, std::nullopt);
          break;
        }
      }
    }
    return plan;
  }

  /// Buffer pointer and length as passed to the transport, with optional
  /// COPY chains and stack spills.
  std::pair<Varnode, Varnode> send_args(FunctionBuilder& f, std::int64_t buf, std::int64_t len) {
    Varnode ptr = f.frame_addr(buf);
    switch (pick(3)) {
      case 0:
        break;
      case 1:
        ptr = f.copy(ptr);
        break;
      default:
        f.store(f.frame_addr(0x10), ptr);
        ptr = f.load(f.frame_addr(0x10), 8);
        break;
    }
    Varnode n = ir::constant(len);
    switch (pick(3)) {
      case 0:
        break;
      case 1:
        n = f.copy(n);
        break;
      default:
        f.store(f.frame_addr(0x18), ir::constant(len, 4));
        n = f.load(f.frame_addr(0x18), 4);
        break;
    }
    return {ptr, n};
  }

  /// Free hop functions (buf, len) or (len, buf) ending in `t`.
  std::string emit_hops(const Terminal& t, int depth) {
    std::string next = t.id;
    bool next_swapped = false;
    bool next_is_relay = t.kind == Terminal::Kind::Relay;
    for (int d = 0; d < depth; ++d) {
      const bool swapped = coin(0.3);
      std::vector<ir::Param> params;
      if (swapped) params = {{"len", VT::integer()}, {"buf", VT::bytes()}};
      else params = {{"buf", VT::bytes()}, {"len", VT::integer()}};
      auto h = fn("IpcRelayHop" + std::to_string(hop_serial_++), std::nullopt, params);
      Varnode buf = h.param(swapped ? 1 : 0);
      Varnode len = h.param(swapped ? 0 : 1);
      if (coin(0.4)) buf = h.copy(buf);
      std::vector<Varnode> args;
      if (next_is_relay) args = {ir::constant(0), buf, len};
      else if (next_swapped) args = {len, buf};
      else args = {buf, len};
      h.call(next, args);
      h.ret();
      next = h.id();
      next_swapped = swapped;
      next_is_relay = false;
      hop_swapped_[next] = swapped;
    }
    return next;
  }

  /// IpcHelperN with Send at slot 1 and an optional overriding subclass.
  /// Returns the base class name and the callee ids of Send.
  std::pair<std::string, std::vector<std::string>> emit_helper(const Terminal& t) {
    const auto base = "IpcHelper" + std::to_string(helper_serial_++);
    pb_.add_class(base);
    std::vector<std::string> sends;
    auto dtor = fn(base + "::~" + base, base, {});
    dtor.ret();
    auto emit_send = [&](const std::string& cls) {
      auto s = fn(cls + "::Send", cls, {{"buf", VT::bytes()}, {"len", VT::integer()}});
      if (t.kind == Terminal::Kind::Relay) s.call(t.id, {ir::constant(0), s.param(1), s.param(2)});
      else s.call(t.id, {s.param(1), s.param(2)});
      s.ret();
      sends.push_back(s.id());
      return s.id();
    };
    pb_.cls(base).vtable = {dtor.id(), emit_send(base)};
    if (coin(0.4)) {
      const auto sub = base + "Ext";
      pb_.add_class(sub, {base});
      pb_.cls(sub).vtable = {dtor.id(), emit_send(sub)};
    }
    return {base, sends};
  }

  void emit_chain(int k) {
    const auto& [mod, group] = choose(kModules);
    const auto cls = "IpcProtocol41" + mod;
    detail::ensure_protocol_class(pb_, cls);
    const auto name = cls + "::IpcTx" + choose(kVerbs) + mod + choose(kNouns) + std::to_string(k);
    constexpr std::int64_t kBuf = 0x20;
    const auto len = static_cast<std::int64_t>(8 + pick(17));

    enum class Via { Modem, Helper, Hops, Direct };
    Via via;
    if (coin(params_.vcall_density)) via = coin(0.6) ? Via::Modem : Via::Helper;
    else via = coin(0.6) ? Via::Hops : Via::Direct;

    // Callees are emitted before the root so the root's id sorts after them;
    // nothing depends on that, it only keeps listings readable.
    Terminal t = choose(terminals_);
    std::string entry;
    std::vector<std::string> helper_sends;
    std::string helper_cls;
    bool entry_swapped = false;
    bool entry_is_relay = false;
    switch (via) {
      case Via::Modem:
        t = {Terminal::Kind::Writer, "", "/dev/umts_ipc0"};
        break;
      case Via::Helper:
        std::tie(helper_cls, helper_sends) = emit_helper(t);
        break;
      case Via::Hops: {
        const int depth = 1 + static_cast<int>(pick(3));
        entry = emit_hops(t, depth);
        entry_swapped = hop_swapped_[entry];
        break;
      }
      case Via::Direct:
        entry = t.id;
        entry_is_relay = t.kind == Terminal::Kind::Relay;
        break;
    }

    auto f = fn(name, cls, {{"arg", VT::integer()}, {"data", VT::bytes()}}, {}, kBuf + len);
    if (via == Via::Helper)
      f.store(f.frame_addr(0), ir::constant(static_cast<std::int64_t>(pb_.cls(helper_cls).vtable_addr)));
    const auto plan = emit_payload(f, kBuf, len, group, static_cast<std::uint8_t>(k));
    auto [ptr, n] = send_args(f, kBuf, len);
    switch (via) {
      case Via::Modem:
        f.vcall(f.param(0), 0x10, 0x30, {ptr, n});
        m_.virtual_edges.push_back({f.id(), "IpcModem::SendMessage"});
        if (modem_subclass_) m_.virtual_edges.push_back({f.id(), "IpcModem5G::SendMessage"});
        break;
      case Via::Helper:
        f.vcall(ir::frame(8), 0, 8, {ptr, n});
        for (const auto& s : helper_sends) m_.virtual_edges.push_back({f.id(), s});
        break;
      case Via::Hops:
      case Via::Direct:
        if (entry_is_relay) f.call(entry, {f.param(0), ptr, n});
        else if (entry_swapped) f.call(entry, {n, ptr});
        else f.call(entry, {ptr, n});
        break;
    }
    f.ret();

    ExpectedCommand c;
    c.api = via == Via::Modem ? "write" : apis_[t.id];
    c.root_function = name;
    c.payload = detail::dump_plan(plan);
    c.channel = t.channel;
    c.length_source = "constant-arg";
    m_.commands.push_back(std::move(c));
  }

  // --- unsolicited dispatch ---------------------------------------------------------

  /// Reader class opening a channel, a read loop and a dispatcher comparing
  /// one byte against constants. With `discarded` the channel is a pipe or
  /// an /efs file and no command is expected.
  void emit_reader(int k, bool discarded) {
    const auto& [mod, group] = choose(kModules);
    (void)group;
    const auto cls = "IpcProtocol41" + mod;
    detail::ensure_protocol_class(pb_, cls);
    const auto rx = "IpcRxChannel" + std::to_string(k) + (discarded ? "Shadow" : "");
    pb_.add_class(rx);

    enum class Fd { Dev, Pipe, Efs };
    const Fd kind = !discarded ? Fd::Dev : coin(0.5) ? Fd::Pipe : Fd::Efs;
    const auto device = kind == Fd::Dev ? unique_device() : "/efs/nv/rx_" + std::to_string(k);

    enum class Via { Direct, Unpack, Vtable };
    const Via via = static_cast<Via>(pick(3));
    const auto handler_cls = rx + "Handler";
    if (via == Via::Vtable) pb_.add_class(handler_cls);

    // Dispatcher and handlers.
    const auto owner = via == Via::Vtable ? handler_cls : cls;
    const auto n = 1 + pick(4);
    std::vector<std::uint8_t> constants;
    std::set<std::uint8_t> used;
    while (constants.size() < n) {
      const auto c = byte();
      if (used.insert(c).second) constants.push_back(c);
    }
    std::vector<std::string> handlers;
    for (std::size_t j = 0; j < constants.size(); ++j) {
      auto h = fn(owner + "::IpcRx" + mod + choose(kNouns) + "Ind" + std::to_string(k) + "_" + std::to_string(j),
                  owner, {{"buf", VT::bytes()}});
      h.ret();
      handlers.push_back(h.id());
    }
    const auto offset = static_cast<std::int64_t>(4 + pick(4));
    const auto dname = owner + "::IpcRxDispatch" + mod + std::to_string(k);
    auto d = via == Via::Unpack ? fn(dname, owner, {{"value", VT::integer()}, {"len", VT::integer()}})
                                : fn(dname, owner, {{"buf", VT::bytes()}, {"len", VT::integer()}});
    const auto dispatcher_id = d.id();
    {
      // Untainted guard on the length.
      auto empty = d.compare(Opcode::IntEqual, d.param(2), ir::constant(0));
      const int bail = d.new_block();
      const int go = d.new_block();
      d.cbranch(bail, empty, go);
      d.set_block(bail);
      d.ret();
      d.set_block(go);
    }
    Varnode v = via == Via::Unpack ? d.param(1, 1) : d.load(d.add(d.param(1), offset), 1);
    if (coin(0.3)) v = d.copy(v);
    for (std::size_t j = 0; j < constants.size(); ++j) {
      const bool eq = coin(0.6);
      const auto lit = ir::constant(constants[j], 1);
      auto cond = coin(0.5) ? d.compare(eq ? Opcode::IntEqual : Opcode::IntNotEqual, v, lit)
                            : d.compare(eq ? Opcode::IntEqual : Opcode::IntNotEqual, lit, v);
      const int handler = d.new_block();
      const int next = d.new_block();
      if (eq) d.cbranch(handler, cond, next);
      else d.cbranch(next, cond, handler);
      d.set_block(handler);
      d.call(handlers[j], {d.param(0), ir::constant(0)});
      d.ret();
      d.set_block(next);
    }
    d.ret();

    std::string unpack_id;
    if (via == Via::Unpack) {
      auto u = fn("IpcRxUnpack" + std::to_string(k) + (discarded ? "Shadow" : ""), std::nullopt,
                  {{"buf", VT::bytes()}, {"len", VT::integer()}});
      auto b = u.load(u.add(u.param(0), offset), 1);
      u.call(dispatcher_id, {ir::constant(0), b, u.param(1)});
      u.ret();
      unpack_id = u.id();
    }
    if (via == Via::Vtable) {
      auto hd = fn(handler_cls + "::~" + handler_cls, handler_cls, {});
      hd.ret();
      pb_.cls(handler_cls).vtable = {hd.id(), dispatcher_id};
    }

    // Reader class.
    std::vector<ir::Param> ctor_params;
    if (via == Via::Vtable) ctor_params.push_back({"handler", VT::class_ptr(handler_cls)});
    auto ctor = fn(rx + "::" + rx, rx, ctor_params, {}, 0x10);
    Varnode fd;
    if (kind == Fd::Pipe) {
      ctor.call_ext("pipe", {ctor.frame_addr(0)}, true);
      fd = ctor.load(ctor.frame_addr(0), 4);
    } else {
      fd = open_path(ctor, device);
    }
    ctor.store(ctor.add(ctor.param(0), 8), fd);
    if (via == Via::Vtable) ctor.store(ctor.add(ctor.param(0), 0x10), ctor.param(1));
    ctor.ret();
    auto dtor = fn(rx + "::~" + rx, rx, {});
    dtor.ret();
    auto loop = fn(rx + "::ReadLoop", rx, {}, {}, 0x40);
    const bool chk = coin(0.25);
    auto rfd = loop.load(loop.add(loop.param(0), 8));
    if (chk) loop.call_ext("__read_chk", {rfd, loop.frame_addr(0), ir::constant(0x40), ir::constant(0x40)}, true);
    else loop.call_ext("read", {rfd, loop.frame_addr(0), ir::constant(0x40)}, true);
    const auto read_site = loop.last_site();
    switch (via) {
      case Via::Direct:
        loop.call(dispatcher_id, {loop.param(0), loop.frame_addr(0), ir::constant(0x40)});
        break;
      case Via::Unpack:
        loop.call(unpack_id, {loop.frame_addr(0), ir::constant(0x40)});
        break;
      case Via::Vtable:
        loop.vcall(loop.param(0), 0x10, 8, {loop.frame_addr(0), ir::constant(0x40)});
        m_.virtual_edges.push_back({loop.id(), dispatcher_id});
        break;
    }
    loop.ret();
    pb_.cls(rx).vtable = {dtor.id(), loop.id()};

    if (discarded) {
      m_.discards.push_back({detail::format_site_raw(pb_.program(), read_site), kind == Fd::Pipe ? "pipe" : "non-dev-path",
                             kind == Fd::Pipe ? "" : device});
      return;
    }
    const auto& fns = pb_.program().functions;
    auto name_of = [&](const std::string& id) {
      for (const auto& f : fns)
        if (f.id == id) return f.name;
      return id;
    };
    for (std::size_t j = 0; j < constants.size(); ++j) {
      ExpectedCommand c;
      c.direction = cmd::Direction::Unsolicited;
      c.api = chk ? "__read_chk" : "read";
      c.root_function = dname;
      c.payload = util::hex_byte(constants[j]);
      c.channel = device;
      c.handler = name_of(handlers[j]);
      m_.commands.push_back(std::move(c));
    }
  }

  // --- distractors ------------------------------------------------------------------

  void emit_distractor(int k) {
    const auto tag = std::to_string(k);
    const auto payload = [&](FunctionBuilder& f, std::int64_t at) {
      std::vector<std::uint8_t> bytes;
      for (int j = 0; j < 8; ++j) bytes.push_back(byte());
      f.store_bytes(at, bytes, 4);
    };
    switch (pick(10)) {
      case 0: {
        auto f = fn("IpcLogPipe" + tag, std::nullopt, {}, {}, 0x18);
        f.call_ext("pipe", {f.frame_addr(0)}, true);
        auto fd = f.load(f.frame_addr(4), 4);
        payload(f, 0x10);
        emit_write(f, fd, f.frame_addr(0x10), ir::constant(8));
        m_.discards.push_back({site(f), "pipe", ""});
        f.ret();
        break;
      }
      case 1: {
        const auto path = "/efs/nv/item_" + tag;
        auto f = fn("NvSaveEfs" + tag, std::nullopt, {}, {}, 0);
        auto fd = open_path(f, path);
        const auto text = pb_.add_string("state=" + tag);
        emit_write(f, fd, ir::constant(static_cast<std::int64_t>(text)), ir::constant(7));
        m_.discards.push_back({site(f), "non-dev-path", path});
        f.ret();
        break;
      }
      case 2: {
        auto f = fn("IpcReportSock" + tag, std::nullopt, {}, {}, 0x18);
        auto fd = f.call_ext("socket", {ir::constant(2), ir::constant(1), ir::constant(0)}, true);
        payload(f, 0x10);
        f.call_ext("sendto", {*fd, f.frame_addr(0x10), ir::constant(8), ir::constant(0), ir::constant(0),
                              ir::constant(0)},
                   true);
        m_.discards.push_back({site(f), "socket", ""});
        f.ret();
        break;
      }
      case 3: {
        auto f = fn("IpcDebugPrint" + tag, std::nullopt, {}, {}, 0x18);
        payload(f, 0x10);
        emit_write(f, ir::constant(1, 4), f.frame_addr(0x10), ir::constant(8));
        m_.discards.push_back({site(f), "unresolved", ""});
        f.ret();
        break;
      }
      case 4: {
        auto w = fn("IpcWriteAny" + tag, std::nullopt,
                    {{"fd", VT::integer()}, {"buf", VT::bytes()}, {"len", VT::integer()}});
        emit_write(w, w.param(0), w.param(1), w.param(2));
        m_.discards.push_back({site(w), "mixed", ""});
        w.ret();
        for (const auto& path : {unique_device(), "/efs/log/any_" + tag}) {
          auto c = fn("IpcWriteAnyCaller" + tag + (path.starts_with("/dev/") ? "Dev" : "Efs"), std::nullopt, {}, {},
                      0x18);
          auto fd = open_path(c, path);
          payload(c, 0x10);
          c.call(w.id(), {fd, c.frame_addr(0x10), ir::constant(8)});
          c.ret();
        }
        break;
      }
      case 5: {
        const auto slot = pb_.add_data(std::vector<std::uint8_t>(8, 0));
        auto f = fn("IpcCallbackInvoke" + tag, std::nullopt, {});
        auto target = f.load(ir::constant(static_cast<std::int64_t>(slot)));
        f.callind(target, {ir::constant(0)});
        m_.unresolved.push_back({site(f), "pattern-mismatch"});
        f.ret();
        break;
      }
      case 6: {
        const auto cls = "IpcOrphan" + tag;
        pb_.add_class(cls);
        auto f = fn(cls + "::Notify", cls, {});
        f.vcall(f.param(0), 0x30, 8, {});
        m_.unresolved.push_back({site(f), "class-not-inferred"});
        f.ret();
        pb_.cls(cls).vtable = {f.id()};
        break;
      }
      case 7: {
        const auto& [mod, group] = choose(kModules);
        (void)group;
        const auto cls = "IpcProtocol41" + mod;
        detail::ensure_protocol_class(pb_, cls);
        auto f = fn(cls + "::IpcTxLegacy" + mod + tag, cls, {});
        f.vcall(f.param(0), 0x10, 0x80, {});
        m_.unresolved.push_back({site(f), "vtable-offset-out-of-range"});
        f.ret();
        break;
      }
      case 8: {
        auto f = fn("IpcInvokeHandler" + tag, std::nullopt, {{"obj", VT::class_ptr("IpcModem")}});
        f.vcall(f.param(0), 0x18, 0x10, {});
        m_.unresolved.push_back({site(f), "no-owning-class"});
        f.ret();
        break;
      }
      default:
        if (room(12)) emit_reader(100 + k, true);
        break;
    }
  }

  void emit_filler(int k) {
    auto f = fn("IpcUtilChecksum" + std::to_string(k), std::nullopt, {{"a", VT::integer()}, {"b", VT::integer()}},
                VT::integer());
    auto s = f.add(f.param(0), f.param(1));
    auto lt = f.compare(Opcode::IntLess, s, ir::constant(0x100));
    const int rec = f.new_block();
    const int done = f.new_block();
    f.cbranch(done, lt, rec);
    f.set_block(rec);
    auto r = f.call(f.id(), {s, ir::constant(-0x100)}, true);
    f.ret(r);
    f.set_block(done);
    if (!filler_ids_.empty()) f.call(choose(filler_ids_), {s, ir::constant(1)}, true);
    f.ret(s);
    filler_ids_.push_back(f.id());
  }

  std::string site(FunctionBuilder& f) { return detail::format_site_raw(pb_.program(), f.last_site()); }

  std::mt19937_64 rng_;
  RandomParams params_;
  ProgramBuilder pb_;
  Manifest m_;
  int limit_ = 200;
  int serial_ = 0;
  int hop_serial_ = 0;
  int helper_serial_ = 0;
  bool modem_subclass_ = false;
  std::vector<Terminal> terminals_;
  std::map<std::string, std::string> apis_;
  std::map<std::string, bool> hop_swapped_;
  std::set<std::string> used_devices_{"/dev/umts_ipc0"};
  std::vector<std::string> filler_ids_;
};

}  // namespace

Fixture gen_random(std::uint64_t seed, const RandomParams& params) { return RandomGen(seed, params).run(); }

}  // namespace rilmine::forge
