// SPDX-License-Identifier: Apache-2.0
#include "rilmine/forge.hpp"

#include <algorithm>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "rilmine/error.hpp"
#include "forge_detail.hpp"
#include "rilmine/util.hpp"

namespace rilmine::forge {

using ir::Opcode;
using ir::Varnode;
using json = nlohmann::json;

// --- manifest ------------------------------------------------------------------

void Manifest::normalize() {
  auto uniq = [](auto& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(virtual_edges);
  uniq(unresolved);
  uniq(commands);
  uniq(discards);
}

std::string to_json(const Manifest& m) {
  json j;
  j["format"] = "rilmine-manifest";
  j["version"] = 1;
  j["program"] = m.program;
  j["generator"] = m.generator;
  j["seed"] = m.seed;
  j["params"] = m.params;
  j["layout"] = m.layout;
  j["virtual_edges"] = json::array();
  for (const auto& e : m.virtual_edges) j["virtual_edges"].push_back({{"caller", e.caller}, {"callee", e.callee}});
  j["unresolved"] = json::array();
  for (const auto& u : m.unresolved) j["unresolved"].push_back({{"site", u.site}, {"reason", u.reason}});
  j["commands"] = json::array();
  for (const auto& c : m.commands) {
    json r{{"direction", cmd::to_string(c.direction)},
           {"api", c.api},
           {"root_function", c.root_function},
           {"payload", c.payload},
           {"channel", c.channel},
           {"length_source", c.length_source}};
    if (c.handler) r["handler"] = *c.handler;
    j["commands"].push_back(std::move(r));
  }
  j["discards"] = json::array();
  for (const auto& d : m.discards) j["discards"].push_back({{"site", d.site}, {"reason", d.reason}, {"path", d.path}});
  return j.dump(2) + "\n";
}

Manifest parse_manifest(std::string_view text) {
  Manifest m;
  try {
    const auto j = json::parse(text);
    if (j.value("format", "") != "rilmine-manifest") throw ParseError("manifest", "not a rilmine manifest");
    m.program = j.at("program").get<std::string>();
    m.generator = j.at("generator").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.params = j.at("params").get<std::map<std::string, std::string>>();
    m.layout = j.value("layout", m.layout);
    for (const auto& e : j.at("virtual_edges")) m.virtual_edges.push_back({e.at("caller"), e.at("callee")});
    for (const auto& u : j.at("unresolved")) m.unresolved.push_back({u.at("site"), u.at("reason")});
    for (const auto& c : j.at("commands")) {
      ExpectedCommand e;
      const auto dir = c.at("direction").get<std::string>();
      if (dir == "solicited") e.direction = cmd::Direction::Solicited;
      else if (dir == "unsolicited") e.direction = cmd::Direction::Unsolicited;
      else throw ParseError("manifest", "bad direction '" + dir + "'");
      e.api = c.at("api");
      e.root_function = c.at("root_function");
      e.payload = c.at("payload");
      e.channel = c.at("channel");
      e.length_source = c.value("length_source", "");
      if (c.contains("handler")) e.handler = c.at("handler").get<std::string>();
      m.commands.push_back(std::move(e));
    }
    for (const auto& d : j.at("discards")) m.discards.push_back({d.at("site"), d.at("reason"), d.value("path", "")});
  } catch (const json::exception& e) {
    throw ParseError("manifest", e.what());
  }
  return m;
}

// --- builders ------------------------------------------------------------------

FunctionBuilder::FunctionBuilder(ProgramBuilder& pb, std::size_t function_index) : pb_(pb), index_(function_index) {
  current_ = static_cast<int>(function().blocks.size()) - 1;
}

ir::Function& FunctionBuilder::function() { return pb_.p_.functions[index_]; }
const std::string& FunctionBuilder::id() { return function().id; }

ir::BasicBlock& FunctionBuilder::block() { return function().blocks[static_cast<std::size_t>(current_)]; }
void FunctionBuilder::emit(ir::Instruction ins) { block().ops.push_back(std::move(ins)); }

ir::Site FunctionBuilder::last_site() {
  return {static_cast<std::uint32_t>(index_), static_cast<std::uint32_t>(current_),
          static_cast<std::uint32_t>(block().ops.size() - 1)};
}

Varnode FunctionBuilder::param(std::size_t k, std::uint32_t size) const {
  return ir::reg(static_cast<std::int64_t>(k * pb_.p_.word_size), size);
}

Varnode FunctionBuilder::temp(std::uint32_t size) { return ir::unique(pb_.next_temp_[index_]++ * 0x10, size); }

Varnode FunctionBuilder::frame_addr(std::int64_t offset) { return add(ir::frame(pb_.p_.word_size), offset); }

Varnode FunctionBuilder::add(const Varnode& a, std::int64_t k) { return add(a, ir::constant(k)); }

Varnode FunctionBuilder::add(const Varnode& a, const Varnode& b) {
  auto out = temp(8);
  emit({Opcode::IntAdd, out, {a, b}, {}});
  return out;
}

Varnode FunctionBuilder::copy(const Varnode& v) {
  auto out = temp(v.size);
  copy_into(out, v);
  return out;
}

void FunctionBuilder::copy_into(const Varnode& dst, const Varnode& v) { emit({Opcode::Copy, dst, {v}, {}}); }

Varnode FunctionBuilder::load(const Varnode& addr, std::uint32_t size) {
  auto out = temp(size);
  emit({Opcode::Load, out, {addr}, {}});
  return out;
}

void FunctionBuilder::store(const Varnode& addr, const Varnode& value) { emit({Opcode::Store, {}, {addr, value}, {}}); }

void FunctionBuilder::store_bytes(std::int64_t offset, const std::vector<std::uint8_t>& bytes, std::uint32_t chunk) {
  std::size_t k = 0;
  while (k < bytes.size()) {
    const std::uint32_t n = k + chunk <= bytes.size() ? chunk : 1;
    std::uint64_t v = 0;
    for (std::uint32_t j = 0; j < n; ++j) v |= static_cast<std::uint64_t>(bytes[k + j]) << (8 * j);
    store(frame_addr(offset + static_cast<std::int64_t>(k)), ir::constant(static_cast<std::int64_t>(v), n));
    k += n;
  }
}

Varnode FunctionBuilder::compare(Opcode op, const Varnode& a, const Varnode& b) {
  auto out = temp(1);
  emit({op, out, {a, b}, {}});
  return out;
}

std::optional<Varnode> FunctionBuilder::call(const std::string& callee_id, std::vector<Varnode> args, bool has_result) {
  std::optional<Varnode> out;
  if (has_result) out = temp(8);
  emit({Opcode::Call, out, std::move(args), ir::Callee{ir::Callee::Kind::Function, callee_id}});
  return out;
}

std::optional<Varnode> FunctionBuilder::call_ext(const std::string& name, std::vector<Varnode> args, bool has_result) {
  pb_.use_external(name);
  std::optional<Varnode> out;
  if (has_result) out = temp(8);
  emit({Opcode::Call, out, std::move(args), ir::Callee{ir::Callee::Kind::External, name}});
  return out;
}

std::optional<Varnode> FunctionBuilder::callind(const Varnode& target, std::vector<Varnode> args, bool has_result) {
  std::optional<Varnode> out;
  if (has_result) out = temp(8);
  args.insert(args.begin(), target);
  emit({Opcode::CallInd, out, std::move(args), {}});
  return out;
}

std::optional<Varnode> FunctionBuilder::vcall(const Varnode& base, std::int64_t k_t, std::int64_t k_o,
                                              std::vector<Varnode> args, bool has_result) {
  auto obj = load(add(base, k_t));
  auto target = load(add(obj, k_o));
  args.insert(args.begin(), obj);
  return callind(target, std::move(args), has_result);
}

int FunctionBuilder::new_block() {
  auto& blocks = function().blocks;
  const int id = static_cast<int>(blocks.size());
  blocks.push_back({id, {}, {}});
  return id;
}

void FunctionBuilder::set_block(int id) { current_ = id; }

void FunctionBuilder::branch(int target) {
  emit({Opcode::Branch, {}, {ir::constant(target)}, {}});
  block().successors = {target};
}

void FunctionBuilder::cbranch(int taken, const Varnode& cond, int fallthrough) {
  emit({Opcode::CBranch, {}, {ir::constant(taken), cond}, {}});
  block().successors = {taken, fallthrough};
}

void FunctionBuilder::fallthrough(int next) { block().successors = {next}; }

void FunctionBuilder::ret(std::optional<Varnode> v) {
  ir::Instruction ins{Opcode::Return, {}, {}, {}};
  if (v) ins.in.push_back(*v);
  emit(std::move(ins));
}

ProgramBuilder::ProgramBuilder(std::string name, std::uint64_t data_base, std::uint64_t vtable_base)
    : next_data_(data_base), next_vtable_(vtable_base) {
  p_.name = std::move(name);
}

ir::ClassInfo& ProgramBuilder::add_class(const std::string& name, std::vector<std::string> parents) {
  ir::ClassInfo c;
  c.name = name;
  c.parents = std::move(parents);
  c.vtable_addr = next_vtable_;
  next_vtable_ += 0x100;
  p_.classes.push_back(std::move(c));
  return p_.classes.back();
}

ir::ClassInfo& ProgramBuilder::cls(const std::string& name) {
  for (auto& c : p_.classes)
    if (c.name == name) return c;
  throw DanglingReference("builder: no class '" + name + "'");
}

FunctionBuilder ProgramBuilder::add_function(const std::string& id, const std::string& name,
                                             std::optional<std::string> owning_class, std::vector<ir::Param> params,
                                             ir::ValueType return_type, std::int64_t stack_size) {
  ir::Function f;
  f.id = id;
  f.name = name;
  f.return_type = std::move(return_type);
  f.stack_size = stack_size;
  if (owning_class) {
    params.insert(params.begin(), ir::Param{"this", ir::ValueType::class_ptr(*owning_class)});
    auto& c = cls(*owning_class);
    const auto short_name = owning_class->substr(owning_class->rfind(':') == std::string::npos
                                                     ? 0
                                                     : owning_class->rfind(':') + 1);
    if (name.size() > short_name.size() + 2 && name.ends_with("::" + short_name)) c.constructors.push_back(id);
    else c.members.push_back(id);
  }
  f.owning_class = std::move(owning_class);
  f.params = std::move(params);
  f.blocks.push_back({0, {}, {}});
  p_.functions.push_back(std::move(f));
  return FunctionBuilder(*this, p_.functions.size() - 1);
}

FunctionBuilder ProgramBuilder::edit(const std::string& id) {
  for (std::size_t i = 0; i < p_.functions.size(); ++i)
    if (p_.functions[i].id == id) return FunctionBuilder(*this, i);
  throw DanglingReference("builder: no function '" + id + "'");
}

std::uint64_t ProgramBuilder::add_string(const std::string& s) {
  std::vector<std::uint8_t> bytes(s.begin(), s.end());
  bytes.push_back(0);
  return add_data(bytes);
}

std::uint64_t ProgramBuilder::add_data(const std::vector<std::uint8_t>& bytes) {
  const auto addr = next_data_;
  p_.data.push_back({addr, bytes});
  next_data_ += (bytes.size() + 15) / 16 * 16 + 16;
  return addr;
}

void ProgramBuilder::use_external(const std::string& name) {
  if (std::find(p_.externals.begin(), p_.externals.end(), name) == p_.externals.end()) p_.externals.push_back(name);
}

ir::Program ProgramBuilder::finish() {
  p_.link();
  return p_;
}

// --- shared pieces -------------------------------------------------------------

namespace detail {

std::string format_site_raw(const ir::Program& p, const ir::Site& s) {
  const auto& f = p.functions[s.function];
  return f.id + "@" + std::to_string(f.blocks[s.block].id) + ":" + std::to_string(s.index);
}

std::string dump_plan(const std::vector<std::optional<std::uint8_t>>& bytes) {
  std::string out;
  for (const auto& b : bytes) {
    if (!out.empty()) out += ' ';
    out += b ? util::hex_byte(*b) : "..";
  }
  return out;
}

void emit_ipc_core(ProgramBuilder& pb, const IpcOptions& o, Manifest& m) {
  using VT = ir::ValueType;
  const auto bytes = VT::bytes();
  const auto integer = VT::integer();

  pb.add_class("IoChannel");
  pb.add_class("IpcModem");
  if (o.modem_subclass) pb.add_class("IpcModem5G", {"IpcModem"});
  pb.add_class("IpcProtocol");
  if (o.reader) pb.add_class("Nv");

  // IoChannel
  {
    std::vector<ir::Param> ctor_params{{"modem", VT::class_ptr("IpcModem")}};
    auto ctor = pb.add_function("IoChannel::IoChannel", "IoChannel::IoChannel", "IoChannel", ctor_params);
    const auto path = pb.add_string(o.device);
    auto fd = ctor.call_ext("open", {ir::constant(static_cast<std::int64_t>(path)), ir::constant(2)}, true);
    ctor.store(ctor.add(ctor.param(0), 8), *fd);
    ctor.store(ctor.add(ctor.param(0), 0x10), ctor.param(1));
    ctor.ret();

    pb.add_function("IoChannel::~IoChannel", "IoChannel::~IoChannel", "IoChannel", {}).ret();
    pb.add_function("IoChannel::Open", "IoChannel::Open", "IoChannel", {}).ret();

    auto w = pb.add_function("IoChannel::Write", "IoChannel::Write", "IoChannel", {{"buf", bytes}, {"len", integer}});
    if (o.tx) {
      auto wfd = w.load(w.add(w.param(0), 8));
      w.call_ext("write", {wfd, w.param(1), w.param(2)}, true);
    }
    w.ret();

    auto r = pb.add_function("IoChannel::ReadPacket", "IoChannel::ReadPacket", "IoChannel", {}, {}, 0x100);
    if (o.reader) {
      auto rfd = r.load(r.add(r.param(0), 8));
      r.call_ext("read", {rfd, r.frame_addr(0), ir::constant(0x100)}, true);
      r.vcall(r.param(0), 0x10, 0x28, {r.frame_addr(0), ir::constant(0x100)});
      m.virtual_edges.push_back({"IoChannel::ReadPacket", "IpcModem::ProcessRxPacket"});
    }
    r.ret();
    pb.cls("IoChannel").vtable = {"IoChannel::~IoChannel", "IoChannel::Open", "IoChannel::Write",
                                  "IoChannel::ReadPacket"};
  }

  // IpcModem
  {
    std::vector<ir::Param> ctor_params{{"channel", VT::class_ptr("IoChannel")}};
    if (o.reader) ctor_params.push_back({"nv", VT::class_ptr("Nv")});
    auto ctor = pb.add_function("IpcModem::IpcModem", "IpcModem::IpcModem", "IpcModem", ctor_params);
    ctor.store(ctor.add(ctor.param(0), 0x18), ctor.param(1));
    if (o.reader) ctor.store(ctor.add(ctor.param(0), 0x20), ctor.param(2));
    ctor.ret();
    for (const char* stub : {"IpcModem::~IpcModem", "IpcModem::Init", "IpcModem::Open", "IpcModem::Close"})
      pb.add_function(stub, stub, "IpcModem", {}).ret();
    pb.add_function("IpcModem::GetState", "IpcModem::GetState", "IpcModem", {}, integer).ret(ir::constant(0));

    auto rx = pb.add_function("IpcModem::ProcessRxPacket", "IpcModem::ProcessRxPacket", "IpcModem",
                              {{"buf", bytes}, {"len", integer}});
    if (o.reader) {
      rx.vcall(rx.param(0), 0x20, 0x8, {rx.param(1), rx.param(2)});
      m.virtual_edges.push_back({"IpcModem::ProcessRxPacket", "Nv::ProcessRfsPacket"});
    }
    rx.ret();

    auto send = pb.add_function("IpcModem::SendMessage", "IpcModem::SendMessage", "IpcModem",
                                {{"buf", bytes}, {"len", integer}});
    send.call("IpcModem::DoIoChannelRoutingTx", {send.param(0), send.param(1), send.param(2)});
    send.ret();

    auto route = pb.add_function("IpcModem::DoIoChannelRoutingTx", "IpcModem::DoIoChannelRoutingTx", "IpcModem",
                                 {{"buf", bytes}, {"len", integer}});
    if (o.tx) {
      route.vcall(route.param(0), 0x18, 0x10, {route.param(1), route.param(2)});
      m.virtual_edges.push_back({"IpcModem::DoIoChannelRoutingTx", "IoChannel::Write"});
    }
    route.ret();
    pb.cls("IpcModem").vtable = {"IpcModem::~IpcModem", "IpcModem::Init",     "IpcModem::Open",
                                 "IpcModem::Close",     "IpcModem::GetState", "IpcModem::ProcessRxPacket",
                                 "IpcModem::SendMessage"};
  }

  if (o.modem_subclass) {
    auto send = pb.add_function("IpcModem5G::SendMessage", "IpcModem5G::SendMessage", "IpcModem5G",
                                {{"buf", bytes}, {"len", integer}});
    send.call("IpcModem::DoIoChannelRoutingTx", {send.param(0), send.param(1), send.param(2)});
    send.ret();
    auto vt = pb.cls("IpcModem").vtable;
    vt[6] = "IpcModem5G::SendMessage";
    pb.cls("IpcModem5G").vtable = vt;
  }

  // IpcProtocol
  {
    auto ctor = pb.add_function("IpcProtocol::IpcProtocol", "IpcProtocol::IpcProtocol", "IpcProtocol",
                                {{"modem", VT::class_ptr("IpcModem")}});
    ctor.store(ctor.add(ctor.param(0), 0x10), ctor.param(1));
    ctor.ret();
    pb.add_function("IpcProtocol::~IpcProtocol", "IpcProtocol::~IpcProtocol", "IpcProtocol", {}).ret();
    pb.cls("IpcProtocol").vtable = {"IpcProtocol::~IpcProtocol"};
  }

  if (o.reader) {
    pb.add_function("Nv::Nv", "Nv::Nv", "Nv", {}).ret();
    pb.add_function("Nv::~Nv", "Nv::~Nv", "Nv", {}).ret();
    pb.cls("Nv").vtable = {"Nv::~Nv", "Nv::ProcessRfsPacket"};
  }
}

void ensure_protocol_class(ProgramBuilder& pb, const std::string& cls) {
  for (const auto& c : pb.program().classes)
    if (c.name == cls) return;
  pb.add_class(cls, {"IpcProtocol"});
  pb.cls(cls).vtable = {"IpcProtocol::~IpcProtocol"};
}

void emit_tx_root(ProgramBuilder& pb, const TxRoot& r, Manifest& m) {
  using VT = ir::ValueType;
  ensure_protocol_class(pb, r.cls);
  constexpr std::int64_t kBuf = 0x10;
  std::int64_t len = static_cast<std::int64_t>(r.prefix.size());
  switch (r.tail) {
    case TxRoot::Tail::None:
      break;
    case TxRoot::Tail::ParamStore:
    case TxRoot::Tail::MemcpyParam:
    case TxRoot::Tail::Fill:
      len += r.tail_len;
      break;
    case TxRoot::Tail::StrlenClamp:
      len += r.tail_len;  // the clamp bound
      break;
  }
  std::vector<ir::Param> params;
  if (r.tail == TxRoot::Tail::ParamStore) params.push_back({"value", VT::integer()});
  else if (r.tail == TxRoot::Tail::StrlenClamp) params.push_back({"text", VT::string()});
  else if (r.tail != TxRoot::Tail::None) params.push_back({"data", VT::bytes()});

  auto f = pb.add_function(r.id, r.name, r.cls, params, {}, kBuf + len);
  f.store_bytes(kBuf, {r.prefix.begin(), r.prefix.begin() + 4}, 4);
  f.store_bytes(kBuf + 4, {r.prefix.begin() + 4, r.prefix.end()}, 1);
  const auto tail_at = kBuf + static_cast<std::int64_t>(r.prefix.size());
  Varnode len_v = ir::constant(len);
  switch (r.tail) {
    case TxRoot::Tail::None:
      break;
    case TxRoot::Tail::ParamStore:
      f.store(f.frame_addr(tail_at), f.param(1, static_cast<std::uint32_t>(r.tail_len)));
      break;
    case TxRoot::Tail::MemcpyParam:
      f.call_ext("memcpy", {f.frame_addr(tail_at), f.param(1), ir::constant(r.tail_len)});
      break;
    case TxRoot::Tail::Fill:
      f.call(r.fill_function, {f.frame_addr(tail_at), f.param(1)});
      break;
    case TxRoot::Tail::StrlenClamp: {
      auto n = *f.call_ext("strlen", {f.param(1)}, true);
      auto too_long = f.compare(Opcode::IntLess, ir::constant(r.tail_len), n);
      const int clamp = f.new_block();
      const int join = f.new_block();
      f.cbranch(clamp, too_long, join);
      f.set_block(clamp);
      f.copy_into(n, ir::constant(r.tail_len));
      f.branch(join);
      f.set_block(join);
      f.call_ext("memcpy", {f.frame_addr(tail_at), f.param(1), n});
      len_v = f.add(n, static_cast<std::int64_t>(r.prefix.size()));
      break;
    }
  }
  f.vcall(f.param(0), 0x10, 0x30, {f.frame_addr(kBuf), len_v});
  f.ret();

  m.virtual_edges.push_back({r.id, "IpcModem::SendMessage"});
  if (r.modem_subclass) m.virtual_edges.push_back({r.id, "IpcModem5G::SendMessage"});

  std::vector<std::optional<std::uint8_t>> plan(r.prefix.begin(), r.prefix.end());
  plan.resize(static_cast<std::size_t>(len), std::nullopt);
  ExpectedCommand c;
  c.api = "write";
  c.root_function = r.name;
  c.payload = dump_plan(plan);
  c.channel = r.channel;
  c.length_source = r.tail == TxRoot::Tail::StrlenClamp ? "strlen-bounded(" + std::to_string(r.tail_len) + ")"
                                                          : "constant-arg";
  m.commands.push_back(std::move(c));
}

Fixture finish(ProgramBuilder& pb, Manifest m) {
  Fixture fx;
  fx.program = pb.finish();
  m.program = fx.program.name;
  m.normalize();
  fx.manifest = std::move(m);
  return fx;
}

}  // namespace detail

using namespace detail;

// --- named fixtures ---------------------------------------------------------------

Fixture gen_fig4(bool with_subclass) {
  ProgramBuilder pb(with_subclass ? "fig4-subclass" : "fig4");
  Manifest m;
  m.generator = "fig4";
  m.params["subclass"] = with_subclass ? "true" : "false";
  emit_ipc_core(pb, {.tx = true, .reader = false, .modem_subclass = with_subclass}, m);
  ensure_protocol_class(pb, "IpcProtocol41");
  emit_tx_root(pb,
               {.id = "IpcTxCallGetCallList",
                .name = "IpcTxCallGetCallList",
                .cls = "IpcProtocol41",
                .prefix = {0x07, 0x00, 0x00, 0x00, 0x02, 0x01, 0x02},
                .modem_subclass = with_subclass},
               m);
  return finish(pb, std::move(m));
}

Fixture gen_fig2() {
  auto fx = gen_fig4(false);
  fx.program.name = "fig2";
  fx.manifest.program = "fig2";
  fx.manifest.generator = "fig2";
  fx.manifest.params.clear();
  return fx;
}

namespace {

const std::vector<std::string> kNvHandlers = {
    "Nv::ProcessOpenFile",    "Nv::ProcessNvRead",     "Nv::ProcessNvWrite",   "Nv::ProcessCloseFile",
    "Nv::ProcessGetFileSize", "Nv::ProcessDeleteFile", "Nv::ProcessRenameFile", "Nv::ProcessSyncFile",
};

}  // namespace

Fixture gen_fig5(std::vector<std::uint8_t> constants) {
  ProgramBuilder pb("fig5");
  Manifest m;
  m.generator = "fig5";
  std::string list;
  for (auto c : constants) list += (list.empty() ? "" : ",") + util::hex_byte(c);
  m.params["constants"] = list;
  emit_ipc_core(pb, {.tx = false, .reader = true}, m);

  std::vector<std::string> handlers;
  for (std::size_t k = 0; k < constants.size(); ++k) {
    const auto name = k < kNvHandlers.size() ? kNvHandlers[k] : "Nv::ProcessCmd" + util::hex_byte(constants[k]);
    handlers.push_back(name);
    pb.add_function(name, name, "Nv", {{"buf", ir::ValueType::bytes()}}).ret();
  }

  auto d = pb.add_function("Nv::ProcessRfsPacket", "Nv::ProcessRfsPacket", "Nv",
                           {{"buf", ir::ValueType::bytes()}, {"len", ir::ValueType::integer()}});
  auto cmd_byte = d.load(d.add(d.param(1), 5), 1);
  for (std::size_t k = 0; k < constants.size(); ++k) {
    auto eq = d.compare(Opcode::IntEqual, cmd_byte, ir::constant(constants[k], 1));
    const int handler = d.new_block();
    const int next = d.new_block();
    d.cbranch(handler, eq, next);
    d.set_block(handler);
    d.call(handlers[k], {d.param(0), d.param(1)});
    d.ret();
    d.set_block(next);

    ExpectedCommand c;
    c.direction = cmd::Direction::Unsolicited;
    c.api = "read";
    c.root_function = "Nv::ProcessRfsPacket";
    c.payload = util::hex_byte(constants[k]);
    c.channel = "/dev/umts_ipc0";
    c.handler = handlers[k];
    m.commands.push_back(std::move(c));
  }
  d.ret();
  return finish(pb, std::move(m));
}

Fixture gen_fig5_random(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto n = 1 + rng() % 8;
  std::vector<std::uint8_t> constants;
  std::set<std::uint8_t> used;
  while (constants.size() < n) {
    const auto c = static_cast<std::uint8_t>(rng() % 256);
    if (used.insert(c).second) constants.push_back(c);
  }
  auto fx = gen_fig5(constants);
  fx.program.name = "fig5-random-" + std::to_string(seed);
  fx.manifest.program = fx.program.name;
  fx.manifest.generator = "fig5-random";
  fx.manifest.seed = seed;
  return fx;
}

namespace {

/// SetImeiSelective -> StoreStringToFile(fd, "true", 4) -> write.
void emit_fig6(ProgramBuilder& pb, Fig6Variant variant, Manifest& m) {
  using VT = ir::ValueType;
  auto store = pb.add_function("StoreStringToFile", "StoreStringToFile", std::nullopt,
                               {{"fd", VT::integer()}, {"str", VT::string()}, {"len", VT::integer()}}, VT::integer());
  auto rc = store.call_ext("write", {store.param(0), store.param(1), store.param(2)}, true);
  const auto write_site = store.last_site();
  store.ret(rc);

  auto f = pb.add_function("SetImeiSelective", "SetImeiSelective", std::nullopt, {}, {}, 0x10);
  const auto text = pb.add_string("true");
  std::string path;
  Varnode fd;
  if (variant == Fig6Variant::Pipe) {
    f.call_ext("pipe", {f.frame_addr(0)}, true);
    fd = f.load(f.frame_addr(4), 4);
  } else {
    path = variant == Fig6Variant::Efs ? "/efs/imei/selective" : "/dev/umts_ipc0";
    fd = *f.call_ext("open", {ir::constant(static_cast<std::int64_t>(pb.add_string(path))), ir::constant(0x241)}, true);
  }
  f.call("StoreStringToFile", {fd, ir::constant(static_cast<std::int64_t>(text)), ir::constant(4)});
  f.ret();

  const auto site = format_site_raw(pb.program(), write_site);
  switch (variant) {
    case Fig6Variant::Efs:
      m.discards.push_back({site, "non-dev-path", path});
      break;
    case Fig6Variant::Pipe:
      m.discards.push_back({site, "pipe", ""});
      break;
    case Fig6Variant::Dev:
      m.commands.push_back({cmd::Direction::Solicited, "write", "SetImeiSelective", "74 72 75 65", path,
                            "constant-arg", std::nullopt});
      break;
  }
}

std::string_view to_string(Fig6Variant v) {
  switch (v) {
    case Fig6Variant::Efs:
      return "efs";
    case Fig6Variant::Pipe:
      return "pipe";
    case Fig6Variant::Dev:
      return "dev";
  }
  return "efs";
}

}  // namespace

Fixture gen_fig6(Fig6Variant variant) {
  ProgramBuilder pb(variant == Fig6Variant::Efs ? "fig6" : "fig6-" + std::string(to_string(variant)));
  Manifest m;
  m.generator = "fig6";
  m.params["variant"] = std::string(to_string(variant));
  emit_fig6(pb, variant, m);
  return finish(pb, std::move(m));
}

Fixture gen_fig2_fig6() {
  ProgramBuilder pb("fig2-fig6");
  Manifest m;
  m.generator = "fig2-fig6";
  emit_ipc_core(pb, {}, m);
  emit_tx_root(pb,
               {.id = "IpcTxCallGetCallList",
                .name = "IpcTxCallGetCallList",
                .cls = "IpcProtocol41",
                .prefix = {0x07, 0x00, 0x00, 0x00, 0x02, 0x01, 0x02}},
               m);
  emit_fig6(pb, Fig6Variant::Efs, m);
  return finish(pb, std::move(m));
}

Fixture gen_two_fds() {
  using VT = ir::ValueType;
  ProgramBuilder pb("two-fds");
  Manifest m;
  m.generator = "two-fds";
  std::string efs_site;
  for (const auto& [fn, path] : {std::pair<std::string, std::string>{"WriteDevice", "/dev/umts_ipc0"},
                                 std::pair<std::string, std::string>{"WriteEfsLog", "/efs/log/ipc_trace"}}) {
    auto w = pb.add_function(fn, fn, std::nullopt, {{"buf", VT::bytes()}, {"len", VT::integer()}});
    auto fd = w.call_ext("open", {ir::constant(static_cast<std::int64_t>(pb.add_string(path))), ir::constant(2)}, true);
    w.call_ext("write", {*fd, w.param(0), w.param(1)}, true);
    if (fn == "WriteEfsLog") m.discards.push_back({format_site_raw(pb.program(), w.last_site()), "non-dev-path", path});
    w.ret();
  }
  auto r = pb.add_function("IpcTxNotifyDualPath", "IpcTxNotifyDualPath", std::nullopt, {}, {}, 0x18);
  const std::vector<std::uint8_t> payload{0x08, 0x00, 0x00, 0x00, 0x05, 0x11, 0x01, 0x00};
  r.store_bytes(0x10, payload, 4);
  r.call("WriteDevice", {r.frame_addr(0x10), ir::constant(8)});
  r.call("WriteEfsLog", {r.frame_addr(0x10), ir::constant(8)});
  r.ret();
  m.commands.push_back({cmd::Direction::Solicited, "write", "IpcTxNotifyDualPath",
                        dump_plan({payload.begin(), payload.end()}), "/dev/umts_ipc0", "constant-arg", std::nullopt});
  return finish(pb, std::move(m));
}

Fixture gen_hybrid(HybridKind kind) {
  ProgramBuilder pb(kind == HybridKind::Direct    ? "hybrid-direct"
                    : kind == HybridKind::Derived ? "hybrid-derived"
                                                  : "hybrid-structured");
  Manifest m;
  m.generator = "hybrid";
  emit_ipc_core(pb, {}, m);
  switch (kind) {
    case HybridKind::Direct:
      m.params["kind"] = "direct";
      emit_tx_root(pb,
                   {.id = "IpcProtocol41Misc::IpcTxSetAirplaneMode",
                    .name = "IpcProtocol41Misc::IpcTxSetAirplaneMode",
                    .cls = "IpcProtocol41Misc",
                    .prefix = {0x08, 0x00, 0x00, 0x00, 0x01, 0x02, 0x03},
                    .tail = TxRoot::Tail::ParamStore,
                    .tail_len = 1},
                   m);
      break;
    case HybridKind::Derived:
      m.params["kind"] = "derived";
      emit_tx_root(pb,
                   {.id = "IpcProtocol41Sms::IpcTxSendSmsPdu",
                    .name = "IpcProtocol41Sms::IpcTxSendSmsPdu",
                    .cls = "IpcProtocol41Sms",
                    .prefix = {0x06, 0x01, 0x00, 0x00, 0x04, 0x02, 0x01},
                    .tail = TxRoot::Tail::StrlenClamp,
                    .tail_len = 255},
                   m);
      break;
    case HybridKind::Structured: {
      m.params["kind"] = "structured";
      auto ser = pb.add_function("SerializeGpsConfig", "SerializeGpsConfig", std::nullopt,
                                 {{"out", ir::ValueType::bytes()}, {"config", ir::ValueType::bytes()}});
      ser.ret();
      emit_tx_root(pb,
                   {.id = "IpcProtocol41Gps::IpcTxSetGpsConfig",
                    .name = "IpcProtocol41Gps::IpcTxSetGpsConfig",
                    .cls = "IpcProtocol41Gps",
                    .prefix = {0x40, 0x00, 0x00, 0x00, 0x0c, 0x01, 0x02},
                    .tail = TxRoot::Tail::Fill,
                    .tail_len = 57,
                    .fill_function = "SerializeGpsConfig"},
                   m);
      break;
    }
  }
  return finish(pb, std::move(m));
}

namespace {

std::vector<TxRoot> table5_roots() {
  auto ff = std::vector<std::uint8_t>{0x20, 0x00, 0x00, 0x00, 0x08, 0x07, 0x03, 0x01};
  ff.insert(ff.end(), 8, 0xff);
  return {
      {.id = "IpcProtocol41Power::IpcTxResetOemModem",
       .name = "IpcProtocol41Power::IpcTxResetOemModem",
       .cls = "IpcProtocol41Power",
       .prefix = {0x07, 0x00, 0x00, 0x00, 0x01, 0x03, 0x05}},
      {.id = "IpcProtocol41Sap::IpcTxGetSapTransferApdu",
       .name = "IpcProtocol41Sap::IpcTxGetSapTransferApdu",
       .cls = "IpcProtocol41Sap",
       .prefix = {0x0e, 0x01, 0x00, 0x00, 0x12, 0x04, 0x02},
       .tail = TxRoot::Tail::MemcpyParam,
       .tail_len = 263},
      {.id = "IpcProtocol41Imei::IpcTxImeiPreconfigSet",
       .name = "IpcProtocol41Imei::IpcTxImeiPreconfigSet",
       .cls = "IpcProtocol41Imei",
       .prefix = {0x17, 0x00, 0x00, 0x00, 0x10, 0x03, 0x03},
       .tail = TxRoot::Tail::MemcpyParam,
       .tail_len = 16},
      {.id = "IpcProtocol41Power::IpcTxModemPowerOff",
       .name = "IpcProtocol41Power::IpcTxModemPowerOff",
       .cls = "IpcProtocol41Power",
       .prefix = {0x07, 0x00, 0x00, 0x00, 0x01, 0x02, 0x01}},
      {.id = "IpcProtocol41Net::IpcTxSetSystemSelectionChannels",
       .name = "IpcProtocol41Net::IpcTxSetSystemSelectionChannels",
       .cls = "IpcProtocol41Net",
       .prefix = ff,
       .tail = TxRoot::Tail::MemcpyParam,
       .tail_len = 16},
      {.id = "IpcProtocol41Domestic::IpcTxDomesticSetChannelSettingLte",
       .name = "IpcProtocol41Domestic::IpcTxDomesticSetChannelSettingLte",
       .cls = "IpcProtocol41Domestic",
       .prefix = {0x09, 0x00, 0x00, 0x00, 0x20, 0x64, 0x03},
       .tail = TxRoot::Tail::ParamStore,
       .tail_len = 2},
      {.id = "IpcProtocol41Domestic::IpcTxDomesticGetNsriDecryptSms",
       .name = "IpcProtocol41Domestic::IpcTxDomesticGetNsriDecryptSms",
       .cls = "IpcProtocol41Domestic",
       .prefix = {0x99, 0x00, 0x00, 0x00, 0x20, 0x91, 0x02},
       .tail = TxRoot::Tail::MemcpyParam,
       .tail_len = 146},
  };
}

}  // namespace

Fixture gen_table5() {
  ProgramBuilder pb("table5");
  Manifest m;
  m.generator = "table5";
  emit_ipc_core(pb, {}, m);
  for (const auto& r : table5_roots()) emit_tx_root(pb, r, m);
  return finish(pb, std::move(m));
}

std::string table5_sim_config() {
  return "# behavior table for the crash-table fixture\n"
         "channel = /dev/umts_ipc0\n"
         "recover_after = 3\n"
         "valid_codes = 0\n"
         "07 00 00 00 01 03 05 -> temporary_crash(3)\n"
         "0e 01 00 00 12 04 02 * -> temporary_crash(3)\n"
         "17 00 00 00 10 03 03 * -> temporary_crash(3)\n"
         "07 00 00 00 01 02 01 -> recoverable_crash\n"
         "20 00 00 00 08 07 03 01 ff ff ff ff ff ff ff ff * -> permanent_crash\n"
         "09 00 00 00 20 64 03 * -> permanent_crash\n"
         "99 00 00 00 20 91 02 * -> permanent_crash\n";
}

std::string planted_ff_sim_config() {
  return "# direct-input hybrid: parameter byte 0xff takes the modem down\n"
         "channel = /dev/umts_ipc0\n"
         "recover_after = 3\n"
         "valid_codes = 0\n"
         "08 00 00 00 01 02 03 ff -> permanent_crash\n"
         "08 00 00 00 01 02 03 .. -> ok\n";
}

namespace {

const std::vector<std::pair<std::string, std::uint8_t>> kDiffModules = {
    {"Call", 0x02}, {"Sms", 0x04}, {"Net", 0x08}, {"Sim", 0x05}, {"Ss", 0x0c}, {"Misc", 0x0a}, {"Gps", 0x11},
    {"Power", 0x01},
};

Fixture diff_program(const std::string& name, const std::vector<int>& commands) {
  ProgramBuilder pb(name);
  Manifest m;
  m.generator = "diff-pair";
  m.params["commands"] = std::to_string(commands.size());
  emit_ipc_core(pb, {}, m);
  for (int j : commands) {
    const auto& [mod, group] = kDiffModules[static_cast<std::size_t>(j) % kDiffModules.size()];
    const auto cls = "IpcProtocol41" + mod;
    char num[8];
    std::snprintf(num, sizeof num, "%03d", j);
    const auto fname = cls + "::IpcTx" + mod + "Cmd" + num;
    emit_tx_root(pb,
                 {.id = fname,
                  .name = fname,
                  .cls = cls,
                  .prefix = {0x08, 0x00, 0x00, 0x00, group, static_cast<std::uint8_t>(j & 0xff),
                             static_cast<std::uint8_t>(j >> 8), 0x01}},
                 m);
  }
  return finish(pb, std::move(m));
}

}  // namespace

std::pair<Fixture, Fixture> gen_diff_pair() {
  std::vector<int> base, cur;
  for (int j = 0; j < 478; ++j) {
    base.push_back(j);
    if (!(j < 441 && j % 7 == 3)) cur.push_back(j);
  }
  for (int j = 478; j < 490; ++j) cur.push_back(j);
  return {diff_program("diff-base", base), diff_program("diff-current", cur)};
}

std::vector<std::string> fixture_kinds() {
  return {"fig2",           "fig4",          "fig4-subclass", "fig5",         "fig5-random",
          "fig6",           "fig6-pipe",     "fig6-dev",      "fig2-fig6",    "two-fds",
          "hybrid-direct",  "hybrid-derived", "hybrid-structured", "table5",   "diff-base",
          "diff-current",   "random"};
}

Fixture generate(const std::string& kind, std::uint64_t seed) {
  if (kind == "fig2") return gen_fig2();
  if (kind == "fig4") return gen_fig4(false);
  if (kind == "fig4-subclass") return gen_fig4(true);
  if (kind == "fig5") return gen_fig5();
  if (kind == "fig5-random") return gen_fig5_random(seed);
  if (kind == "fig6") return gen_fig6(Fig6Variant::Efs);
  if (kind == "fig6-pipe") return gen_fig6(Fig6Variant::Pipe);
  if (kind == "fig6-dev") return gen_fig6(Fig6Variant::Dev);
  if (kind == "fig2-fig6") return gen_fig2_fig6();
  if (kind == "two-fds") return gen_two_fds();
  if (kind == "hybrid-direct") return gen_hybrid(HybridKind::Direct);
  if (kind == "hybrid-derived") return gen_hybrid(HybridKind::Derived);
  if (kind == "hybrid-structured") return gen_hybrid(HybridKind::Structured);
  if (kind == "table5") return gen_table5();
  if (kind == "diff-base") return gen_diff_pair().first;
  if (kind == "diff-current") return gen_diff_pair().second;
  if (kind == "random") return gen_random(seed);
  throw Error("unknown fixture kind '" + kind + "'");
}

}  // namespace rilmine::forge
