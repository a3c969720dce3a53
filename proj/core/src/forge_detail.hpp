// SPDX-License-Identifier: Apache-2.0
//
// Building blocks shared by the fixed and the randomized generators.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rilmine/forge.hpp"

namespace rilmine::forge::detail {

struct IpcOptions {
  bool tx = true;
  bool reader = false;
  bool modem_subclass = false;
  std::string device = "/dev/umts_ipc0";
};

/// IoChannel, IpcModem (optionally IpcModem5G), IpcProtocol and, with
/// `reader`, Nv. Roots built by emit_tx_root send through this+0x10.
void emit_ipc_core(ProgramBuilder& pb, const IpcOptions& o, Manifest& m);
void ensure_protocol_class(ProgramBuilder& pb, const std::string& cls);

struct TxRoot {
  enum class Tail { None, ParamStore, MemcpyParam, Fill, StrlenClamp };
  std::string id;
  std::string name;
  std::string cls;
  std::vector<std::uint8_t> prefix;  // at least 4 bytes
  Tail tail = Tail::None;
  std::int64_t tail_len = 0;  // bytes, or the clamp bound
  std::string fill_function{};
  bool modem_subclass = false;
  std::string channel = "/dev/umts_ipc0";
};

/// Protocol member building `prefix` + tail on its stack and sending it via
/// the modem's SendMessage slot.
void emit_tx_root(ProgramBuilder& pb, const TxRoot& r, Manifest& m);

std::string format_site_raw(const ir::Program& p, const ir::Site& s);
std::string dump_plan(const std::vector<std::optional<std::uint8_t>>& bytes);
Fixture finish(ProgramBuilder& pb, Manifest m);

}  // namespace rilmine::forge::detail
