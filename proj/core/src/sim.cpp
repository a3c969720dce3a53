// SPDX-License-Identifier: Apache-2.0
#include "rilmine/sim.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <system_error>

#include "rilmine/error.hpp"
#include "rilmine/util.hpp"

namespace rilmine::sim {

namespace fs = std::filesystem;

std::string_view to_string(ServiceState s) { return s == ServiceState::InService ? "IN_SERVICE" : "OUT_OF_SERVICE"; }

std::string to_string(const Effect& e) {
  switch (e.kind) {
    case Effect::Kind::Ok:
      return "ok";
    case Effect::Kind::TemporaryCrash:
      return "temporary_crash(" + std::to_string(e.recover_after) + ")";
    case Effect::Kind::RecoverableCrash:
      return "recoverable_crash";
    case Effect::Kind::PermanentCrash:
      return "permanent_crash";
  }
  return "ok";
}

std::string_view to_string(NvRequest::Op op) {
  switch (op) {
    case NvRequest::Op::Open:
      return "open";
    case NvRequest::Op::Read:
      return "read";
    case NvRequest::Op::Write:
      return "write";
  }
  return "open";
}

bool Matcher::matches(std::span<const std::uint8_t> payload) const {
  if (payload.size() < bytes.size() || (!prefix && payload.size() != bytes.size())) return false;
  for (std::size_t k = 0; k < bytes.size(); ++k)
    if (bytes[k] && *bytes[k] != payload[k]) return false;
  return true;
}

std::string Matcher::to_string() const {
  std::string out;
  for (const auto& b : bytes) {
    if (!out.empty()) out += ' ';
    out += b ? util::hex_byte(*b) : "..";
  }
  if (prefix) out += out.empty() ? "*" : " *";
  return out;
}

namespace {

bool parse_bool(std::string_view v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ParseError(where, "expected a boolean, got '" + std::string(v) + "'");
}

Matcher parse_matcher(std::string_view text, const std::string& where) {
  Matcher m;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    if (m.prefix) throw ParseError(where, "'*' must be the last matcher token");
    if (tok == "*") {
      m.prefix = true;
    } else if (tok == ".." || tok == "??") {
      m.bytes.emplace_back(std::nullopt);
    } else {
      auto b = util::parse_hex(tok);
      if (!b || b->size() != 1) throw ParseError(where, "bad matcher byte '" + tok + "'");
      m.bytes.emplace_back((*b)[0]);
    }
  }
  if (m.bytes.empty() && !m.prefix) throw ParseError(where, "empty matcher");
  return m;
}

Effect parse_effect(std::string_view text, std::int64_t default_recover, const std::string& where) {
  text = util::trim(text);
  std::string_view name = text;
  std::optional<std::string_view> arg;
  if (auto open = text.find('('); open != std::string_view::npos) {
    if (text.back() != ')') throw ParseError(where, "unbalanced '(' in effect");
    name = util::trim(text.substr(0, open));
    arg = util::trim(text.substr(open + 1, text.size() - open - 2));
  }
  Effect e;
  if (name == "ok") {
    e.kind = Effect::Kind::Ok;
  } else if (name == "temporary_crash") {
    e.kind = Effect::Kind::TemporaryCrash;
    e.recover_after = default_recover;
    if (arg && !arg->empty()) {
      auto v = util::parse_int(*arg);
      if (!v || *v < 1) throw ParseError(where, "temporary_crash needs a positive tick count");
      e.recover_after = *v;
    }
    return e;
  } else if (name == "recoverable_crash") {
    e.kind = Effect::Kind::RecoverableCrash;
  } else if (name == "permanent_crash") {
    e.kind = Effect::Kind::PermanentCrash;
  } else {
    throw ParseError(where, "unknown effect '" + std::string(name) + "'");
  }
  if (arg && !arg->empty()) throw ParseError(where, std::string(name) + " takes no argument");
  return e;
}

NvRequest parse_nv_probe(std::string_view v, const std::string& where) {
  const auto parts = util::split(v, ' ');
  std::vector<std::string> words;
  for (const auto& p : parts)
    if (!p.empty()) words.push_back(p);
  if (words.size() < 2) throw ParseError(where, "nv_probe needs '<open|read|write> <path> [hex data]'");
  NvRequest r;
  if (words[0] == "open") r.op = NvRequest::Op::Open;
  else if (words[0] == "read") r.op = NvRequest::Op::Read;
  else if (words[0] == "write") r.op = NvRequest::Op::Write;
  else throw ParseError(where, "unknown nv op '" + words[0] + "'");
  r.path = words[1];
  if (words.size() > 2) {
    auto data = util::parse_hex(words[2]);
    if (!data) throw ParseError(where, "bad nv_probe data");
    r.data = *data;
  }
  return r;
}

}  // namespace

SimConfig parse_sim_config(std::string_view text, std::string_view source, const fs::path& base_dir) {
  SimConfig c;
  // Rows may use the default before or after a recover_after line; resolve
  // defaults once the whole file is read.
  std::vector<std::pair<std::size_t, std::string>> deferred;  // row index, effect text
  std::size_t lineno = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string where = std::string(source) + ":" + std::to_string(lineno);
    auto line = raw.substr(0, raw.find('#'));
    auto t = util::trim(line);
    if (t.empty()) continue;
    if (auto arrow = t.find("->"); arrow != std::string_view::npos) {
      BehaviorRow row;
      row.matcher = parse_matcher(t.substr(0, arrow), where);
      const auto effect_text = std::string(util::trim(t.substr(arrow + 2)));
      row.effect = parse_effect(effect_text, 0, where);
      if (row.effect.kind == Effect::Kind::TemporaryCrash && effect_text.find('(') == std::string::npos)
        deferred.emplace_back(c.behavior.size(), effect_text);
      c.behavior.push_back(std::move(row));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ParseError(where, "expected 'key = value' or 'matcher -> effect'");
    const auto key = util::trim(t.substr(0, eq));
    const auto value = util::trim(t.substr(eq + 1));
    if (key == "channel") {
      c.channel = value;
    } else if (key == "sandbox_root") {
      fs::path p{std::string(value)};
      c.sandbox_root = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    } else if (key == "symlink_check") {
      c.symlink_check = parse_bool(value, where);
    } else if (key == "dotdot_check") {
      c.dotdot_check = parse_bool(value, where);
    } else if (key == "recover_after") {
      auto v = util::parse_int(value);
      if (!v || *v < 1) throw ParseError(where, "recover_after must be a positive tick count");
      c.recover_after = *v;
    } else if (key == "valid_codes") {
      c.valid_codes.clear();
      for (const auto& part : util::split(value, ',')) {
        auto v = util::parse_int(util::trim(part));
        if (!v) throw ParseError(where, "bad response code '" + part + "'");
        c.valid_codes.insert(static_cast<int>(*v));
      }
      if (c.valid_codes.empty()) throw ParseError(where, "valid_codes must not be empty");
    } else if (key == "nv_probe") {
      c.nv_probes.push_back(parse_nv_probe(value, where));
    } else {
      throw ParseError(where, "unknown key '" + std::string(key) + "'");
    }
  }
  for (const auto& [idx, text_] : deferred) c.behavior[idx].effect.recover_after = c.recover_after;
  return c;
}

SimConfig load_sim_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open sim config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_sim_config(ss.str(), path.string(), path.parent_path());
}

Simulator::Simulator(SimConfig config) : config_(std::move(config)) {}

namespace {

int rank(Latch::Kind k) { return static_cast<int>(k); }

}  // namespace

void Simulator::raise(Latch l) {
  expire();
  if (rank(l.kind) > rank(latch_.kind)) latch_ = l;
  else if (l.kind == Latch::Kind::Temporary && latch_.kind == Latch::Kind::Temporary)
    latch_.until = std::max(latch_.until, l.until);
}

void Simulator::expire() {
  if (latch_.kind == Latch::Kind::Temporary && tick_ >= latch_.until) latch_ = {};
}

Response Simulator::inject(std::span<const std::uint8_t> payload) {
  expire();
  const bool was_up = latch_.kind == Latch::Kind::None;
  const BehaviorRow* row = nullptr;
  for (const auto& r : config_.behavior) {
    if (r.matcher.matches(payload)) {
      row = &r;
      break;
    }
  }
  Response resp;
  if (!row) {
    resp.code = kRejected;
  } else {
    switch (row->effect.kind) {
      case Effect::Kind::Ok:
        resp.code = *config_.valid_codes.begin();
        resp.body = {'I', 'P', 'C', 0x00, payload.size() > 4 ? payload[4] : std::uint8_t{0}};
        break;
      case Effect::Kind::TemporaryCrash:
        raise({Latch::Kind::Temporary, tick_ + row->effect.recover_after});
        break;
      case Effect::Kind::RecoverableCrash:
        raise({Latch::Kind::Recoverable, 0});
        break;
      case Effect::Kind::PermanentCrash:
        raise({Latch::Kind::Permanent, 0});
        break;
    }
    if (row->effect.kind != Effect::Kind::Ok) resp.code = kNoService;
  }
  if (!was_up) {
    resp.code = kNoService;
    resp.body.clear();
  }
  log_.push_back({tick_, resp.code, {payload.begin(), payload.end()}});
  return resp;
}

ServiceState Simulator::query_state() const {
  if (latch_.kind == Latch::Kind::None) return ServiceState::InService;
  if (latch_.kind == Latch::Kind::Temporary && tick_ >= latch_.until) return ServiceState::InService;
  return ServiceState::OutOfService;
}

void Simulator::advance(std::int64_t ticks) {
  if (ticks < 0) throw Error("cannot advance by a negative tick count");
  tick_ += ticks;
  expire();
}

void Simulator::reboot() {
  if (latch_.kind != Latch::Kind::Permanent) latch_ = {};
}

void Simulator::reflash() { latch_ = {}; }

namespace {

bool has_dotdot(std::string_view path) { return path.find("..") != std::string_view::npos; }

bool under(const fs::path& p, const fs::path& root) {
  auto pi = p.begin();
  for (auto ri = root.begin(); ri != root.end(); ++ri, ++pi) {
    if (ri->empty()) continue;  // trailing separator
    if (pi == p.end() || *pi != *ri) return false;
  }
  return true;
}

}  // namespace

NvResult Simulator::nv_handle(const NvRequest& req) {
  NvResult r;
  if (req.path.empty()) {
    r.reason = "empty-path";
    return r;
  }
  if (config_.dotdot_check && has_dotdot(req.path)) {
    r.reason = "dotdot";
    return r;
  }
  std::error_code ec;
  const auto root = fs::weakly_canonical(config_.sandbox_root, ec);
  if (ec || !fs::is_directory(root)) {
    r.reason = "not-found";
    return r;
  }
  fs::path rel{req.path};
  rel = rel.relative_path();
  const auto joined = root / rel;
  const bool exists = fs::exists(joined, ec);
  if (!exists && req.op != NvRequest::Op::Write) {
    r.reason = "not-found";
    return r;
  }
  r.resolved = fs::weakly_canonical(joined, ec);
  if (ec) {
    r.reason = "io-error";
    return r;
  }
  r.escaped = !under(r.resolved, root);
  if (r.escaped && config_.symlink_check) {
    r.reason = "symlink-escape";
    return r;
  }
  switch (req.op) {
    case NvRequest::Op::Open:
      break;
    case NvRequest::Op::Read: {
      std::ifstream in(r.resolved, std::ios::binary);
      if (!in || fs::is_directory(r.resolved, ec)) {
        r.reason = "io-error";
        return r;
      }
      r.data.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
      break;
    }
    case NvRequest::Op::Write: {
      if (!fs::is_directory(r.resolved.parent_path(), ec)) {
        r.reason = "not-found";
        return r;
      }
      std::ofstream out(r.resolved, std::ios::binary | std::ios::trunc);
      out.write(reinterpret_cast<const char*>(req.data.data()), static_cast<std::streamsize>(req.data.size()));
      if (!out) {
        r.reason = "io-error";
        return r;
      }
      break;
    }
  }
  r.ok = true;
  return r;
}

}  // namespace rilmine::sim
