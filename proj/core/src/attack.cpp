// SPDX-License-Identifier: Apache-2.0
#include "rilmine/attack.hpp"

#include <sstream>

#include "rilmine/error.hpp"
#include "rilmine/util.hpp"

namespace rilmine::attack {

using sim::ServiceState;

std::string_view to_string(CrashClass c) {
  switch (c) {
    case CrashClass::None:
      return "none";
    case CrashClass::Temporary:
      return "temporary";
    case CrashClass::Recoverable:
      return "recoverable";
    case CrashClass::Permanent:
      return "permanent";
  }
  return "none";
}

ProbeReport probe_command(sim::Simulator& s, std::span<const std::uint8_t> payload) {
  ProbeReport r;
  r.payload.assign(payload.begin(), payload.end());
  r.trace.emplace_back("pre", s.query_state());
  r.codes.push_back(s.inject(payload).code);
  const auto post = s.query_state();
  r.trace.emplace_back("post-inject", post);
  if (post == ServiceState::InService) {
    r.observed = CrashClass::None;
  } else {
    const auto window = 2 * s.config().recover_after;
    bool recovered = false;
    for (std::int64_t t = 0; t < window && !recovered; ++t) {
      s.advance(1);
      recovered = s.query_state() == ServiceState::InService;
    }
    r.trace.emplace_back("post-recovery-window", s.query_state());
    if (recovered) {
      r.observed = CrashClass::Temporary;
    } else {
      s.reboot();
      r.rebooted = true;
      const auto after = s.query_state();
      r.trace.emplace_back("post-reboot", after);
      r.observed = after == ServiceState::InService ? CrashClass::Recoverable : CrashClass::Permanent;
    }
  }
  s.reflash();
  return r;
}

taint::PayloadBytes mutate(const taint::PayloadBytes& payload, MutationState& state) {
  std::vector<std::size_t> dynamic;
  for (std::size_t k = 0; k < payload.mask.size(); ++k)
    if (payload.mask[k] == taint::PayloadBytes::Mask::Dynamic) dynamic.push_back(k);
  if (dynamic.empty()) throw NoMutableBytes("payload has no dynamic bytes to mutate");
  auto out = payload;
  const auto pos = dynamic[state.rng() % dynamic.size()];
  auto& b = out.bytes[pos];
  switch (state.rng() % 5) {
    case 0:
      b ^= static_cast<std::uint8_t>(1u << (state.rng() % 8));
      break;
    case 1:
      ++b;
      break;
    case 2:
      --b;
      break;
    case 3:
      b = kInterestingBytes[state.rng() % std::size(kInterestingBytes)];
      break;
    default:
      b = static_cast<std::uint8_t>(state.rng() & 0xff);
      break;
  }
  return out;
}

std::vector<Finding> campaign(sim::Simulator& s, const cmd::CommandDB& db, std::size_t budget, std::uint64_t seed) {
  std::vector<Finding> findings;
  MutationState state(seed, budget);
  for (const auto& rec : db.records()) {
    if (rec.direction != cmd::Direction::Solicited || rec.payload.bytes.empty()) continue;
    if (rec.payload.is_static()) {
      const auto rep = probe_command(s, rec.payload.bytes);
      if (rep.observed != CrashClass::None) findings.push_back({rep.observed, rec.root_function, rep.payload, 1});
      continue;
    }
    if (budget == 0) continue;
    state.corpus = {rec.payload};
    state.history.clear();
    std::size_t spent = 0;
    auto run = [&](const taint::PayloadBytes& input) {
      ++spent;
      ++state.executions;
      const auto rep = probe_command(s, input.bytes);
      const auto sig = std::make_pair(rep.codes.front(), rep.trace[1].second);
      if (state.history.insert(sig).second && &input != &state.corpus.front()) state.corpus.push_back(input);
      if (rep.observed != CrashClass::None) {
        findings.push_back({rep.observed, rec.root_function, rep.payload, spent});
        return true;
      }
      return false;
    };
    if (run(state.corpus.front())) continue;
    while (spent < budget) {
      const auto& parent = state.corpus[state.rng() % state.corpus.size()];
      const auto child = mutate(parent, state);
      if (run(child)) break;
    }
  }
  return findings;
}

NvProbe probe_nv(sim::Simulator& s, const sim::NvRequest& req) {
  NvProbe p;
  p.request = req;
  p.result = s.nv_handle(req);
  p.escape = p.result.ok && p.result.escaped;
  return p;
}

std::string findings_tsv(const std::vector<Finding>& findings, const std::vector<NvProbe>& nv) {
  std::ostringstream os;
  os << "crash_type\troot_function\tpayload_hex\n";
  for (const auto& f : findings) os << to_string(f.crash) << '\t' << f.root_function << '\t' << util::to_hex(f.payload) << '\n';
  for (const auto& p : nv) {
    if (!p.escape) continue;
    const std::vector<std::uint8_t> path(p.request.path.begin(), p.request.path.end());
    const char* handler = p.request.op == sim::NvRequest::Op::Open   ? "Nv::ProcessOpenFile"
                          : p.request.op == sim::NvRequest::Op::Read ? "Nv::ProcessNvRead"
                                                                     : "Nv::ProcessNvWrite";
    os << "nv-escape\t" << handler << '\t' << util::to_hex(path) << '\n';
  }
  return os.str();
}

}  // namespace rilmine::attack
