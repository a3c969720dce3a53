// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <map>
#include <random>

#include "rilmine/attack.hpp"
#include "rilmine/callgraph.hpp"
#include "rilmine/channel.hpp"
#include "rilmine/error.hpp"
#include "rilmine/forge.hpp"
#include "support/temp_dir.hpp"

using namespace rilmine;
using attack::CrashClass;

namespace {

cmd::CommandDB analyzed(const forge::Fixture& fx) {
  return chan::filter_commands(fx.program, cg::build_call_graph(fx.program), {}, fx.program.name).db;
}

CrashClass class_of(const sim::Effect& e) {
  switch (e.kind) {
    case sim::Effect::Kind::Ok: return CrashClass::None;
    case sim::Effect::Kind::TemporaryCrash: return CrashClass::Temporary;
    case sim::Effect::Kind::RecoverableCrash: return CrashClass::Recoverable;
    case sim::Effect::Kind::PermanentCrash: return CrashClass::Permanent;
  }
  return CrashClass::None;
}

}  // namespace

TEST(Probe, Table5Classes) {
  sim::Simulator s(sim::parse_sim_config(forge::table5_sim_config()));
  std::map<CrashClass, int> counts;
  const auto db = analyzed(forge::gen_table5());
  ASSERT_EQ(db.size(), 7u);
  for (const auto& r : db.records()) ++counts[attack::probe_command(s, r.payload.bytes).observed];
  EXPECT_EQ(counts[CrashClass::Temporary], 3);
  EXPECT_EQ(counts[CrashClass::Recoverable], 1);
  EXPECT_EQ(counts[CrashClass::Permanent], 3);
  EXPECT_EQ(s.query_state(), sim::ServiceState::InService);
}

TEST(Probe, BenignIsNone) {
  sim::Simulator s(sim::parse_sim_config("01 -> ok\n"));
  const std::vector<std::uint8_t> p{1};
  const auto r = attack::probe_command(s, p);
  EXPECT_EQ(r.observed, CrashClass::None);
  EXPECT_EQ(r.trace.size(), 2u);
  EXPECT_FALSE(r.rebooted);
}

TEST(Probe, SlowRecoveryLooksRecoverable) {
  sim::Simulator s(sim::parse_sim_config("recover_after = 3\n01 -> temporary_crash(7)\n"));
  const std::vector<std::uint8_t> p{1};
  const auto r = attack::probe_command(s, p);
  EXPECT_EQ(r.observed, CrashClass::Recoverable);
  EXPECT_TRUE(r.rebooted);
  ASSERT_EQ(r.trace.size(), 4u);
  EXPECT_EQ(r.trace[3].first, "post-reboot");
}

TEST(ProbeProperty, AgreesWithConfiguredEffect) {
  std::mt19937_64 rng(8);
  const char* effects[] = {"ok", "temporary_crash(1)", "temporary_crash(3)", "temporary_crash(6)",
                           "recoverable_crash", "permanent_crash"};
  for (int n = 0; n < 200; ++n) {
    const auto e = effects[rng() % std::size(effects)];
    const auto c = sim::parse_sim_config("recover_after = 3\n0a 0b .. -> " + std::string(e) + "\n");
    sim::Simulator s(c);
    const std::vector<std::uint8_t> p{0x0a, 0x0b, static_cast<std::uint8_t>(rng())};
    const auto& eff = c.behavior[0].effect;
    // A temporary crash slower than the probe's window reads as recoverable.
    auto expected = class_of(eff);
    if (eff.kind == sim::Effect::Kind::TemporaryCrash && eff.recover_after > 2 * c.recover_after)
      expected = CrashClass::Recoverable;
    EXPECT_EQ(attack::probe_command(s, p).observed, expected) << e;
  }
}

TEST(Mutate, OnlyDynamicByteChanges) {
  auto pb = *taint::parse_payload_dump("08 00 00 00 01 02 03 ..");
  attack::MutationState st(1);
  for (int n = 0; n < 500; ++n) {
    const auto m = attack::mutate(pb, st);
    for (std::size_t k = 0; k < 7; ++k) ASSERT_EQ(m.bytes[k], pb.bytes[k]);
    ASSERT_EQ(m.mask, pb.mask);
  }
}

TEST(Mutate, InterestingValuesReachable) {
  auto pb = *taint::parse_payload_dump("08 00 00 00 01 02 03 ..");
  attack::MutationState st(1);
  std::set<std::uint8_t> seen;
  for (int n = 0; n < 2000; ++n) seen.insert(attack::mutate(pb, st).bytes[7]);
  for (auto b : attack::kInterestingBytes) EXPECT_TRUE(seen.contains(b)) << int(b);
}

TEST(Mutate, StaticPayloadThrows) {
  auto pb = *taint::parse_payload_dump("07 00 00 00 01 03 05");
  attack::MutationState st(1);
  EXPECT_THROW(attack::mutate(pb, st), NoMutableBytes);
}

TEST(Mutate, SeededSequenceIsReproducible) {
  auto pb = *taint::parse_payload_dump(".. 00 .. ..");
  attack::MutationState a(99), b(99);
  for (int n = 0; n < 100; ++n) ASSERT_EQ(attack::mutate(pb, a), attack::mutate(pb, b));
}

TEST(MutateProperty, StaticBytesNeverChange) {
  std::mt19937_64 rng(4);
  attack::MutationState st(7);
  for (int n = 0; n < 2000; ++n) {
    taint::PayloadBytes pb;
    const auto len = 1 + rng() % 16;
    for (std::size_t k = 0; k < len; ++k) {
      const bool dyn = rng() % 3 == 0;
      pb.bytes.push_back(dyn ? 0 : static_cast<std::uint8_t>(rng()));
      pb.mask.push_back(dyn ? taint::PayloadBytes::Mask::Dynamic : taint::PayloadBytes::Mask::Static);
    }
    if (pb.is_static()) {
      EXPECT_THROW(attack::mutate(pb, st), NoMutableBytes);
      continue;
    }
    auto m = pb;
    for (int step = 0; step < 5; ++step) m = attack::mutate(m, st);
    for (std::size_t k = 0; k < len; ++k)
      if (pb.mask[k] == taint::PayloadBytes::Mask::Static) { ASSERT_EQ(m.bytes[k], pb.bytes[k]); }
  }
}

TEST(Campaign, Table5FindingsAllRecovered) {
  sim::Simulator s(sim::parse_sim_config(forge::table5_sim_config()));
  const auto findings = attack::campaign(s, analyzed(forge::gen_table5()), 100, 1);
  ASSERT_EQ(findings.size(), 7u);
  std::map<std::string, CrashClass> by_root;
  for (const auto& f : findings) by_root[f.root_function] = f.crash;
  EXPECT_EQ(by_root.at("IpcProtocol41Power::IpcTxResetOemModem"), CrashClass::Temporary);
  EXPECT_EQ(by_root.at("IpcProtocol41Sap::IpcTxGetSapTransferApdu"), CrashClass::Temporary);
  EXPECT_EQ(by_root.at("IpcProtocol41Imei::IpcTxImeiPreconfigSet"), CrashClass::Temporary);
  EXPECT_EQ(by_root.at("IpcProtocol41Power::IpcTxModemPowerOff"), CrashClass::Recoverable);
  EXPECT_EQ(by_root.at("IpcProtocol41Net::IpcTxSetSystemSelectionChannels"), CrashClass::Permanent);
  EXPECT_EQ(by_root.at("IpcProtocol41Domestic::IpcTxDomesticSetChannelSettingLte"), CrashClass::Permanent);
  EXPECT_EQ(by_root.at("IpcProtocol41Domestic::IpcTxDomesticGetNsriDecryptSms"), CrashClass::Permanent);
}

TEST(Campaign, PlantedByteFoundWithinBound) {
  sim::Simulator s(sim::parse_sim_config(forge::planted_ff_sim_config()));
  const auto findings = attack::campaign(s, analyzed(forge::gen_hybrid(forge::HybridKind::Direct)), 10000, 1);
  ASSERT_EQ(findings.size(), 1u);
  EXPECT_EQ(findings[0].crash, CrashClass::Permanent);
  EXPECT_EQ(findings[0].payload.back(), 0xff);
  EXPECT_LE(findings[0].executions, 10000u);
}

TEST(Campaign, ZeroBudgetProbesStaticOnly) {
  sim::Simulator s(sim::parse_sim_config(forge::table5_sim_config()));
  const auto findings = attack::campaign(s, analyzed(forge::gen_table5()), 0, 1);
  EXPECT_EQ(findings.size(), 2u);
}

TEST(Campaign, EmptyDb) {
  sim::Simulator s(sim::parse_sim_config(forge::table5_sim_config()));
  EXPECT_TRUE(attack::campaign(s, cmd::CommandDB{}, 100, 1).empty());
}

TEST(CampaignProperty, DeterministicUnderSeed) {
  const auto db = analyzed(forge::gen_hybrid(forge::HybridKind::Direct));
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    sim::Simulator a(sim::parse_sim_config(forge::planted_ff_sim_config()));
    sim::Simulator b(sim::parse_sim_config(forge::planted_ff_sim_config()));
    EXPECT_EQ(attack::campaign(a, db, 5000, seed), attack::campaign(b, db, 5000, seed));
  }
}

TEST(NvProbe, EscapeReportedInFindings) {
  rilmine::testing::TempDir dir;
  dir.write("box/keep", "x");
  dir.write("out/secret", "s");
  std::filesystem::create_directory_symlink(dir / "out", dir / "box/link");
  sim::SimConfig c;
  c.sandbox_root = dir / "box";
  sim::Simulator open(c);
  const auto p = attack::probe_nv(open, {sim::NvRequest::Op::Read, "link/secret", {}});
  EXPECT_TRUE(p.escape);
  EXPECT_NE(attack::findings_tsv({}, {p}).find("nv-escape\tNv::ProcessNvRead\t"), std::string::npos);
  c.symlink_check = true;
  sim::Simulator closed(c);
  const auto q = attack::probe_nv(closed, {sim::NvRequest::Op::Read, "link/secret", {}});
  EXPECT_FALSE(q.escape);
  EXPECT_EQ(q.result.reason, "symlink-escape");
  EXPECT_EQ(attack::findings_tsv({}, {q}), "crash_type\troot_function\tpayload_hex\n");
}
