// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "rilmine/callgraph.hpp"
#include "rilmine/channel.hpp"
#include "rilmine/forge.hpp"
#include "rilmine/error.hpp"
#include "rilmine/regex.hpp"
#include "rilmine/taint.hpp"

using namespace rilmine;

namespace {

chan::ChannelResolution resolve_first(const forge::Fixture& fx, const AnalysisConfig& config = {}) {
  const auto g = cg::build_call_graph(fx.program);
  const auto qs = taint::find_sources(fx.program);
  if (qs.empty()) throw std::runtime_error("no source site");
  return chan::resolve_channel(fx.program, g, qs.front().site, 0, config);
}

bool reference_match(const std::string& s) {
  static const std::regex re(std::string(chan::kDevicePathPattern), std::regex::ECMAScript);
  return std::regex_match(s, re);
}

}  // namespace

TEST(DevicePath, Examples) {
  EXPECT_TRUE(chan::match_device_path("/dev/umts_ipc0"));
  EXPECT_FALSE(chan::match_device_path("/efs/imei/selective"));
  EXPECT_FALSE(chan::match_device_path("/dev"));
  EXPECT_FALSE(chan::match_device_path("/dev/a b"));
  EXPECT_TRUE(chan::match_device_path("/dev/block/sda"));
  EXPECT_EQ(chan::match_device_path("/dev/"), reference_match("/dev/"));
  EXPECT_TRUE(chan::match_device_path("/dev/"));
}

TEST(DevicePath, AgreesWithReferenceEngine) {
  std::mt19937_64 rng(11);
  const std::string alphabet = "/dev ab0_.";
  for (int n = 0; n < 3000; ++n) {
    std::string s = (n % 2 == 0) ? "/dev/" : "";
    const auto len = rng() % 9;
    for (std::size_t k = 0; k < len; ++k) s += alphabet[rng() % alphabet.size()];
    ASSERT_EQ(chan::match_device_path(s), reference_match(s)) << '"' << s << '"';
  }
}

TEST(Regex, Basics) {
  EXPECT_TRUE(rx::Regex("a(b|c)*d").full_match("abcbd"));
  EXPECT_FALSE(rx::Regex("a(b|c)*d").full_match("abxd"));
  EXPECT_TRUE(rx::Regex("b+").search("aabbb"));
  EXPECT_TRUE(rx::Regex("[^/ ]*").full_match(""));
  EXPECT_TRUE(rx::Regex("\\.x").full_match(".x"));
  EXPECT_THROW(rx::Regex("(a"), ParseError);
  EXPECT_THROW(rx::Regex("[a"), ParseError);
}

TEST(Regex, NestedQuantifiersStayLinear) {
  const std::string long_path = "/dev/" + std::string(20000, 'a') + " ";
  EXPECT_FALSE(chan::match_device_path(long_path));
}

TEST(ResolveChannel, Fig2KeepsDevNode) {
  const auto r = resolve_first(forge::gen_fig2());
  EXPECT_TRUE(r.keep);
  EXPECT_EQ(r.fd_origin().kind, chan::FdOrigin::Kind::OpenFamily);
  EXPECT_EQ(r.channel, "/dev/umts_ipc0");
}

TEST(ResolveChannel, Fig6DiscardsEfsPath) {
  const auto r = resolve_first(forge::gen_fig6(forge::Fig6Variant::Efs));
  EXPECT_FALSE(r.keep);
  EXPECT_EQ(r.reason, "non-dev-path");
  EXPECT_EQ(r.fd_origin().path, "/efs/imei/selective");
}

TEST(ResolveChannel, PipeDiscardedWithoutPath) {
  const auto r = resolve_first(forge::gen_fig6(forge::Fig6Variant::Pipe));
  EXPECT_FALSE(r.keep);
  EXPECT_EQ(r.reason, "pipe");
  EXPECT_EQ(r.fd_origin().kind, chan::FdOrigin::Kind::Pipe);
  EXPECT_TRUE(r.fd_origin().path.empty());
}

TEST(ResolveChannel, SocketsFollowConfig) {
  forge::ProgramBuilder pb("sock");
  pb.use_external("socket");
  pb.use_external("sendto");
  auto f = pb.add_function("SendUdp", "SendUdp", std::nullopt, {}, {}, 0x10);
  const auto fd = *f.call_ext("socket", {ir::constant(2), ir::constant(2), ir::constant(0)}, true);
  f.store_bytes(0, {0x07, 0, 0, 0, 1, 2, 3});
  f.call_ext("sendto", {fd, f.frame_addr(0), ir::constant(7)});
  f.ret();
  forge::Fixture fx{pb.finish(), {}};
  const auto off = resolve_first(fx);
  EXPECT_FALSE(off.keep);
  EXPECT_EQ(off.reason, "socket");
  AnalysisConfig keep;
  keep.keep_sockets = true;
  EXPECT_TRUE(resolve_first(fx, keep).keep);
}

TEST(FilterCommands, Fig2PlusFig6KeepsOnlyFig2) {
  const auto fx = forge::gen_fig2_fig6();
  const auto g = cg::build_call_graph(fx.program);
  const auto r = chan::filter_commands(fx.program, g);
  ASSERT_EQ(r.db.size(), 1u);
  EXPECT_EQ(r.db.records()[0].root_function, "IpcTxCallGetCallList");
  EXPECT_EQ(r.counters.sites, 2u);
  EXPECT_EQ(r.counters.discarded, 1u);
}

TEST(FilterCommands, TwoFdsOneRecord) {
  const auto fx = forge::gen_two_fds();
  const auto r = chan::filter_commands(fx.program, cg::build_call_graph(fx.program));
  ASSERT_EQ(r.db.size(), 1u);
  EXPECT_EQ(r.db.records()[0].channel, "/dev/umts_ipc0");
}

TEST(FilterCommands, EmptyProgram) {
  forge::ProgramBuilder pb("empty");
  pb.add_function("f", "f", std::nullopt, {}).ret();
  const auto p = pb.finish();
  const auto r = chan::filter_commands(p, cg::build_call_graph(p));
  EXPECT_TRUE(r.db.empty());
  EXPECT_EQ(r.counters.sites, 0u);
}

TEST(FilterProperty, DiscardedSitesAreNeverTainted) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto fx = forge::gen_random(seed);
    const auto r = chan::filter_commands(fx.program, cg::build_call_graph(fx.program));
    EXPECT_EQ(r.counters.taint_queries, r.counters.kept) << seed;
    EXPECT_EQ(r.counters.kept + r.counters.discarded, r.counters.sites) << seed;
    for (const auto& res : r.resolutions) {
      if (res.keep) {
        EXPECT_EQ(res.channel.rfind("/dev/", 0), 0u) << seed;
      }
      for (const auto& o : res.origins)
        if (o.kind == chan::FdOrigin::Kind::Pipe) { EXPECT_FALSE(res.keep); }
    }
  }
}
