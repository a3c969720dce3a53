// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "rilmine/forge.hpp"
#include "rilmine/ir_io.hpp"
#include "rilmine/pipeline.hpp"
#include "support/temp_dir.hpp"

using namespace rilmine;
namespace fs = std::filesystem;
using rilmine::testing::TempDir;

namespace {

fs::path emit(const TempDir& dir, const std::string& kind) {
  return pipeline::fixtures_cmd(kind, 1, dir / "in").front();
}

}  // namespace

TEST(Locate, VendorBuildProp) {
  TempDir t;
  t.write("fw/vendor/build.prop", "# comment\nro.x=1\nvendor.rild.libpath=/vendor/lib64/libsec-ril.so\n");
  t.write("fw/vendor/lib64/libsec-ril.so", "elf");
  const auto r = pipeline::locate_ril_library(t / "fw");
  EXPECT_EQ(r.library, t / "fw/vendor/lib64/libsec-ril.so");
  EXPECT_EQ(r.build_prop, t / "fw/vendor/build.prop");
  EXPECT_TRUE(r.log.empty());
}

TEST(Locate, KeyAbsent) {
  TempDir t;
  t.write("fw/system/build.prop", "ro.build=1\n");
  try {
    pipeline::locate_ril_library(t / "fw");
    FAIL();
  } catch (const pipeline::LocateError& e) {
    EXPECT_NE(std::string(e.what()).find("not set"), std::string::npos) << e.what();
  }
}

TEST(Locate, NoBuildPropOrMissingTarget) {
  TempDir t;
  fs::create_directories(t / "fw/system");
  EXPECT_THROW(pipeline::locate_ril_library(t / "fw"), pipeline::LocateError);
  t.write("fw/system/build.prop", "vendor.rild.libpath=/vendor/lib64/nothere.so\n");
  EXPECT_THROW(pipeline::locate_ril_library(t / "fw"), pipeline::LocateError);
  EXPECT_THROW(pipeline::locate_ril_library(t / "missing"), pipeline::LocateError);
}

TEST(Locate, SystemWinsAndOthersAreLogged) {
  TempDir t;
  t.write("fw/system/build.prop", "vendor.rild.libpath=/system/lib64/a.so\n");
  t.write("fw/vendor/build.prop", "vendor.rild.libpath=/vendor/lib64/b.so\n");
  t.write("fw/system/lib64/a.so", "");
  t.write("fw/vendor/lib64/b.so", "");
  const auto r = pipeline::locate_ril_library(t / "fw");
  EXPECT_EQ(r.library, t / "fw/system/lib64/a.so");
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_NE(r.log[0].find("vendor/build.prop"), std::string::npos) << r.log[0];
}

TEST(Locate, LexicographicWithinPartition) {
  TempDir t;
  t.write("fw/vendor/b/build.prop", "vendor.rild.libpath=/vendor/b.so\n");
  t.write("fw/vendor/a/build.prop", "vendor.rild.libpath=/vendor/a.so\n");
  t.write("fw/vendor/a.so", "");
  t.write("fw/vendor/b.so", "");
  EXPECT_EQ(pipeline::locate_ril_library(t / "fw").library, t / "fw/vendor/a.so");
}

TEST(Analyze, Fig2GivesOneSolicitedCommand) {
  TempDir t;
  pipeline::PipelineConfig c;
  c.inputs = {emit(t, "fig2")};
  c.out_dir = t / "out";
  const auto rep = pipeline::analyze(c);
  EXPECT_EQ(rep.exit_code, 0);
  ASSERT_EQ(rep.results.size(), 1u);
  EXPECT_EQ(rep.results[0].solicited, 1u);
  EXPECT_EQ(rep.results[0].unsolicited, 0u);
  const auto db = cmd::load_db_file(t / "out" / rep.results[0].db_file);
  ASSERT_EQ(db.size(), 1u);
  EXPECT_EQ(db.records()[0].module, "Call");
  EXPECT_TRUE(fs::exists(t / "out/summary.tsv"));
  EXPECT_TRUE(fs::exists(t / "out/fig2.modules.txt"));
  EXPECT_TRUE(fs::exists(t / "out/fig2.log"));
}

TEST(Analyze, SummaryIndependentOfJobs) {
  TempDir t;
  std::vector<fs::path> inputs;
  for (const char* k : {"fig2", "fig5", "table5"}) inputs.push_back(emit(t, k));
  std::vector<std::string> summaries;
  for (int jobs : {1, 2, 3}) {
    pipeline::PipelineConfig c;
    c.inputs = inputs;
    c.jobs = jobs;
    c.out_dir = t / ("out" + std::to_string(jobs));
    pipeline::analyze(c);
    summaries.push_back(rilmine::testing::read_file(c.out_dir / "summary.tsv"));
  }
  EXPECT_EQ(summaries[0], summaries[1]);
  EXPECT_EQ(summaries[0], summaries[2]);
  EXPECT_EQ(rilmine::testing::read_file(t / "out1/table5.db.tsv"), rilmine::testing::read_file(t / "out3/table5.db.tsv"));
}

TEST(Analyze, BadInputIsIsolated) {
  TempDir t;
  pipeline::PipelineConfig c;
  c.inputs = {emit(t, "fig2"), t.write("broken.ir.json", "{ not json"), emit(t, "fig5")};
  c.jobs = 2;
  c.out_dir = t / "out";
  const auto rep = pipeline::analyze(c);
  EXPECT_EQ(rep.exit_code, 1);
  ASSERT_EQ(rep.results.size(), 3u);
  EXPECT_FALSE(rep.results[0].ok);
  EXPECT_EQ(rep.results[0].binary, "broken");
  EXPECT_TRUE(rep.results[1].ok);
  EXPECT_TRUE(rep.results[2].ok);
  EXPECT_NE(rep.summary.find("# binaries=3 failed=1"), std::string::npos);
}

TEST(Analyze, ValidationErrorsFailTheBinary) {
  TempDir t;
  auto p = forge::gen_fig2().program;
  p.functions[0].params.clear();
  pipeline::PipelineConfig c;
  c.inputs = {t.write("bad.ir.json", ir::serialize(p))};
  c.out_dir = t / "out";
  const auto rep = pipeline::analyze(c);
  EXPECT_EQ(rep.exit_code, 1);
  EXPECT_FALSE(rep.results[0].validation.empty());
}

TEST(Analyze, FirmwareTreeInput) {
  TempDir t;
  t.write("fw/vendor/build.prop", "vendor.rild.libpath=/vendor/lib64/libsec-ril.so\n");
  t.write("fw/vendor/lib64/libsec-ril.so", "");
  t.write("fw/vendor/lib64/libsec-ril.so.ir.json", ir::serialize(forge::gen_fig2().program));
  pipeline::PipelineConfig c;
  c.inputs = {t / "fw"};
  c.out_dir = t / "out";
  const auto rep = pipeline::analyze(c);
  ASSERT_EQ(rep.exit_code, 0) << rep.results[0].error;
  EXPECT_EQ(rep.results[0].binary, "fw");
  EXPECT_EQ(rep.results[0].solicited, 1u);
}

TEST(Analyze, UsageErrors) {
  pipeline::PipelineConfig c;
  EXPECT_THROW(pipeline::analyze(c), pipeline::UsageError);
  c.inputs = {"a/x.ir.json", "b/x.ir.json"};
  EXPECT_THROW(pipeline::analyze(c), pipeline::UsageError);
  c.jobs = 0;
  EXPECT_THROW(pipeline::analyze(c), pipeline::UsageError);
}

TEST(DiffCmd, IdenticalDbsEmpty) {
  TempDir t;
  pipeline::PipelineConfig c;
  c.inputs = {emit(t, "table5")};
  c.out_dir = t / "out";
  pipeline::analyze(c);
  const auto r = pipeline::diff_cmd(t / "out/table5.db.tsv", t / "out/table5.db.tsv");
  EXPECT_TRUE(r.diff.base_unique.empty());
  EXPECT_TRUE(r.diff.cur_unique.empty());
}

TEST(SimCmd, Table5SevenFindings) {
  TempDir t;
  const auto files = pipeline::fixtures_cmd("table5", 1, t / "in");
  pipeline::PipelineConfig c;
  c.inputs = {files[0]};
  c.out_dir = t / "out";
  pipeline::analyze(c);
  const auto r = pipeline::sim_cmd(files[2], t / "out/table5.db.tsv", 1000, 1, t / "out");
  EXPECT_EQ(r.findings.size(), 7u);
  EXPECT_TRUE(fs::exists(t / "out/findings.tsv"));
}

TEST(FixturesCmd, FilesLoadBack) {
  TempDir t;
  const auto files = pipeline::fixtures_cmd("fig6", 1, t.path());
  ASSERT_EQ(files.size(), 2u);
  const auto p = ir::load_program_file(files[0]);
  EXPECT_EQ(p, forge::gen_fig6().program);
  EXPECT_EQ(forge::parse_manifest(rilmine::testing::read_file(files[1])), forge::gen_fig6().manifest);
  EXPECT_THROW(pipeline::fixtures_cmd("nope", 1, t.path()), pipeline::UsageError);
}

#ifdef RILMINE_CLI_PATH

namespace {

int run_cli(const std::string& args, const TempDir& t) {
  const std::string cmd = std::string(RILMINE_CLI_PATH) + " " + args + " > " + (t / "stdout").string() + " 2> " +
                          (t / "stderr").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  TempDir t;
  const auto dir = t.path().string();
  EXPECT_EQ(run_cli("fixtures fig2 --out " + dir + "/in", t), 0);
  EXPECT_EQ(run_cli("analyze " + dir + "/in/fig2.ir.json --out " + dir + "/out", t), 0);
  t.write("bad.ir.json", "{");
  EXPECT_EQ(run_cli("analyze " + dir + "/in/fig2.ir.json " + dir + "/bad.ir.json --out " + dir + "/out2", t), 1);
  EXPECT_EQ(run_cli("analyze --jobs 0 " + dir + "/in/fig2.ir.json", t), 2);
  EXPECT_EQ(run_cli("frobnicate", t), 2);
  EXPECT_EQ(run_cli("fixtures nope --out " + dir, t), 2);
  EXPECT_EQ(run_cli("--help", t), 0);
  EXPECT_EQ(run_cli("diff " + dir + "/out/fig2.db.tsv " + dir + "/out/fig2.db.tsv", t), 0);
  EXPECT_EQ(run_cli("diff " + dir + "/missing.tsv " + dir + "/out/fig2.db.tsv", t), 2);
  t.write("junk.tsv", "not a db\n");
  EXPECT_EQ(run_cli("diff " + dir + "/junk.tsv " + dir + "/out/fig2.db.tsv", t), 1);
}

TEST(Cli, EnvironmentSetsDefaultOutDir) {
  TempDir t;
  const auto dir = t.path().string();
  ASSERT_EQ(run_cli("fixtures fig2 --out " + dir + "/in", t), 0);
  EXPECT_EQ(run_cli("", t), 2);
  const std::string env = "RILMINE_OUT=" + dir + "/envout ";
  const std::string cmd = env + RILMINE_CLI_PATH + " analyze " + dir + "/in/fig2.ir.json > /dev/null 2>&1";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(t / "envout/summary.tsv"));
}

TEST(Cli, LocateAndSim) {
  TempDir t;
  const auto dir = t.path().string();
  t.write("fw/vendor/build.prop", "vendor.rild.libpath=/vendor/lib64/libsec-ril.so\n");
  t.write("fw/vendor/lib64/libsec-ril.so", "");
  EXPECT_EQ(run_cli("locate " + dir + "/fw", t), 0);
  EXPECT_NE(rilmine::testing::read_file(t / "stdout").find("libsec-ril.so"), std::string::npos);
  EXPECT_EQ(run_cli("locate " + dir + "/nothing", t), 2);
  fs::create_directories(t / "empty");
  EXPECT_EQ(run_cli("locate " + dir + "/empty", t), 1);
  ASSERT_EQ(run_cli("fixtures table5 --out " + dir + "/in", t), 0);
  ASSERT_EQ(run_cli("analyze " + dir + "/in/table5.ir.json --out " + dir + "/out", t), 0);
  EXPECT_EQ(run_cli("sim " + dir + "/out/table5.db.tsv --sim-config " + dir + "/in/table5.sim --out " + dir + "/out", t), 0);
  const auto findings = rilmine::testing::read_file(t / "out/findings.tsv");
  EXPECT_EQ(std::count(findings.begin(), findings.end(), '\n'), 8);
}

#endif
