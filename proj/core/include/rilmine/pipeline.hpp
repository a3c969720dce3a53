// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration behind the `rilmine` command line: firmware
// layout lookup, batch analysis, diffing, simulation campaigns and fixture
// emission.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rilmine/attack.hpp"
#include "rilmine/channel.hpp"
#include "rilmine/config.hpp"
#include "rilmine/error.hpp"
#include "rilmine/ir_io.hpp"

namespace rilmine::pipeline {

/// Bad command-line input (exit code 2).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Failure to find the RIL library in an unpacked firmware tree.
class LocateError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::string_view kLibPathKey = "vendor.rild.libpath";

struct LocateResult {
  std::filesystem::path library;
  std::filesystem::path build_prop;  // where the key was found
  std::vector<std::string> log;      // other matches that were passed over
};

/// Scans build.prop files under system/, vendor/ and super/ (in that order,
/// each walked lexicographically) and returns the first vendor.rild.libpath
/// value resolved against `root`.
LocateResult locate_ril_library(const std::filesystem::path& root);

struct PipelineConfig {
  std::vector<std::filesystem::path> inputs;
  int jobs = 1;
  AnalysisConfig filter;
  std::filesystem::path out_dir = "rilmine-out";
  std::optional<std::filesystem::path> sim_config;
  std::uint64_t seed = 1;
  std::size_t budget = 10000;
};

struct BinaryResult {
  std::string binary;  // input file stem
  std::filesystem::path input;
  bool ok = false;
  std::string error;
  std::vector<ir::Diagnostic> validation;
  chan::FilterCounters counters;
  std::size_t solicited = 0;
  std::size_t unsolicited = 0;
  std::size_t virtual_edges = 0;
  std::size_t unresolved_vcalls = 0;
  std::filesystem::path db_file;
  std::vector<std::string> diagnostics;
};

/// `input` is an IR file, or a firmware tree whose located library has a
/// lifted `<library>.ir.json` beside it. Steps: load, validate, call graph, vcall recovery, channel filter and taint,
/// module labels. Writes `<binary>.db.tsv`, `<binary>.modules.txt` and
/// `<binary>.log` into `out_dir`. Never throws for per-binary failures.
BinaryResult analyze_one(const std::filesystem::path& input, const AnalysisConfig& config,
                         const std::filesystem::path& out_dir);

struct AnalyzeReport {
  std::vector<BinaryResult> results;  // sorted by binary name
  std::string summary;
  int exit_code = 0;  // 0 ok, 1 some binary failed
};

/// Runs up to `jobs` binaries at once and writes `summary.tsv`. The summary
/// depends only on the inputs, not on `jobs`.
AnalyzeReport analyze(const PipelineConfig& config);
std::string format_summary(const std::vector<BinaryResult>& results);

struct DiffReport {
  cmd::DiffResult diff;
  std::string text;
};

DiffReport diff_cmd(const std::filesystem::path& base_db, const std::filesystem::path& cur_db);

struct SimReport {
  std::vector<attack::Finding> findings;
  std::vector<attack::NvProbe> nv;
  std::string tsv;
};

/// Campaign over `db_file` against the configured simulator; writes
/// `findings.tsv` into `out_dir` when it is not empty.
SimReport sim_cmd(const std::filesystem::path& sim_config, const std::filesystem::path& db_file,
                  std::size_t budget, std::uint64_t seed, const std::filesystem::path& out_dir = {});

/// Writes `<name>.ir.json` and `<name>.manifest.json` (plus `<name>.sim`
/// for kinds with a behavior table). Returns the written paths.
std::vector<std::filesystem::path> fixtures_cmd(const std::string& kind, std::uint64_t seed,
                                                const std::filesystem::path& out_dir);

}  // namespace rilmine::pipeline
