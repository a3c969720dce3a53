// SPDX-License-Identifier: Apache-2.0
//
// rilmine: command extraction, diffing and simulated probing for vendor RIL
// programs in IR form.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "rilmine/forge.hpp"
#include "rilmine/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rilmine;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;

fs::path default_out() {
  if (const char* env = std::getenv("RILMINE_OUT"); env && *env) return env;
  return "rilmine-out";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rilmine: extract, diff and probe baseband commands from RIL programs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "rilmine 0.1.0");

  pipeline::PipelineConfig cfg;
  cfg.out_dir = default_out();
  std::optional<fs::path> filter_config;

  auto* analyze = app.add_subcommand("analyze", "analyze IR programs (or firmware trees) into command DBs");
  analyze->add_option("inputs", cfg.inputs, "IR program files or unpacked firmware directories")->required();
  analyze->add_option("--jobs,-j", cfg.jobs, "binaries analyzed in parallel")->check(CLI::Range(1, 1024));
  analyze->add_option("--out,-o", cfg.out_dir, "output directory (default $RILMINE_OUT or rilmine-out)");
  analyze->add_option("--filter-config", filter_config, "JSON analysis settings")->check(CLI::ExistingFile);

  fs::path base_db, cur_db;
  auto* diff = app.add_subcommand("diff", "compare two command DB files");
  diff->add_option("base", base_db, "baseline DB")->required()->check(CLI::ExistingFile);
  diff->add_option("current", cur_db, "compared DB")->required()->check(CLI::ExistingFile);

  fs::path sim_config, db_file;
  auto* sim = app.add_subcommand("sim", "probe a DB's solicited commands against the modem simulator");
  sim->add_option("db", db_file, "command DB file")->required()->check(CLI::ExistingFile);
  sim->add_option("--sim-config", sim_config, "simulator behavior table")->required()->check(CLI::ExistingFile);
  sim->add_option("--seed", cfg.seed, "mutation seed");
  sim->add_option("--budget", cfg.budget, "probes per hybrid command");
  auto* sim_out = sim->add_option("--out,-o", cfg.out_dir, "directory for findings.tsv");

  std::string kind;
  auto* fixtures = app.add_subcommand("fixtures", "emit a synthetic program with its expected-results manifest");
  fixtures->add_option("kind", kind, "fixture kind (see --list)");
  fixtures->add_option("--seed", cfg.seed, "generator seed");
  fixtures->add_option("--out,-o", cfg.out_dir, "output directory");
  bool list_kinds = false;
  fixtures->add_flag("--list", list_kinds, "print the available kinds");

  fs::path root;
  auto* locate = app.add_subcommand("locate", "find the vendor RIL library in an unpacked firmware tree");
  locate->add_option("root", root, "firmware root")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }
  const bool sim_out_set = sim_out->count() > 0;

  try {
    if (*analyze) {
      if (filter_config) cfg.filter = load_config_file(*filter_config);
      const auto rep = pipeline::analyze(cfg);
      std::cout << rep.summary;
      for (const auto& r : rep.results)
        if (!r.ok) std::cerr << r.input.string() << ": " << r.error << "\n";
      return rep.exit_code;
    }
    if (*diff) {
      std::cout << pipeline::diff_cmd(base_db, cur_db).text;
      return kExitOk;
    }
    if (*sim) {
      const auto rep = pipeline::sim_cmd(sim_config, db_file, cfg.budget, cfg.seed,
                                         sim_out_set || std::getenv("RILMINE_OUT") ? cfg.out_dir : fs::path{});
      std::cout << rep.tsv;
      return kExitOk;
    }
    if (*fixtures) {
      if (list_kinds) {
        for (const auto& k : forge::fixture_kinds()) std::cout << k << "\n";
        return kExitOk;
      }
      if (kind.empty()) throw pipeline::UsageError("fixtures: missing kind");
      for (const auto& p : pipeline::fixtures_cmd(kind, cfg.seed, cfg.out_dir)) std::cout << p.string() << "\n";
      return kExitOk;
    }
    if (*locate) {
      const auto loc = pipeline::locate_ril_library(root);
      for (const auto& line : loc.log) std::cerr << line << "\n";
      std::cout << loc.library.string() << "\n";
      return kExitOk;
    }
  } catch (const pipeline::UsageError& e) {
    std::cerr << "rilmine: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "rilmine: " << e.what() << "\n";
    return kExitFailed;
  }
  return kExitUsage;
}
