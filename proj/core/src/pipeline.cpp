// SPDX-License-Identifier: Apache-2.0
#include "rilmine/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "rilmine/callgraph.hpp"
#include "rilmine/forge.hpp"
#include "rilmine/util.hpp"

namespace rilmine::pipeline {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

std::vector<fs::path> build_props(const fs::path& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (auto it = fs::recursive_directory_iterator(dir, fs::directory_options::skip_permission_denied, ec);
       !ec && it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (it->path().filename() == "build.prop" && it->is_regular_file(ec)) out.push_back(it->path());
  }
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });
  return out;
}

std::optional<std::string> prop_value(const fs::path& file, std::string_view key) {
  std::ifstream in(file);
  std::string line;
  while (std::getline(in, line)) {
    auto t = util::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) continue;
    if (util::trim(t.substr(0, eq)) == key) return std::string(util::trim(t.substr(eq + 1)));
  }
  return std::nullopt;
}

std::string binary_name(const fs::path& input) {
  auto name = input.lexically_normal().filename().string();
  if (name.empty()) name = input.lexically_normal().parent_path().filename().string();
  for (const char* ext : {".json", ".ir"})
    if (name.ends_with(ext)) name.resize(name.size() - std::string_view(ext).size());
  return name;
}

}  // namespace

LocateResult locate_ril_library(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw LocateError(root.string() + " is not a directory");
  LocateResult r;
  bool any_prop = false;
  std::optional<std::string> value;
  for (const char* part : {"system", "vendor", "super"}) {
    for (const auto& prop : build_props(root / part)) {
      any_prop = true;
      auto v = prop_value(prop, kLibPathKey);
      if (!v) continue;
      const auto rel = fs::relative(prop, root, ec).generic_string();
      if (value) {
        r.log.push_back("ignoring " + std::string(kLibPathKey) + "=" + *v + " in " + rel + " (first match: " +
                        fs::relative(r.build_prop, root, ec).generic_string() + ")");
        continue;
      }
      value = v;
      r.build_prop = prop;
    }
  }
  if (!any_prop) throw LocateError("no build.prop under system/, vendor/ or super/ of " + root.string());
  if (!value) throw LocateError(std::string(kLibPathKey) + " not set in any build.prop under " + root.string());
  r.library = root / fs::path(*value).relative_path();
  if (!fs::is_regular_file(r.library, ec))
    throw LocateError(std::string(kLibPathKey) + " points to " + *value + ", which does not exist under " +
                      root.string());
  return r;
}

BinaryResult analyze_one(const fs::path& input, const AnalysisConfig& config, const fs::path& out_dir) {
  BinaryResult r;
  r.input = input;
  r.binary = binary_name(input);
  try {
    fs::create_directories(out_dir);
    fs::path program_file = input;
    if (fs::is_directory(input)) {
      const auto loc = locate_ril_library(input);
      r.diagnostics.insert(r.diagnostics.end(), loc.log.begin(), loc.log.end());
      program_file = loc.library.string() + ".ir.json";
      if (!fs::is_regular_file(program_file))
        throw LocateError("no lifted program " + program_file.string() + " next to " + loc.library.string());
    }
    const auto p = ir::load_program_file(program_file);
    r.validation = ir::validate(p);
    if (!r.validation.empty()) {
      r.error = std::to_string(r.validation.size()) + " validation error(s)";
      for (const auto& d : r.validation) r.diagnostics.push_back(d.location + ": " + d.invariant + ": " + d.message);
    } else {
      const auto g = cg::build_call_graph(p);
      r.virtual_edges = g.virtual_edge_count();
      r.unresolved_vcalls = g.unresolved.size();
      for (const auto& u : g.unresolved)
        r.diagnostics.push_back(ir::format_site(p, u.site) + ": unresolved indirect call (" + u.reason + ")");
      for (const auto& n : g.notes) r.diagnostics.push_back(n);
      auto res = chan::filter_commands(p, g, config, r.binary);
      r.counters = res.counters;
      for (const auto& rec : res.db.records()) {
        if (rec.direction == cmd::Direction::Solicited) ++r.solicited;
        else ++r.unsolicited;
      }
      for (const auto& cr : res.resolutions) {
        if (cr.keep) continue;
        std::string line = ir::format_site(p, cr.site) + ": discarded (" + cr.reason + ")";
        for (const auto& o : cr.origins)
          if (!o.path.empty()) line += " " + o.path;
        r.diagnostics.push_back(std::move(line));
      }
      r.diagnostics.insert(r.diagnostics.end(), res.diagnostics.begin(), res.diagnostics.end());
      r.db_file = r.binary + ".db.tsv";
      cmd::save_db_file(res.db, out_dir / r.db_file);
      write_file(out_dir / (r.binary + ".modules.txt"), cmd::format_distribution(cmd::module_distribution(res.db)));
      r.ok = true;
    }
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  std::string log;
  for (const auto& d : r.diagnostics) log += d + "\n";
  if (!r.ok) log += "error: " + r.error + "\n";
  try {
    write_file(out_dir / (r.binary + ".log"), log);
  } catch (const std::exception& e) {
    if (r.ok) {
      r.ok = false;
      r.error = e.what();
    }
  }
  return r;
}

std::string format_summary(const std::vector<BinaryResult>& results) {
  std::ostringstream os;
  os << "# rilmine analyze summary v1\n";
  os << "binary\tstatus\tsolicited\tunsolicited\tsites\tkept\tdiscarded\tvirtual_edges\tunresolved_vcalls\tdb\n";
  std::size_t failed = 0;
  for (const auto& r : results) {
    std::string status = r.ok ? "ok" : "error: " + r.error;
    std::replace(status.begin(), status.end(), '\t', ' ');
    std::replace(status.begin(), status.end(), '\n', ' ');
    os << r.binary << '\t' << status << '\t' << r.solicited << '\t' << r.unsolicited << '\t' << r.counters.sites
       << '\t' << r.counters.kept << '\t' << r.counters.discarded << '\t' << r.virtual_edges << '\t'
       << r.unresolved_vcalls << '\t' << (r.ok ? r.db_file.generic_string() : "-") << '\n';
    if (!r.ok) ++failed;
  }
  os << "# binaries=" << results.size() << " failed=" << failed << '\n';
  return os.str();
}

AnalyzeReport analyze(const PipelineConfig& config) {
  if (config.jobs < 1) throw UsageError("--jobs must be at least 1");
  if (config.inputs.empty()) throw UsageError("no input programs given");
  std::set<std::string> stems;
  for (const auto& in : config.inputs) {
    const auto stem = binary_name(in);
    if (!stems.insert(stem).second) throw UsageError("two inputs share the name '" + stem + "'");
  }
  fs::create_directories(config.out_dir);

  std::vector<BinaryResult> results(config.inputs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < config.inputs.size(); i = next++)
      results[i] = analyze_one(config.inputs[i], config.filter, config.out_dir);
  };
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(config.jobs), config.inputs.size());
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::sort(results.begin(), results.end(), [](const BinaryResult& a, const BinaryResult& b) { return a.binary < b.binary; });
  AnalyzeReport rep;
  rep.summary = format_summary(results);
  write_file(config.out_dir / "summary.tsv", rep.summary);
  rep.exit_code = std::any_of(results.begin(), results.end(), [](const BinaryResult& r) { return !r.ok; }) ? 1 : 0;
  rep.results = std::move(results);
  return rep;
}

DiffReport diff_cmd(const fs::path& base_db, const fs::path& cur_db) {
  DiffReport r;
  r.diff = cmd::diff(cmd::load_db_file(base_db), cmd::load_db_file(cur_db));
  r.text = cmd::format_diff(r.diff);
  return r;
}

SimReport sim_cmd(const fs::path& sim_config, const fs::path& db_file, std::size_t budget, std::uint64_t seed,
                  const fs::path& out_dir) {
  sim::Simulator s(sim::load_sim_config(sim_config));
  SimReport r;
  r.findings = attack::campaign(s, cmd::load_db_file(db_file), budget, seed);
  for (const auto& req : s.config().nv_probes) r.nv.push_back(attack::probe_nv(s, req));
  r.tsv = attack::findings_tsv(r.findings, r.nv);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file(out_dir / "findings.tsv", r.tsv);
  }
  return r;
}

std::vector<fs::path> fixtures_cmd(const std::string& kind, std::uint64_t seed, const fs::path& out_dir) {
  const auto kinds = forge::fixture_kinds();
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    std::string list;
    for (const auto& k : kinds) list += (list.empty() ? "" : ", ") + k;
    throw UsageError("unknown fixture kind '" + kind + "' (one of: " + list + ")");
  }
  const auto fx = forge::generate(kind, seed);
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  const auto base = out_dir / fx.program.name;
  written.push_back(base.string() + ".ir.json");
  write_file(written.back(), ir::serialize(fx.program));
  written.push_back(base.string() + ".manifest.json");
  write_file(written.back(), forge::to_json(fx.manifest));
  std::optional<std::string> sim_text;
  if (kind == "table5") sim_text = forge::table5_sim_config();
  if (kind == "hybrid-direct") sim_text = forge::planted_ff_sim_config();
  if (sim_text) {
    written.push_back(base.string() + ".sim");
    write_file(written.back(), *sim_text);
  }
  return written;
}

}  // namespace rilmine::pipeline
