// SPDX-License-Identifier: Apache-2.0
#include "support/sweep.hpp"

#include <chrono>
#include <sstream>

#include "oracle/oracle.hpp"
#include "rilmine/pipeline.hpp"
#include "support/observe.hpp"
#include "support/temp_dir.hpp"

namespace rilmine::testing {

forge::RandomParams sweep_params(std::uint64_t seed) {
  forge::RandomParams rp;
  rp.functions = 200;
  rp.chains = 8 + static_cast<int>(seed % 17);
  rp.readers = 1 + static_cast<int>(seed % 4);
  rp.distractors = 4 + static_cast<int>(seed % 9);
  rp.vcall_density = static_cast<double>(seed % 5) / 4.0;
  return rp;
}

SweepResult oracle_sweep(std::uint64_t first_seed, int count) {
  SweepResult out;
  TempDir dir;
  const auto start = std::chrono::steady_clock::now();
  for (int n = 0; n < count; ++n) {
    const auto seed = first_seed + static_cast<std::uint64_t>(n);
    const auto fx = forge::gen_random(seed, sweep_params(seed));
    const auto input = dir.write("seed" + std::to_string(seed) + ".ir.json", ir::serialize(fx.program));
    const auto res = pipeline::analyze_one(input, {}, dir / "out");
    ++out.programs;

    forge::Manifest got = fx.manifest;
    got.commands.clear();
    if (res.ok)
      for (const auto& r : cmd::load_db_file(dir / "out" / res.db_file).records())
        got.commands.push_back(as_expected(r));
    got.normalize();
    const auto expected = oracle::to_manifest(oracle::analyze(fx.program), fx.manifest);
    out.commands += got.commands.size();
    if (res.ok && got.commands == expected.commands) {
      ++out.agreed;
      continue;
    }
    std::ostringstream os;
    os << "seed " << seed << ": " << (res.ok ? "" : res.error + " ") << "pipeline " << got.commands.size()
       << " vs oracle " << expected.commands.size();
    out.mismatches.push_back(os.str());
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace rilmine::testing
