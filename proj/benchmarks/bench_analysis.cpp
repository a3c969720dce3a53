// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "rilmine/attack.hpp"
#include "rilmine/callgraph.hpp"
#include "rilmine/channel.hpp"
#include "rilmine/forge.hpp"
#include "rilmine/ir_io.hpp"

using namespace rilmine;

namespace {

forge::Fixture random_program(int functions) {
  forge::RandomParams rp;
  rp.functions = functions;
  rp.chains = functions / 8;
  rp.readers = 2;
  rp.distractors = functions / 20;
  return forge::gen_random(7, rp);
}

void BM_MatchDevicePath(benchmark::State& state) {
  // Failing inputs are the expensive case for backtracking engines.
  std::string path = "/dev/" + std::string(static_cast<std::size_t>(state.range(0)), 'a') + " b";
  for (auto _ : state) benchmark::DoNotOptimize(chan::match_device_path(path));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MatchDevicePath)->RangeMultiplier(4)->Range(16, 4096)->Complexity();

void BM_LoadProgram(benchmark::State& state) {
  const auto text = ir::serialize(random_program(static_cast<int>(state.range(0))).program);
  for (auto _ : state) benchmark::DoNotOptimize(ir::load_program(text));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_LoadProgram)->Arg(50)->Arg(200);

void BM_BuildCallGraph(benchmark::State& state) {
  const auto fx = random_program(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(cg::build_call_graph(fx.program));
}
BENCHMARK(BM_BuildCallGraph)->Arg(50)->Arg(100)->Arg(200);

void BM_FilterCommands(benchmark::State& state) {
  const auto fx = random_program(static_cast<int>(state.range(0)));
  const auto g = cg::build_call_graph(fx.program);
  for (auto _ : state) benchmark::DoNotOptimize(chan::filter_commands(fx.program, g));
}
BENCHMARK(BM_FilterCommands)->Arg(50)->Arg(100)->Arg(200);

void BM_Table5Campaign(benchmark::State& state) {
  const auto fx = forge::gen_table5();
  const auto db = chan::filter_commands(fx.program, cg::build_call_graph(fx.program)).db;
  const auto config = sim::parse_sim_config(forge::table5_sim_config());
  for (auto _ : state) {
    sim::Simulator s(config);
    benchmark::DoNotOptimize(attack::campaign(s, db, static_cast<std::size_t>(state.range(0)), 1));
  }
}
BENCHMARK(BM_Table5Campaign)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
