// Serial reference kernels against their OpenMP versions: design scan, PEARS column, DP solve.

#include "pgsearch/pipeline.hpp"

#include <benchmark/benchmark.h>

#include <string>

using namespace pgs;

namespace {

const Study& study() {
  static const Study s = load_study(std::string(PGSEARCH_DATA_DIR) + "/base_config.json");
  return s;
}

struct Fixture {
  Evaluator ev{study()};
  DesignEvaluation gm = ev.evaluate(load_design(std::string(PGSEARCH_DATA_DIR) + "/designs/gm_2mode.json"));
  StcGrid stc = build_stc_grid(ev.cycle("fuds"), study().plant.vehicle, study().grid);
  DpProblem fuds = ev.dp_problem(gm, "fuds");
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

constexpr std::uint64_t kScanBegin = 2162000, kScanSize = 2000;

void BM_ScanSerial(benchmark::State& state) {
  const DesignSpace space(study().base);
  for (auto _ : state) {
    ModeLibrary lib(assemble_full_dynamics(study().base, study().inertias));
    benchmark::DoNotOptimize(scan_designs_serial(space, lib, kScanBegin, kScanBegin + kScanSize));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * kScanSize));
}

void BM_ScanParallel(benchmark::State& state) {
  const DesignSpace space(study().base);
  for (auto _ : state) {
    ModeLibrary lib(assemble_full_dynamics(study().base, study().inertias));
    benchmark::DoNotOptimize(
        scan_designs_parallel(space, lib, kScanBegin, kScanBegin + kScanSize, static_cast<int>(state.range(0))));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * kScanSize));
}

void BM_PearsColumnSerial(benchmark::State& state) {
  auto& f = fixture();
  const auto& a = f.gm.modes[0].record->a_star;
  for (auto _ : state) benchmark::DoNotOptimize(compute_column_serial(a, f.stc, study().plant, study().grid));
}

void BM_PearsColumnParallel(benchmark::State& state) {
  auto& f = fixture();
  const auto& a = f.gm.modes[0].record->a_star;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        compute_column_parallel(a, f.stc, study().plant, study().grid, static_cast<int>(state.range(0))));
}

void BM_DpSerial(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(solve_dp_serial(f.fuds, study().dp));
}

void BM_DpParallel(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(solve_dp_parallel(f.fuds, study().dp, static_cast<int>(state.range(0))));
}

}  // namespace

BENCHMARK(BM_ScanSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScanParallel)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PearsColumnSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PearsColumnParallel)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DpSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DpParallel)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
