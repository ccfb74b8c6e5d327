// collect (OpenMP) vs collect_serial on the grass-sand regimes.

#include <benchmark/benchmark.h>

#include "acw/experiments.hpp"

namespace {

struct Fixture {
  acw::ExperimentSpec spec = acw::make_experiment("grass-sand");
  acw::System system = acw::make_system(spec.env, spec.columns.at(0).sources.at(0).agents);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

template <acw::RolloutTree (*Collect)(const acw::System&, const std::vector<acw::Regime>&,
                                      const std::vector<acw::FeatureExtractor>&, const acw::Seed&,
                                      const acw::CollectOptions&)>
void run(benchmark::State& state) {
  const auto& f = fixture();
  acw::CollectOptions opt;
  opt.n = state.range(0);
  for (auto _ : state) {
    auto tree = Collect(f.system, f.spec.regimes, f.spec.extractors, acw::Seed(7), opt);
    benchmark::DoNotOptimize(tree);
  }
  state.SetItemsProcessed(state.iterations() * opt.n * static_cast<long>(f.spec.regimes.size()));
}

}  // namespace

BENCHMARK(run<acw::collect_serial>)->Name("collect_serial")->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(run<acw::collect>)->Name("collect_parallel")->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
