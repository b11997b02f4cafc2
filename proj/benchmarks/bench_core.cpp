#include <benchmark/benchmark.h>

#include <nanotomo/photonics.hpp>
#include <nanotomo/simulator.hpp>
#include <nanotomo/tomography.hpp>

using namespace nanotomo;

namespace {

void click_probability(benchmark::State &state) {
  const photonics::DetectorResponse r{1e-3, {1e-4, 0.02, 0.2, 0.4, 0.45, 0.5}, 0.5};
  const double n = static_cast<double>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(photonics::click_probability(r, n));
}
BENCHMARK(click_probability)->Arg(10)->Arg(10'000)->Arg(1'000'000)->Arg(10'000'000);

SweepData one_sweep(double current) {
  auto plan = sim::CampaignPlan::defaults();
  plan.wavelengths_nm = {1500.0};
  plan.bias_currents_uA = {current};
  return sim::simulate_campaign(sim::GroundTruthDetector::paper_like(), plan).front();
}

void fit_response(benchmark::State &state) {
  const auto sweep = one_sweep(17.0);
  tomography::FitOptions opts;
  opts.nmax = static_cast<std::size_t>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(tomography::fit_response(sweep, opts));
}
BENCHMARK(fit_response)->DenseRange(1, 4)->Unit(benchmark::kMillisecond);

void select_model_order(benchmark::State &state) {
  const auto sweep = one_sweep(17.0);
  for (auto _ : state)
    benchmark::DoNotOptimize(tomography::select_model_order(sweep, 6));
}
BENCHMARK(select_model_order)->Unit(benchmark::kMillisecond);

void simulate_campaign(benchmark::State &state) {
  const auto plan = sim::CampaignPlan::defaults();
  const auto d = sim::GroundTruthDetector::paper_like();
  for (auto _ : state)
    benchmark::DoNotOptimize(sim::simulate_campaign(d, plan));
}
BENCHMARK(simulate_campaign)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
