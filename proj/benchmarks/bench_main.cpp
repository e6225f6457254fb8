#include <benchmark/benchmark.h>

#include "ste/bnn.hpp"
#include "ste/dram.hpp"
#include "ste/nn.hpp"
#include "ste/scenario.hpp"
#include "ste/sensing.hpp"

namespace {

const ste::Scenario kReference{-389.0, 185.37, 1.83, 2.44, 0.74, 5.0, 5.0, 500.0};

void BM_ExpectedArray(benchmark::State& state) {
  ste::DatagenConfig d;
  d.grid.n_points = static_cast<int>(state.range(0));
  const auto det = ste::make_detectors(d.layout, d.detector);
  for (auto _ : state) benchmark::DoNotOptimize(ste::expected_array(kReference, det, d.physics, d.grid));
}
BENCHMARK(BM_ExpectedArray)->Arg(201)->Arg(1001)->Unit(benchmark::kMillisecond);

void BM_SumSquares(benchmark::State& state) {
  ste::DatagenConfig d;
  ste::dram::InferenceProblem p;
  p.detectors = ste::make_detectors(d.layout, d.detector);
  p.u = kReference.u;
  p.v = kReference.v;
  p.grid.n_points = 201;
  for (double c : ste::expected_array(kReference, p.detectors, d.physics, d.grid)) p.observations.push_back(c);
  const ste::dram::Theta theta(-380.0, 190.0, 1.9);
  for (auto _ : state) benchmark::DoNotOptimize(ste::dram::sum_squares(theta, p));
}
BENCHMARK(BM_SumSquares)->Unit(benchmark::kMillisecond);

void BM_MlpForward(benchmark::State& state) {
  using namespace ste::nn;
  ste::Engine rng(1);
  const MlpModel m =
      make_mlp({20, 150, 200, 3}, {Activation::swish, Activation::swish, Activation::linear}, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(state.range(0), 20);
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForward)->Arg(1)->Arg(128)->Arg(4096);

void BM_BnnSamplePredictions(benchmark::State& state) {
  using namespace ste::bnn;
  ste::Engine rng(2);
  VariationalMlpModel m = make_variational_mlp(
      {20, 150, 200, 3}, {ste::nn::Activation::swish, ste::nn::Activation::swish, ste::nn::Activation::linear}, rng,
      0.05);
  const Eigen::MatrixXd f = Eigen::MatrixXd::Random(64, 20), t = Eigen::MatrixXd::Random(64, 3);
  m.normalizer = {ste::ColumnScaler::fit(f), ste::ColumnScaler::fit(t)};
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(state.range(0), 20);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_predictions(m, x, ++seed));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BnnSamplePredictions)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
