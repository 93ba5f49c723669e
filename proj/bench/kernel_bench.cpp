#include "proximh/helmholtz.hpp"
#include "proximh/samplers.hpp"
#include "proximh/theory.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace pimh;

Vector random_medium(const HelmholtzGrid& grid, std::uint64_t seed) {
  Rng rng = make_stream(seed);
  return (1.0 + 0.3 * standard_normal(rng, grid.size()).array().tanh()).matrix();
}

template <bool Parallel>
void BM_HelmholtzMatvec(benchmark::State& state) {
  const auto grid = make_grid(static_cast<int>(state.range(0)), 5.441398092702653);
  const Vector medium = random_medium(grid, 1);
  Rng rng = make_stream(2);
  const Vector u = standard_normal(rng, grid.size());
  for (auto _ : state) {
    Vector r = Parallel ? helmholtz_matvec(grid, medium, u) : helmholtz_matvec_serial(grid, medium, u);
    benchmark::DoNotOptimize(r.data());
  }
  state.SetItemsProcessed(state.iterations() * grid.size());
}

struct PoolFixture {
  CorrectionOperatorK k;
  std::vector<ProposalDraw> entries;

  PoolFixture(Eigen::Index d, Eigen::Index n) {
    Rng rng = make_stream(3);
    const Matrix a = standard_normal(rng, d / 2, d);
    const Matrix a_tilde = a + 0.05 * standard_normal(rng, d / 2, d);
    k = build_k(a, a_tilde, 0.1);
    entries.resize(static_cast<std::size_t>(n));
    for (auto& e : entries) {
      e.x_tilde = standard_normal(rng, d);
      e.x = e.x_tilde;
    }
  }
};

void BM_CorrectPoolParallel(benchmark::State& state) {
  PoolFixture fx(state.range(0), 4096);
  PoolSource pool(fx.entries);
  const Correction c = [&](const Vector& x) { return proximal_correct_linear(fx.k, x); };
  for (auto _ : state) {
    correct_pool(pool, c);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * 4096);
}

void BM_CorrectPoolSerial(benchmark::State& state) {
  PoolFixture fx(state.range(0), 4096);
  for (auto _ : state) {
    for (auto& e : fx.entries) e.x = proximal_correct_linear(fx.k, e.x_tilde);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * 4096);
}

template <bool Parallel>
void BM_KlMonteCarlo(benchmark::State& state) {
  const auto inst = make_kl_sweep_instance(state.range(0), state.range(0) / 5, 2.5, 0.06, 4);
  for (auto _ : state) {
    auto r = Parallel ? kl_monte_carlo(inst.prob, inst.k, 256, 5)
                      : kl_monte_carlo_serial(inst.prob, inst.k, 256, 5);
    benchmark::DoNotOptimize(r.estimates.data());
  }
  state.SetItemsProcessed(state.iterations() * 256);
}

}  // namespace

BENCHMARK(BM_HelmholtzMatvec<false>)->Name("helmholtz_matvec/serial")->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_HelmholtzMatvec<true>)->Name("helmholtz_matvec/openmp")->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_CorrectPoolSerial)->Name("correct_pool/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_CorrectPoolParallel)->Name("correct_pool/openmp")->Arg(64)->Arg(256);
BENCHMARK(BM_KlMonteCarlo<false>)->Name("kl_monte_carlo/serial")->Arg(50)->Arg(100);
BENCHMARK(BM_KlMonteCarlo<true>)->Name("kl_monte_carlo/openmp")->Arg(50)->Arg(100);

BENCHMARK_MAIN();
