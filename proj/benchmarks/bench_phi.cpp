#include <benchmark/benchmark.h>

#include "mbp/expkernel.hpp"
#include "mbp/random.hpp"

using namespace mbp;

namespace {

std::shared_ptr<const OperatorSpec> periodic_laplacian(int m0) {
    return std::make_shared<const OperatorSpec>(laplacian_fd(build_grid(2, {0, 1}, m0, BoundaryCondition::periodic()), 0.01));
}

void phi_action(benchmark::State& state, ExpStrategy strategy) {
    auto op = periodic_laplacian(static_cast<int>(state.range(0)));
    const PhiEvaluator ev(op, 2.0, 0.1, strategy, {1e-11, 64});
    const auto v = uniform_field(op->size(), 0.9, 1);
    for (auto _ : state) benchmark::DoNotOptimize(ev.action(1, v));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(op->size()));
}

void BM_PhiSpectral(benchmark::State& s) { phi_action(s, ExpStrategy::Spectral); }
void BM_PhiKrylov(benchmark::State& s) { phi_action(s, ExpStrategy::Krylov); }
void BM_PhiDense(benchmark::State& s) { phi_action(s, ExpStrategy::Dense); }

void BM_PhiScalar(benchmark::State& state) {
    double a = 1e-6, acc = 0.0;
    for (auto _ : state) {
        acc += phi(2, a);
        a = a < 1e3 ? a * 1.1 : 1e-6;
    }
    benchmark::DoNotOptimize(acc);
}

}  // namespace

BENCHMARK(BM_PhiSpectral)->Arg(32)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_PhiKrylov)->Arg(32)->Arg(64)->Arg(128);
BENCHMARK(BM_PhiDense)->Arg(16)->Arg(32);
BENCHMARK(BM_PhiScalar);
