#include <benchmark/benchmark.h>

#include "mbp/random.hpp"
#include "mbp/stepper.hpp"

using namespace mbp;

namespace {

void step(benchmark::State& state, Scheme scheme) {
    const int m0 = static_cast<int>(state.range(0));
    auto op = std::make_shared<const OperatorSpec>(
        laplacian_fd(build_grid(2, {0, 1}, m0, BoundaryCondition::periodic()), 0.01));
    StepperConfig cfg;
    cfg.scheme = scheme;
    cfg.tau = 0.01;
    cfg.kappa = 8.02;
    const auto stepper = Stepper::scalar(op, flory_huggins(0.8, 1.6), cfg);
    Field u = Field::scalar(uniform_field(op->size(), 0.9, 1));
    double t = 0.0;
    for (auto _ : state) {
        u = stepper.step(u, t);
        t += cfg.tau;
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(op->size()));
}

void BM_StepEtd1(benchmark::State& s) { step(s, Scheme::Etd1); }
void BM_StepEtdrk2(benchmark::State& s) { step(s, Scheme::Etdrk2); }

}  // namespace

BENCHMARK(BM_StepEtd1)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_StepEtdrk2)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK_MAIN();
