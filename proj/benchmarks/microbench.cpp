// Microbenchmarks for the hot paths: matmul kernels, one recurrent forward
// build, a full objective backward pass, and companion spectral radius.
#include <benchmark/benchmark.h>

#include <vector>

#include "gdbn/autodiff.hpp"
#include "gdbn/datagen.hpp"
#include "gdbn/model.hpp"
#include "gdbn/rng.hpp"
#include "gdbn/tensor.hpp"
#include "gdbn/training.hpp"

namespace {

using namespace gdbn;

void bm_matmul(benchmark::State& state) {
    const long n = state.range(0);
    RngStream rng(7, "bench");
    Tensor a = Tensor::zeros({n, n});
    Tensor b = Tensor::zeros({n, n});
    Tensor c = Tensor::zeros({n, n});
    for (double& v : a.storage()) v = rng.normal();
    for (double& v : b.storage()) v = rng.normal();
    for (auto _ : state) {
        kernels::mm_nn(a.data(), b.data(), c.data(), n, n, n, false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(bm_matmul)->Arg(64)->Arg(128)->Arg(256);

struct ForwardFixture {
    GdbnConfig gcfg;
    TimeSeriesDataset ds;
    WindowBatch windows;
    GdbnParams params;
    std::vector<long> offsets;
    std::vector<Tensor> noise;

    explicit ForwardFixture(long m, long batch) {
        gcfg.m = m;
        GenConfig gen;
        gen.m = m;
        gen.T = 200;
        gen.seed = 3;
        ds = simulate(sample_tam(gen), gen);
        windows = make_windows(ds, gcfg.s_o, gcfg.s_p, true);
        params = init_params(gcfg, 3);
        for (long i = 0; i < batch; ++i) offsets.push_back(i);
        RngStream rng(3, "sampling");
        noise = draw_latent_noise(rng, gcfg, batch, 1);
    }
};

void bm_forward(benchmark::State& state) {
    ForwardFixture fx(10, state.range(0));
    Tape tape;
    for (auto _ : state) {
        tape.clear();
        ForwardTrace trace =
            forward_on_tape(tape, fx.params, fx.gcfg, fx.windows, fx.offsets, fx.noise, false);
        benchmark::DoNotOptimize(trace.steps.back().predictions[0].m_x.id);
    }
}
BENCHMARK(bm_forward)->Arg(16)->Arg(64);

void bm_objective_backward(benchmark::State& state) {
    ForwardFixture fx(10, state.range(0));
    Tape tape;
    for (auto _ : state) {
        tape.clear();
        ForwardTrace trace =
            forward_on_tape(tape, fx.params, fx.gcfg, fx.windows, fx.offsets, fx.noise, true);
        ObjectiveParts parts = total_objective_on_tape(tape, trace, 0.01);
        tape.backward(parts.total);
        benchmark::DoNotOptimize(tape.grad(trace.vars.a).data());
    }
}
BENCHMARK(bm_objective_backward)->Arg(16)->Arg(64);

void bm_spectral_radius(benchmark::State& state) {
    GenConfig gen;
    gen.m = state.range(0);
    gen.seed = 3;  // seed 11 exhausts the rejection budget at m=10
    TemporalAdjacencyMatrix tam = sample_tam(gen);
    for (auto _ : state) {
        benchmark::DoNotOptimize(companion_spectral_radius(tam));
    }
}
BENCHMARK(bm_spectral_radius)->Arg(10)->Arg(15);

}  // namespace

BENCHMARK_MAIN();
