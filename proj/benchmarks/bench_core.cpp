#include <benchmark/benchmark.h>

#include "stdit/model.hpp"
#include "stdit/rng.hpp"
#include "stdit/schedule.hpp"
#include "stdit/tensor.hpp"

using namespace stdit;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
    Tensor t(r, c);
    for (double& v : t.data) v = rng.normal();
    return t;
}

ModelConfig desk_config(std::size_t p, std::size_t q) {
    ModelConfig cfg;
    cfg.p = p;
    cfg.q = q;
    cfg.d = 16;
    cfg.d_c = 16;
    cfg.d_t = 16;
    cfg.d_k = 8;
    cfg.d_v = 8;
    cfg.landmarks = 16;
    cfg.blocks = 2;
    cfg.heads = 2;
    return cfg;
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    Tensor a = random_tensor(n, n, rng);
    Tensor b = random_tensor(n, n, rng);
    for (auto _ : state) {
        Graph g;
        auto r = g.matmul(g.input(a), g.input(b));
        benchmark::DoNotOptimize(g.value(r).data.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(8, 128)->Complexity();

void BM_ConditionEmbed(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    ModelConfig cfg = desk_config(40, 50);
    ModelParams params = init_params(cfg, 1);
    Tensor x_sc = random_tensor(m, cfg.q, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(condition_matrix(params, x_sc));
    }
}
BENCHMARK(BM_ConditionEmbed)->RangeMultiplier(2)->Range(16, 256);

void BM_DenoiseForward(benchmark::State& state) {
    Rng rng(1);
    ModelConfig cfg = desk_config(40, 50);
    ModelParams params = init_params(cfg, 1);
    Tensor cond = random_tensor(1, cfg.d_c, rng);
    Tensor st = random_tensor(1, cfg.p, rng);
    Tensor sc = random_tensor(1, cfg.q, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(predict_eps(params, cond, st, sc, 7));
    }
}
BENCHMARK(BM_DenoiseForward);

void BM_DenoiseBackward(benchmark::State& state) {
    Rng rng(1);
    ModelConfig cfg = desk_config(40, 50);
    ModelParams params = init_params(cfg, 1);
    Tensor cond = random_tensor(1, cfg.d_c, rng);
    Tensor st = random_tensor(1, cfg.p, rng);
    Tensor sc = random_tensor(1, cfg.q, rng);
    Tensor target = random_tensor(1, cfg.p, rng);
    Tensor mask = Tensor::full(1, cfg.p, 1.0);
    for (auto _ : state) {
        Graph g;
        ModelGraph mg = register_params(g, params);
        auto tokens = latent_embed(g, mg, g.input(st), g.input(sc));
        auto out = denoise(g, mg, tokens, 7, g.input(cond));
        auto loss = g.masked_mse(out.eps_hat, target, mask);
        g.backward(loss);
        benchmark::DoNotOptimize(g.grad(mg.ordered.front()).data.data());
    }
}
BENCHMARK(BM_DenoiseBackward);

void BM_ReverseChainStep(benchmark::State& state) {
    Rng rng(1);
    Schedule sched = make_schedule(50, 1e-4, 0.02);
    Tensor x = random_tensor(1, 40, rng);
    Tensor eps = random_tensor(1, 40, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(p_mean_sigma(x, 25, eps, sched));
    }
}
BENCHMARK(BM_ReverseChainStep);

}  // namespace

BENCHMARK_MAIN();
