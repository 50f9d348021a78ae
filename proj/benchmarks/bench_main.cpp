// Microbenchmarks for the hot paths: dense matmul, adapter forward (per
// variant), full model forward, and a full training step.

#include <benchmark/benchmark.h>

#include <vector>

#include "amoe/adapters.hpp"
#include "amoe/autodiff.hpp"
#include "amoe/loss.hpp"
#include "amoe/model.hpp"
#include "amoe/rng.hpp"
#include "amoe/tensor.hpp"

using namespace amoe;

namespace {

Tensor2 random_tensor(std::uint64_t seed, int rows, int cols) {
    SplitMix64 g(seed);
    Tensor2 t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = g.uniform(-1.0, 1.0);
    return t;
}

void BM_matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Tensor2 a = random_tensor(1, n, n), b = random_tensor(2, n, n), out;
    for (auto _ : state) {
        mm_nn(a, b, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_adapter_forward(benchmark::State& state) {
    AdapterConfig cfg;
    cfg.dim = 64;
    cfg.n_experts = 16;
    cfg.rank = 4;
    cfg.variant = static_cast<AdapterVariant>(state.range(0));
    AmoeLoraAdapter a(cfg, "bench", 3);
    Tensor2 o0 = random_tensor(4, 24, 64), x = random_tensor(5, 24, 64);
    for (auto _ : state) {
        Tape t;
        a.bind(t, false);
        Node out = a.forward(t, t.leaf(o0), t.leaf(x));
        benchmark::DoNotOptimize(out->value.data());
    }
}
BENCHMARK(BM_adapter_forward)
    ->Arg(static_cast<int>(AdapterVariant::LoraOnly))
    ->Arg(static_cast<int>(AdapterVariant::MoeOnly))
    ->Arg(static_cast<int>(AdapterVariant::Full));

ModelConfig bench_model_config() {
    ModelConfig c;
    c.vocab_size = 128;
    c.d_model = 64;
    c.n_layers = 2;
    c.n_heads = 4;
    c.max_seq = 64;
    c.adapter.dim = 64;
    c.adapter.n_experts = 16;
    c.adapter.rank = 4;
    return c;
}

void BM_model_forward(benchmark::State& state) {
    TinyTransformer m(bench_model_config(), 7);
    SplitMix64 g(9);
    std::vector<int> toks(32);
    for (int& t : toks) t = static_cast<int>(g.below(128));
    for (auto _ : state) {
        Tape t;
        m.bind(t, std::nullopt);
        Node logits = m.forward(t, toks);
        benchmark::DoNotOptimize(logits->value.data());
    }
}
BENCHMARK(BM_model_forward);

void BM_train_step(benchmark::State& state) {
    TinyTransformer m(bench_model_config(), 7);
    SplitMix64 g(9);
    std::vector<int> toks(32);
    for (int& t : toks) t = static_cast<int>(g.below(128));
    std::vector<int> targets(32);
    for (int& t : targets) t = static_cast<int>(g.below(128));
    std::vector<bool> mask(32, true);
    for (auto _ : state) {
        Tape t;
        m.bind(t, Stage::Stage2);
        Node logits = m.forward(t, toks);
        Node loss = cross_entropy(t, logits, targets, mask);
        t.backward(loss);
        benchmark::DoNotOptimize(loss->value.data());
    }
}
BENCHMARK(BM_train_step);

}  // namespace

BENCHMARK_MAIN();
