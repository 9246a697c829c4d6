#include "rulprune/causal.hpp"
#include "rulprune/predictor.hpp"
#include "rulprune/random.hpp"
#include "rulprune/screen.hpp"

#include <benchmark/benchmark.h>

using namespace rulprune;
using Eigen::MatrixXd;

namespace {

MatrixXd noise(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

void BM_Parcorr(benchmark::State& state) {
    const auto n = state.range(0);
    const MatrixXd m = noise(n, 5, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(parcorr(m.col(0), m.col(1), m.rightCols(state.range(1))));
    }
}
BENCHMARK(BM_Parcorr)->Args({50, 0})->Args({50, 3})->Args({2000, 3});

void BM_PcmciWindow(benchmark::State& state) {
    MatrixXd m = noise(50, 5, 2);
    m.col(1) += 0.8 * m.col(0);
    const CausalPruneConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(pcmci_graph(m, cfg));
}
BENCHMARK(BM_PcmciWindow);

void BM_FitGmm(benchmark::State& state) {
    Rng rng(3);
    std::vector<WindowFeatures> feats(static_cast<std::size_t>(state.range(0)));
    for (std::size_t i = 0; i < feats.size(); ++i) {
        feats[i].f = Eigen::Vector3d(rng.normal() + (i % 4 == 0 ? 3 : 0), rng.normal(), rng.normal());
    }
    const ScreenConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(fit_gmm(feats, cfg, 1));
}
BENCHMARK(BM_FitGmm)->Arg(1000)->Arg(10000);

PredictorModel bench_model() {
    PredictorConfig c;
    c.embed_dim = 16;
    c.heads = 2;
    c.layers = 2;
    c.ffn_dim = 32;
    c.head_dim1 = 16;
    c.head_dim2 = 8;
    c.input_channels = 4;
    c.seq_len = 50;
    return init_model(c, 1);
}

void BM_TransformerForward(benchmark::State& state) {
    const auto m = bench_model();
    const MatrixXd x = noise(50, 4, 4);
    for (auto _ : state) benchmark::DoNotOptimize(transformer_forward(m, x));
}
BENCHMARK(BM_TransformerForward);

void BM_TransformerBackward(benchmark::State& state) {
    const auto m = bench_model();
    std::vector<Sample> batch(16);
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = {noise(50, 4, 10 + i), 0.5};
    for (auto _ : state) benchmark::DoNotOptimize(backward(m, batch, nullptr, 0.0));
}
BENCHMARK(BM_TransformerBackward);

}  // namespace

BENCHMARK_MAIN();
