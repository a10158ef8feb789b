#include <benchmark/benchmark.h>

#include <random>

#include "ccdn/datagen.hpp"
#include "ccdn/model.hpp"
#include "ccdn/postprocess.hpp"
#include "ccdn/training.hpp"

using namespace ccdn;

namespace {

Tensor random_image(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Tensor t(h, w, 1);
    for (auto& v : t.data) v = u(rng);
    return t;
}

} // namespace

static void bm_conv2d_layer2(benchmark::State& state) {
    const int hw = static_cast<int>(state.range(0));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> u(-0.1f, 0.1f);
    Tensor in(hw, hw, 20);
    for (auto& v : in.data) v = u(rng);
    ConvKernelBank bank(3, 3, 20, 20);
    for (auto& v : bank.weights) v = u(rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv2d_forward(in, bank));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(hw) * hw);
}
BENCHMARK(bm_conv2d_layer2)->Arg(64)->Arg(120);

static void bm_model_forward(benchmark::State& state) {
    const auto params = init_params<float>(7);
    const Tensor img = random_image(static_cast<int>(state.range(0)),
                                    static_cast<int>(state.range(1)), 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(img, params));
    }
}
BENCHMARK(bm_model_forward)->Args({120, 160})->Args({480, 640});

static void bm_model_forward_backward(benchmark::State& state) {
    const auto params = init_params<float>(7);
    const int h = static_cast<int>(state.range(0)), w = static_cast<int>(state.range(1));
    const Tensor img = random_image(h, w, 3);
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(h) * w, 0);
    std::mt19937_64 rng(4);
    for (int i = 0; i < 49; ++i) bits[rng() % bits.size()] = 1;
    const LabelMap labels = label_map_from_binary(h, w, std::move(bits));
    for (auto _ : state) {
        auto cache = forward_cached(img, params);
        auto loss = cross_entropy_loss(cache.response, labels, params, 0.01);
        benchmark::DoNotOptimize(backward(cache, params, loss.grad));
    }
}
BENCHMARK(bm_model_forward_backward)->Args({120, 160});

static void bm_nms(benchmark::State& state) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<Detection> dets(state.range(0));
    for (auto& d : dets) {
        d.x = static_cast<int>(rng() % 640);
        d.y = static_cast<int>(rng() % 480);
        d.score = u(rng);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(nms(dets));
    }
}
BENCHMARK(bm_nms)->Arg(200)->Arg(2000);

static void bm_kmeans(benchmark::State& state) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 640.0);
    std::vector<Point2> pts(state.range(0));
    for (auto& p : pts) p = {u(rng), u(rng)};
    for (auto _ : state) {
        benchmark::DoNotOptimize(kmeans_pp(pts, 10, 1));
    }
}
BENCHMARK(bm_kmeans)->Arg(64)->Arg(512);

static void bm_render_board(benchmark::State& state) {
    BoardSpec spec;
    spec.square_size = 24;
    const Homography pose = Homography::translation(200, 150);
    for (auto _ : state) {
        benchmark::DoNotOptimize(render_board(spec, pose, 640, 480, 9));
    }
}
BENCHMARK(bm_render_board);

BENCHMARK_MAIN();
