#include <benchmark/benchmark.h>

#include "xmodal/loss.hpp"
#include "xmodal/ops.hpp"
#include "xmodal/cluster.hpp"
#include "xmodal/point_encoder.hpp"
#include "xmodal/rng.hpp"

namespace {

using namespace xmodal;

Tensor rand_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(shape, std::move(v));
}

void BM_conv2d(benchmark::State& state) {
    Rng rng(1);
    Tensor x = rand_tensor({16, 32, 64}, rng);
    Tensor w = rand_tensor({16, 16, 3, 3}, rng, -0.2, 0.2);
    Tensor b = rand_tensor({16}, rng);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1));
}
BENCHMARK(BM_conv2d);

void BM_conv2d_backward(benchmark::State& state) {
    Rng rng(1);
    Tensor x = rand_tensor({16, 32, 64}, rng);
    Tensor w = rand_tensor({16, 16, 3, 3}, rng, -0.2, 0.2);
    Tensor b = rand_tensor({16}, rng);
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    for (auto _ : state) {
        Tensor loss = sum_all(conv2d(x, w, b, 1, 1));
        backward(loss);
        w.zero_grad();
        b.zero_grad();
    }
}
BENCHMARK(BM_conv2d_backward);

void BM_fps(benchmark::State& state) {
    Rng rng(2);
    Tensor xyz = rand_tensor({2048, 3}, rng, -5.0, 5.0);
    for (auto _ : state) benchmark::DoNotOptimize(farthest_point_sample(xyz, 256, 0));
}
BENCHMARK(BM_fps);

void BM_ball_query(benchmark::State& state) {
    Rng rng(3);
    Tensor xyz = rand_tensor({2048, 3}, rng, -5.0, 5.0);
    Tensor centers = rand_tensor({256, 3}, rng, -5.0, 5.0);
    for (auto _ : state) benchmark::DoNotOptimize(ball_query(centers, xyz, 0.8, 16));
}
BENCHMARK(BM_ball_query);

void BM_tuple_circle_loss(benchmark::State& state) {
    Rng rng(4);
    const int64_t n = 64, d = 32;
    CorrespondenceBatch b;
    b.img = rand_tensor({n, d}, rng);
    b.img_aug = rand_tensor({n, d}, rng);
    b.pc = rand_tensor({n, d}, rng);
    b.pc_aug = rand_tensor({n, d}, rng);
    for (Tensor* t : {&b.img, &b.img_aug, &b.pc, &b.pc_aug}) t->set_requires_grad(true);
    TupleLayout layout{16, 16};
    CircleParams p;
    for (auto _ : state) {
        Tensor loss = tuple_circle_loss(b, layout, p);
        backward(loss);
        for (Tensor* t : {&b.img, &b.img_aug, &b.pc, &b.pc_aug}) t->zero_grad();
    }
}
BENCHMARK(BM_tuple_circle_loss);

void BM_spherical_kmeans(benchmark::State& state) {
    Rng rng(5);
    Tensor data = rand_tensor({2048, 32}, rng);
    for (auto _ : state)
        benchmark::DoNotOptimize(spherical_kmeans(data, 16, 25, 7));
}
BENCHMARK(BM_spherical_kmeans);

}  // namespace

BENCHMARK_MAIN();
