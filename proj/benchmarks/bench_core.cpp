#include "nexel/hash_grid.hpp"
#include "nexel/kernel.hpp"
#include "nexel/mlp.hpp"
#include "nexel/oracle.hpp"
#include "nexel/renderer.hpp"
#include "nexel/ssim.hpp"
#include "nexel/synthetic.hpp"
#include "nexel/texture_field.hpp"
#include "nexel/trainer.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace nexel;

void bm_kernel(benchmark::State& state) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(-3.0, 3.0);
    std::vector<double> us(1024), vs(1024);
    for (auto& u : us) u = uni(rng);
    for (auto& v : vs) v = uni(rng);
    const Vec2 gamma{1.7, 4.2};
    double acc = 0.0;
    for (auto _ : state) {
        for (std::size_t i = 0; i < us.size(); ++i)
            acc += eval_kernel(us[i], vs[i], 0.8, gamma);
        benchmark::DoNotOptimize(acc);
    }
    state.SetItemsProcessed(state.iterations() * us.size());
}

void bm_kernel_grad(benchmark::State& state) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(-3.0, 3.0);
    std::vector<double> us(1024), vs(1024);
    for (auto& u : us) u = uni(rng);
    for (auto& v : vs) v = uni(rng);
    const Vec2 gamma{1.7, 4.2};
    double acc = 0.0;
    for (auto _ : state) {
        for (std::size_t i = 0; i < us.size(); ++i) {
            KernelGrad g;
            acc += eval_kernel_grad(us[i], vs[i], 0.8, gamma, g);
            acc += g.d_u + g.d_gamma.x;
        }
        benchmark::DoNotOptimize(acc);
    }
    state.SetItemsProcessed(state.iterations() * us.size());
}

TextureField make_field(int log2_table) {
    TextureField field;
    std::mt19937_64 rng(11);
    field.init(HashGridConfig::for_extent(2.0, 16, log2_table, 2), rng);
    return field;
}

void bm_grid_lookup(benchmark::State& state) {
    const TextureField field = make_field(15);
    std::vector<double> out(field.grid.cfg.levels * field.grid.cfg.features);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::vector<Vec3> xs(512);
    for (auto& x : xs) x = {uni(rng), uni(rng), uni(rng)};
    for (auto _ : state) {
        for (const Vec3& x : xs) {
            grid_lookup(field.grid, x, 2.5, 128.0, out.data());
            benchmark::DoNotOptimize(out[0]);
        }
    }
    state.SetItemsProcessed(state.iterations() * xs.size());
}

void bm_mlp_forward(benchmark::State& state) {
    TextureMlp mlp;
    std::mt19937_64 rng(5);
    mlp.allocate();
    mlp.init(rng);
    std::vector<double> x(mlp.n_in, 0.3), h1(mlp.n_hidden), h2(mlp.n_hidden), y(mlp.n_out);
    for (auto _ : state) {
        mlp.forward(x.data(), h1.data(), h2.data(), y.data());
        benchmark::DoNotOptimize(y[0]);
    }
}

void bm_field_query(benchmark::State& state) {
    const TextureField field = make_field(15);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::vector<FieldQuery> queries(512);
    for (auto& q : queries) {
        q.x = {uni(rng), uni(rng), uni(rng)};
        q.t = 2.5;
        q.f = 128.0;
        q.dir = normalized(Vec3{uni(rng), uni(rng), 1.0});
    }
    std::vector<double> colors(queries.size() * 3);
    for (auto _ : state) {
        field_forward_batch(field, queries, colors.data());
        benchmark::DoNotOptimize(colors[0]);
    }
    state.SetItemsProcessed(state.iterations() * queries.size());
}

Scene random_scene(int n_prims, int top_k) {
    Scene scene;
    scene.settings.top_k = top_k;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < n_prims; ++i) {
        Nexel n;
        n.mu = {uni(rng), uni(rng), uni(rng)};
        n.quat = {gauss(rng), gauss(rng), gauss(rng), gauss(rng)};
        n.log_scale = {uni(rng) * 0.5 - 1.0, uni(rng) * 0.5 - 1.0};
        n.opacity_raw = uni(rng);
        n.gamma_raw = {uni(rng), uni(rng)};
        for (double& c : n.sh) c = 0.2 * uni(rng);
        scene.nexels.push_back(n);
    }
    scene.field = make_field(15);
    return scene;
}

Camera front_camera(int res) {
    Camera cam;
    cam.name = "bench";
    cam.width = cam.height = res;
    cam.fx = cam.fy = res;
    cam.cx = cam.cy = res / 2.0;
    cam.t = {0, 0, 3.0};
    return cam;
}

void bm_collection_pass(benchmark::State& state) {
    const Scene scene = random_scene(static_cast<int>(state.range(0)), 2);
    const Camera cam = front_camera(128);
    for (auto _ : state) {
        RenderResult out;
        collection_pass(scene, cam, out);
        benchmark::DoNotOptimize(out.fb.base[0]);
    }
}

void bm_render(benchmark::State& state) {
    const Scene scene = random_scene(static_cast<int>(state.range(0)), 2);
    const Camera cam = front_camera(128);
    for (auto _ : state) {
        const RenderResult out = render(scene, cam);
        benchmark::DoNotOptimize(out.fb.final_img[0]);
    }
}

void bm_ssim(benchmark::State& state) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Image a, b;
    a.width = b.width = a.height = b.height = 128;
    a.px.resize(128 * 128 * 3);
    b.px.resize(128 * 128 * 3);
    for (auto& x : a.px) x = uni(rng);
    for (auto& x : b.px) x = uni(rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ssim(a, b));
    }
}

BENCHMARK(bm_kernel);
BENCHMARK(bm_kernel_grad);
BENCHMARK(bm_grid_lookup);
BENCHMARK(bm_mlp_forward);
BENCHMARK(bm_field_query);
BENCHMARK(bm_collection_pass)->Arg(50)->Arg(500);
BENCHMARK(bm_render)->Arg(50)->Arg(500);
BENCHMARK(bm_ssim);

} // namespace

BENCHMARK_MAIN();
