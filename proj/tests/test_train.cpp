#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

#include "nexel/synthetic.hpp"
#include "nexel/trainer.hpp"

#include <cmath>
#include <fstream>

using namespace nexel;
using namespace testutil;

namespace {

const Bundle& tiny_bundle() {
    static TempDir tmp;
    static bool made = false;
    if (!made) {
        SynthJob job = three_quad_job();
        job.n_views = 6;
        job.n_test = 1;
        job.resolution = 24;
        job.cloud_points = 80;
        job.seed = 11;
        make_synthetic_bundle(job, tmp.str());
        made = true;
    }
    static Bundle bundle = load_bundle(tmp.str());
    return bundle;
}

TrainConfig quick_config() {
    TrainConfig cfg;
    cfg.iterations = 3;
    cfg.budget = 16;
    cfg.seed = 4;
    cfg.top_k = 2;
    cfg.background = {0.08, 0.08, 0.1};
    cfg.densify_start = 1000000; // off unless a test turns it on
    cfg.grid_levels = 4;
    cfg.grid_log2_table = 6;
    cfg.eval_every = 0;
    return cfg;
}

std::string write_config(TempDir& tmp, const std::string& body) {
    const std::string path = tmp.file("train.cfg");
    std::ofstream out(path);
    out << body;
    return path;
}

} // namespace

TEST_CASE("config files parse every key with comments and whitespace") {
    TempDir tmp;
    const std::string path = write_config(tmp, R"(# full sweep
iterations = 12
budget = 99
seed = 7
top_k = 3
background = 0.1, 0.2, 0.3
densify_start = 10   # trailing comment
densify_end = 40
densify_every = 5
split_fraction = 0.25
prune_opacity = 0.01
lr_position = 1e-3
lr_position_final = 1e-5
lr_quat = 2e-3
lr_scale = 3e-3
lr_opacity = 4e-2
lr_gamma = 5e-3
lr_sh_dc = 6e-3
lr_sh_rest = 7e-4
lr_grid = 8e-3
lr_mlp = 9e-4
loss_dssim = 0.3
loss_alpha = 0.006
loss_texture = 0.6
loss_opacity = 0.02
loss_grid = 0.03
grid_levels = 5
grid_log2_table = 9
grid_features = 2
grid_init = 1e-3
no_texture = false
no_gamma = true
no_prim_sh = false
no_downweight = true
eval_every = 4
)");
    const TrainConfig cfg = load_train_config(path);
    CHECK(cfg.iterations == 12);
    CHECK(cfg.budget == 99);
    CHECK(cfg.seed == 7);
    CHECK(cfg.top_k == 3);
    CHECK(cfg.background.y == 0.2);
    CHECK(cfg.densify_start == 10);
    CHECK(cfg.densify_end == 40);
    CHECK(cfg.densify_every == 5);
    CHECK(cfg.split_fraction == 0.25);
    CHECK(cfg.prune_opacity == 0.01);
    CHECK(cfg.lr_position == 1e-3);
    CHECK(cfg.lr_position_final == 1e-5);
    CHECK(cfg.lr_quat == 2e-3);
    CHECK(cfg.lr_scale == 3e-3);
    CHECK(cfg.lr_opacity == 4e-2);
    CHECK(cfg.lr_gamma == 5e-3);
    CHECK(cfg.lr_sh_dc == 6e-3);
    CHECK(cfg.lr_sh_rest == 7e-4);
    CHECK(cfg.lr_grid == 8e-3);
    CHECK(cfg.lr_mlp == 9e-4);
    CHECK(cfg.loss.dssim == 0.3);
    CHECK(cfg.loss.alpha == 0.006);
    CHECK(cfg.loss.texture == 0.6);
    CHECK(cfg.loss.opacity == 0.02);
    CHECK(cfg.loss.grid == 0.03);
    CHECK(cfg.grid_levels == 5);
    CHECK(cfg.grid_log2_table == 9);
    CHECK(cfg.grid_features == 2);
    CHECK(cfg.grid_init == 1e-3);
    CHECK(cfg.no_texture == false);
    CHECK(cfg.no_gamma == true);
    CHECK(cfg.no_prim_sh == false);
    CHECK(cfg.no_downweight == true);
    CHECK(cfg.eval_every == 4);
}

TEST_CASE("config errors carry the file location") {
    TempDir tmp;
    auto expect_bad = [&](const std::string& body, const std::string& needle) {
        const std::string path = write_config(tmp, body);
        try {
            load_train_config(path);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.code() == "bad-config");
            INFO("message: " << e.what());
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_bad("iterations = 5\nwat = 1\n", ":2:");
    expect_bad("iterations = 5\nwat = 1\n", "wat");
    expect_bad("iterations = banana\n", ":1:");
    expect_bad("seed 5\n", "expected key = value");
    expect_bad("iterations = 5 extra\n", "trailing");

    bool threw = false;
    try {
        load_train_config(tmp.file("missing.cfg"));
    } catch (const Error& e) {
        threw = true;
        CHECK(e.code() == "missing-file");
    }
    CHECK(threw);
}

TEST_CASE("initialize_scene builds from the cloud and honors the config") {
    const Bundle& bundle = tiny_bundle();
    TrainConfig cfg = quick_config();
    std::mt19937_64 rng(cfg.seed);
    const Scene scene = initialize_scene(bundle, cfg, rng);

    CHECK(scene.nexels.size() == 8); // floor(16/2), cloud is larger
    CHECK(scene.settings.top_k == 2);
    CHECK(scene.settings.background.z == 0.1);
    CHECK(scene.field.grid.cfg.levels == 4);
    CHECK(scene.field.grid.cfg.log2_table == 6);

    Vec3 lo = bundle.cloud.xyz[0], hi = lo;
    for (const Vec3& p : bundle.cloud.xyz)
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], p[k]);
            hi[k] = std::max(hi[k], p[k]);
        }
    CHECK(scene.extent == doctest::Approx(0.5 * norm(hi - lo)).epsilon(1e-12));
    const double span_max = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
    CHECK(scene.field.grid.cfg.base_scale == doctest::Approx(1.0 / span_max).epsilon(1e-12));

    TrainConfig flat = cfg;
    flat.no_texture = true;
    std::mt19937_64 rng2(cfg.seed);
    const Scene k0 = initialize_scene(bundle, flat, rng2);
    CHECK(k0.settings.top_k == 0);

    Bundle broke = bundle;
    broke.cloud.xyz.resize(1);
    broke.cloud.rgb.resize(1);
    bool threw = false;
    try {
        std::mt19937_64 rng3(1);
        initialize_scene(broke, cfg, rng3);
    } catch (const Error& e) {
        threw = true;
        CHECK(e.code() == "bad-ply");
    }
    CHECK(threw);
}

TEST_CASE("zero-iteration training returns the initialization exactly") {
    const Bundle& bundle = tiny_bundle();
    TrainConfig cfg = quick_config();
    cfg.iterations = 0;
    const TrainResult res = train(bundle, cfg);

    std::mt19937_64 rng(cfg.seed);
    const Scene init = initialize_scene(bundle, cfg, rng);
    CHECK(pack_scene(res.scene) == pack_scene(init));
    CHECK(res.extra.iteration == 0);
    REQUIRE(res.optimizer.size() == static_cast<std::size_t>(kGroupCount));
    for (const AdamState& s : res.optimizer) {
        CHECK(s.step == 0);
        CHECK(s.m.empty());
    }
    REQUIRE(res.extra.cameras.size() == bundle.cameras.size());
    CHECK(res.extra.cameras[0].name == bundle.cameras[0].name);
}

TEST_CASE("a few iterations decrease nothing but move every group") {
    const Bundle& bundle = tiny_bundle();
    TrainConfig cfg = quick_config();
    cfg.iterations = 3;

    std::vector<int> iters;
    std::vector<int> counts;
    TrainHooks hooks;
    hooks.on_iteration = [&](int iter, const LossTerms& terms, int prim_count, double wall) {
        iters.push_back(iter);
        counts.push_back(prim_count);
        CHECK(terms.finite());
        CHECK(wall >= 0.0);
    };
    const TrainResult res = train(bundle, cfg, hooks);

    CHECK(iters == std::vector<int>{1, 2, 3});
    CHECK(counts == std::vector<int>{8, 8, 8});
    CHECK(res.last_loss.finite());
    CHECK(res.last_loss.total > 0.0);
    CHECK(res.extra.iteration == 3);

    std::mt19937_64 rng(cfg.seed);
    const Scene init = initialize_scene(bundle, cfg, rng);
    const std::vector<double> a = pack_scene(init);
    const std::vector<double> b = pack_scene(res.scene);
    // every optimizer group actually moved something
    bool moved_prim = false, moved_grid = false, moved_mlp = false;
    const std::size_t prim_span = init.nexels.size() * kParamsPerPrimitive;
    const std::size_t grid_span = init.field.grid.table.size();
    for (std::size_t i = 0; i < prim_span; ++i)
        if (a[i] != b[i]) moved_prim = true;
    for (std::size_t i = prim_span; i < prim_span + grid_span; ++i)
        if (a[i] != b[i]) moved_grid = true;
    for (std::size_t i = prim_span + grid_span; i < a.size(); ++i)
        if (a[i] != b[i]) moved_mlp = true;
    CHECK(moved_prim);
    CHECK(moved_grid);
    CHECK(moved_mlp);

    for (int g = 0; g < kGroupCount; ++g) CHECK(res.optimizer[g].step == 3);
    CHECK(res.optimizer[kGroupPosition].m.size() == 8 * 3);
    CHECK(res.optimizer[kGroupShRest].m.size() == 8 * 45);
}

TEST_CASE("training is deterministic run to run") {
    const Bundle& bundle = tiny_bundle();
    TrainConfig cfg = quick_config();
    cfg.iterations = 5;

    const TrainResult r1 = train(bundle, cfg);
    const TrainResult r2 = train(bundle, cfg);
    CHECK(pack_scene(r1.scene) == pack_scene(r2.scene));
    for (int g = 0; g < kGroupCount; ++g) {
        CHECK(r1.optimizer[g].m == r2.optimizer[g].m);
        CHECK(r1.optimizer[g].v == r2.optimizer[g].v);
    }

    TempDir tmp;
    save_checkpoint(tmp.file("a.nexl"), r1.scene, r1.extra, &r1.optimizer);
    save_checkpoint(tmp.file("b.nexl"), r2.scene, r2.extra, &r2.optimizer);
    CHECK(read_bytes(tmp.file("a.nexl")) == read_bytes(tmp.file("b.nexl")));

    TrainConfig other = cfg;
    other.seed = 5;
    const TrainResult r3 = train(bundle, other);
    CHECK(pack_scene(r1.scene) != pack_scene(r3.scene));
}

TEST_CASE("densification splits and prunes inside the schedule window") {
    const Bundle& bundle = tiny_bundle();
    TrainConfig cfg = quick_config();
    cfg.iterations = 8;
    cfg.budget = 24;
    cfg.densify_start = 2;
    cfg.densify_end = 6;
    cfg.densify_every = 2;
    cfg.split_fraction = 0.4;
    cfg.prune_opacity = 0.005;

    std::vector<int> counts;
    TrainHooks hooks;
    hooks.on_iteration = [&](int, const LossTerms&, int prim_count, double) {
        counts.push_back(prim_count);
    };
    const TrainResult res = train(bundle, cfg, hooks);

    REQUIRE(counts.size() == 8);
    CHECK(counts[0] == 12);             // budget/2 seeds
    CHECK(counts[1] > 12);              // first split at iteration 2
    CHECK(counts[5] >= counts[3]);      // window still open at 6
    CHECK(counts[7] == counts[6]);      // closed after densify_end
    for (int c : counts) CHECK(c <= cfg.budget);

    const int final_count = static_cast<int>(res.scene.nexels.size());
    CHECK(res.optimizer[kGroupPosition].m.size() ==
          static_cast<std::size_t>(final_count) * 3);
    CHECK(res.optimizer[kGroupOpacity].m.size() == static_cast<std::size_t>(final_count));
    CHECK(res.optimizer[kGroupGrid].m.size() == res.scene.field.grid.table.size());
}

TEST_CASE("evaluation hooks fire on schedule and at the end") {
    const Bundle& bundle = tiny_bundle();
    TrainConfig cfg = quick_config();
    cfg.iterations = 5;
    cfg.eval_every = 2;

    std::vector<int> evals;
    TrainHooks hooks;
    hooks.on_eval = [&](int iter, double train_psnr, double test_psnr) {
        evals.push_back(iter);
        CHECK(train_psnr > 0.0);
        CHECK(train_psnr <= 99.0);
        CHECK(test_psnr > 0.0);
    };
    train(bundle, cfg, hooks);
    CHECK(evals == std::vector<int>{2, 4, 5});
}

TEST_CASE("mean_psnr clamps renders and handles empty view lists") {
    const Bundle& bundle = tiny_bundle();
    TrainConfig cfg = quick_config();
    cfg.iterations = 0;
    const TrainResult res = train(bundle, cfg);
    CHECK(mean_psnr(res.scene, bundle, {}) == 0.0);
    const double p = mean_psnr(res.scene, bundle, bundle.train_views);
    CHECK(p > 0.0);
    CHECK(p < 99.0);
}

TEST_CASE("train rejects impossible inputs") {
    const Bundle& bundle = tiny_bundle();

    Bundle no_train = bundle;
    no_train.train_views.clear();
    bool threw = false;
    try {
        train(no_train, quick_config());
    } catch (const Error& e) {
        threw = true;
        CHECK(e.code() == "bad-settings");
    }
    CHECK(threw);

    TrainConfig bad_k = quick_config();
    bad_k.top_k = kMaxTopK + 1;
    threw = false;
    try {
        train(bundle, bad_k);
    } catch (const Error& e) {
        threw = true;
        CHECK(e.code() == "bad-config");
    }
    CHECK(threw);

    TrainConfig neg = quick_config();
    neg.iterations = -1;
    threw = false;
    try {
        train(bundle, neg);
    } catch (const Error& e) {
        threw = true;
        CHECK(e.code() == "bad-config");
    }
    CHECK(threw);
}
