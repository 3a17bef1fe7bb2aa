#pragma once

#include "nexel/adam.hpp"
#include "nexel/bundle.hpp"
#include "nexel/checkpoint.hpp"
#include "nexel/losses.hpp"
#include "nexel/scene.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace nexel {

struct TrainConfig {
    int iterations = 2000;
    int budget = 40; // hard cap on primitive count
    std::uint64_t seed = 1;
    int top_k = 2;
    Vec3 background{0, 0, 0};

    int densify_start = 500;
    int densify_end = 25000;
    int densify_every = 100;
    double split_fraction = 0.05;
    double prune_opacity = 0.005;

    // Position lr is additionally scaled by scene extent and decays
    // exponentially from lr_position to lr_position_final over the run.
    double lr_position = 1.6e-4;
    double lr_position_final = 1.6e-6;
    double lr_quat = 1e-3;
    double lr_scale = 5e-3;
    double lr_opacity = 5e-2;
    double lr_gamma = 2e-3;
    double lr_sh_dc = 2.5e-3;
    double lr_sh_rest = 1.25e-4;
    double lr_grid = 1e-2;
    double lr_mlp = 1e-3;
    double adam_eps_position = 1e-15;
    double adam_eps = 1e-8;

    LossWeights loss;

    int grid_levels = 16;
    int grid_log2_table = 20;
    int grid_features = 2;
    double grid_init = 1e-4;

    bool no_texture = false; // forces top_k = 0
    bool no_gamma = false;
    bool no_prim_sh = false;
    bool no_downweight = false;

    int eval_every = 0; // 0 disables periodic held-out evaluation
    bool deterministic = false; // results are deterministic either way; kept as an assertion
    std::string snapshot_path;  // where a non-finite abort dumps the scene
};

// key = value lines, # comments. Unknown keys are an error.
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);
TrainConfig load_train_config(const std::string& path, TrainConfig base = {});

// Fixed parameter-group order; checkpoints store optimizer state in this
// order, one AdamState per group.
enum ParamGroup {
    kGroupPosition = 0,
    kGroupQuat,
    kGroupScale,
    kGroupOpacity,
    kGroupGamma,
    kGroupShDc,
    kGroupShRest,
    kGroupGrid,
    kGroupW1,
    kGroupW2,
    kGroupW3,
    kGroupCount,
};

struct TrainHooks {
    // iter is 1-based; wall_s is the iteration's wall time in seconds.
    std::function<void(int iter, const LossTerms&, int prim_count, double wall_s)> on_iteration;
    std::function<void(int iter, double train_psnr, double test_psnr)> on_eval;
};

struct TrainResult {
    Scene scene;
    CheckpointExtra extra;
    std::vector<AdamState> optimizer;
    LossTerms last_loss;
};

// Builds the initial scene from the bundle's point cloud (fps + field init)
// without running any iterations.
Scene initialize_scene(const Bundle& bundle, const TrainConfig& cfg, std::mt19937_64& rng);

TrainResult train(const Bundle& bundle, const TrainConfig& cfg, const TrainHooks& hooks = {});

double mean_psnr(const Scene& scene, const Bundle& bundle, const std::vector<int>& views);

} // namespace nexel
