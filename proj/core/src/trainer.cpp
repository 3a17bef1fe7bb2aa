#include "nexel/trainer.hpp"

#include "nexel/density.hpp"
#include "nexel/error.hpp"
#include "nexel/metrics.hpp"
#include "nexel/renderer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace nexel {

namespace {

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail("bad-config", "expected a boolean, got \"" + v + "\"");
}

double parse_num(const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) fail("bad-config", "trailing junk in number \"" + v + "\"");
        return x;
    } catch (const std::logic_error&) {
        fail("bad-config", "expected a number, got \"" + v + "\"");
    }
}

int parse_int(const std::string& v) { return static_cast<int>(parse_num(v)); }

Vec3 parse_vec3(const std::string& v) {
    std::istringstream ss(v);
    Vec3 out;
    char comma;
    if (!(ss >> out.x >> comma >> out.y >> comma >> out.z))
        fail("bad-config", "expected r,g,b, got \"" + v + "\"");
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "iterations") cfg.iterations = parse_int(value);
    else if (key == "budget") cfg.budget = parse_int(value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_num(value));
    else if (key == "top_k") cfg.top_k = parse_int(value);
    else if (key == "background") cfg.background = parse_vec3(value);
    else if (key == "densify_start") cfg.densify_start = parse_int(value);
    else if (key == "densify_end") cfg.densify_end = parse_int(value);
    else if (key == "densify_every") cfg.densify_every = parse_int(value);
    else if (key == "split_fraction") cfg.split_fraction = parse_num(value);
    else if (key == "prune_opacity") cfg.prune_opacity = parse_num(value);
    else if (key == "lr_position") cfg.lr_position = parse_num(value);
    else if (key == "lr_position_final") cfg.lr_position_final = parse_num(value);
    else if (key == "lr_quat") cfg.lr_quat = parse_num(value);
    else if (key == "lr_scale") cfg.lr_scale = parse_num(value);
    else if (key == "lr_opacity") cfg.lr_opacity = parse_num(value);
    else if (key == "lr_gamma") cfg.lr_gamma = parse_num(value);
    else if (key == "lr_sh_dc") cfg.lr_sh_dc = parse_num(value);
    else if (key == "lr_sh_rest") cfg.lr_sh_rest = parse_num(value);
    else if (key == "lr_grid") cfg.lr_grid = parse_num(value);
    else if (key == "lr_mlp") cfg.lr_mlp = parse_num(value);
    else if (key == "loss_dssim") cfg.loss.dssim = parse_num(value);
    else if (key == "loss_alpha") cfg.loss.alpha = parse_num(value);
    else if (key == "loss_texture") cfg.loss.texture = parse_num(value);
    else if (key == "loss_opacity") cfg.loss.opacity = parse_num(value);
    else if (key == "loss_grid") cfg.loss.grid = parse_num(value);
    else if (key == "grid_levels") cfg.grid_levels = parse_int(value);
    else if (key == "grid_log2_table") cfg.grid_log2_table = parse_int(value);
    else if (key == "grid_features") cfg.grid_features = parse_int(value);
    else if (key == "grid_init") cfg.grid_init = parse_num(value);
    else if (key == "no_texture") cfg.no_texture = parse_bool(value);
    else if (key == "no_gamma") cfg.no_gamma = parse_bool(value);
    else if (key == "no_prim_sh") cfg.no_prim_sh = parse_bool(value);
    else if (key == "no_downweight") cfg.no_downweight = parse_bool(value);
    else if (key == "eval_every") cfg.eval_every = parse_int(value);
    else fail("bad-config", "unknown config key \"" + key + "\"");
}

TrainConfig load_train_config(const std::string& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) fail("missing-file", "cannot open config " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail("bad-config", path + ":" + std::to_string(lineno) + ": expected key = value");
        try {
            apply_config_entry(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const Error& e) {
            fail("bad-config", path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

namespace {

struct GroupScratch {
    std::vector<double> params;
    std::vector<double> grads;
};

constexpr int kRowWidth[7] = {3, 4, 2, 1, 2, 3, kShValues - 3};

void gather_group(const std::vector<Nexel>& nexels, int group, std::vector<double>& out) {
    const std::size_t n = nexels.size();
    out.resize(n * kRowWidth[group]);
    for (std::size_t i = 0; i < n; ++i) {
        const Nexel& x = nexels[i];
        double* p = out.data() + i * kRowWidth[group];
        switch (group) {
        case kGroupPosition: for (int k = 0; k < 3; ++k) p[k] = x.mu[k]; break;
        case kGroupQuat: for (int k = 0; k < 4; ++k) p[k] = x.quat[k]; break;
        case kGroupScale: for (int k = 0; k < 2; ++k) p[k] = x.log_scale[k]; break;
        case kGroupOpacity: p[0] = x.opacity_raw; break;
        case kGroupGamma: for (int k = 0; k < 2; ++k) p[k] = x.gamma_raw[k]; break;
        case kGroupShDc: for (int k = 0; k < 3; ++k) p[k] = x.sh[k]; break;
        case kGroupShRest: for (int k = 3; k < kShValues; ++k) p[k - 3] = x.sh[k]; break;
        }
    }
}

void gather_group_grads(const std::vector<PrimitiveGrad>& grads, int group,
                        std::vector<double>& out) {
    const std::size_t n = grads.size();
    out.resize(n * kRowWidth[group]);
    for (std::size_t i = 0; i < n; ++i) {
        const PrimitiveGrad& g = grads[i];
        double* p = out.data() + i * kRowWidth[group];
        switch (group) {
        case kGroupPosition: for (int k = 0; k < 3; ++k) p[k] = g.mu[k]; break;
        case kGroupQuat: for (int k = 0; k < 4; ++k) p[k] = g.quat[k]; break;
        case kGroupScale: for (int k = 0; k < 2; ++k) p[k] = g.log_scale[k]; break;
        case kGroupOpacity: p[0] = g.opacity_raw; break;
        case kGroupGamma: for (int k = 0; k < 2; ++k) p[k] = g.gamma_raw[k]; break;
        case kGroupShDc: for (int k = 0; k < 3; ++k) p[k] = g.sh[k]; break;
        case kGroupShRest: for (int k = 3; k < kShValues; ++k) p[k - 3] = g.sh[k]; break;
        }
    }
}

void scatter_group(const std::vector<double>& in, int group, std::vector<Nexel>& nexels) {
    for (std::size_t i = 0; i < nexels.size(); ++i) {
        Nexel& x = nexels[i];
        const double* p = in.data() + i * kRowWidth[group];
        switch (group) {
        case kGroupPosition: for (int k = 0; k < 3; ++k) x.mu[k] = p[k]; break;
        case kGroupQuat: for (int k = 0; k < 4; ++k) x.quat[k] = p[k]; break;
        case kGroupScale: for (int k = 0; k < 2; ++k) x.log_scale[k] = p[k]; break;
        case kGroupOpacity: x.opacity_raw = p[0]; break;
        case kGroupGamma: for (int k = 0; k < 2; ++k) x.gamma_raw[k] = p[k]; break;
        case kGroupShDc: for (int k = 0; k < 3; ++k) x.sh[k] = p[k]; break;
        case kGroupShRest: for (int k = 3; k < kShValues; ++k) x.sh[k] = p[k - 3]; break;
        }
    }
}

} // namespace

Scene initialize_scene(const Bundle& bundle, const TrainConfig& cfg, std::mt19937_64& rng) {
    if (bundle.cloud.xyz.size() < 2) fail("bad-ply", "seed cloud needs at least 2 points");

    Scene scene;
    scene.settings.top_k = cfg.no_texture ? 0 : cfg.top_k;
    scene.settings.background = cfg.background;
    scene.settings.no_gamma = cfg.no_gamma;
    scene.settings.no_prim_sh = cfg.no_prim_sh;
    scene.settings.no_downweight = cfg.no_downweight;
    validate_settings(scene.settings);

    Vec3 lo = bundle.cloud.xyz[0], hi = bundle.cloud.xyz[0];
    for (const Vec3& p : bundle.cloud.xyz)
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], p[k]);
            hi[k] = std::max(hi[k], p[k]);
        }
    const Vec3 span = hi - lo;
    const double grid_extent = std::max({span.x, span.y, span.z, 1e-6});
    scene.extent = std::max(0.5 * norm(span), 1e-6);

    scene.nexels = initialize_primitives(bundle.cloud, cfg.budget, rng);
    if (scene.nexels.empty()) fail("bad-settings", "primitive budget too small to initialize");

    const HashGridConfig gc = HashGridConfig::for_extent(grid_extent, cfg.grid_levels,
                                                         cfg.grid_log2_table, cfg.grid_features);
    scene.field.init(gc, rng, cfg.grid_init);
    return scene;
}

double mean_psnr(const Scene& scene, const Bundle& bundle, const std::vector<int>& views) {
    if (views.empty()) return 0.0;
    double acc = 0.0;
    for (int v : views) {
        const RenderResult res = render(scene, bundle.cameras[v]);
        Image img;
        img.width = bundle.images[v].width;
        img.height = bundle.images[v].height;
        img.px = res.fb.final_img;
        for (double& x : img.px) x = clamp01(x);
        acc += psnr(img, bundle.images[v]);
    }
    return acc / static_cast<double>(views.size());
}

TrainResult train(const Bundle& bundle, const TrainConfig& cfg, const TrainHooks& hooks) {
    if (bundle.train_views.empty()) fail("bad-settings", "bundle has no train views");
    if (cfg.iterations < 0) fail("bad-config", "iterations must be >= 0");
    if (cfg.top_k < 0 || cfg.top_k > kMaxTopK)
        fail("bad-config", "top_k must be in [0, " + std::to_string(kMaxTopK) + "]");

    std::mt19937_64 rng(cfg.seed);
    TrainResult out;
    out.scene = initialize_scene(bundle, cfg, rng);
    Scene& scene = out.scene;
    out.extra.cameras = bundle.cameras;

    std::vector<AdamState> states(kGroupCount);
    AdamConfig group_cfg[kGroupCount];
    group_cfg[kGroupPosition] = {cfg.lr_position * scene.extent, 0.9, 0.999, cfg.adam_eps_position};
    group_cfg[kGroupQuat] = {cfg.lr_quat, 0.9, 0.999, cfg.adam_eps};
    group_cfg[kGroupScale] = {cfg.lr_scale, 0.9, 0.999, cfg.adam_eps};
    group_cfg[kGroupOpacity] = {cfg.lr_opacity, 0.9, 0.999, cfg.adam_eps};
    group_cfg[kGroupGamma] = {cfg.lr_gamma, 0.9, 0.999, cfg.adam_eps};
    group_cfg[kGroupShDc] = {cfg.lr_sh_dc, 0.9, 0.999, cfg.adam_eps};
    group_cfg[kGroupShRest] = {cfg.lr_sh_rest, 0.9, 0.999, cfg.adam_eps};
    group_cfg[kGroupGrid] = {cfg.lr_grid, 0.9, 0.999, cfg.adam_eps};
    group_cfg[kGroupW1] = {cfg.lr_mlp, 0.9, 0.999, cfg.adam_eps};
    group_cfg[kGroupW2] = {cfg.lr_mlp, 0.9, 0.999, cfg.adam_eps};
    group_cfg[kGroupW3] = {cfg.lr_mlp, 0.9, 0.999, cfg.adam_eps};

    std::vector<double> err_accum(scene.nexels.size(), 0.0);
    std::vector<int> perm;
    std::size_t perm_pos = 0;
    const double decay =
        cfg.lr_position_final / std::max(cfg.lr_position, std::numeric_limits<double>::min());

    GroupScratch scratch;
    std::vector<double> d_final, d_weights, d_texture, err_pixel;
    SceneGrads grads;

    for (int iter = 1; iter <= cfg.iterations; ++iter) {
        const auto t0 = std::chrono::steady_clock::now();

        if (perm_pos == perm.size()) {
            perm = bundle.train_views;
            std::shuffle(perm.begin(), perm.end(), rng);
            perm_pos = 0;
        }
        const int view = perm[perm_pos++];
        const Camera& cam = bundle.cameras[view];
        const Image& gt = bundle.images[view];

        RenderResult res = render(scene, cam);
        grads.allocate(scene);
        const LossTerms terms =
            losses_backward(scene, res.fb, gt, cfg.loss, d_final, d_weights, d_texture, grads);
        if (!terms.finite()) {
            if (!cfg.snapshot_path.empty()) {
                CheckpointExtra snap;
                snap.cameras = bundle.cameras;
                snap.iteration = static_cast<std::uint64_t>(iter);
                save_checkpoint(cfg.snapshot_path, scene, snap);
            }
            fail("non-finite-loss", "loss diverged at iteration " + std::to_string(iter));
        }

        const std::size_t n_pix = static_cast<std::size_t>(cam.width) * cam.height;
        err_pixel.resize(n_pix);
        for (std::size_t p = 0; p < n_pix; ++p) {
            double e = 0.0;
            for (int c = 0; c < 3; ++c)
                e += std::abs(res.fb.final_img[p * 3 + c] - gt.px[p * 3 + c]);
            err_pixel[p] = e / 3.0;
        }

        UpstreamGrads up;
        up.d_final = d_final.data();
        up.d_weights = scene.settings.top_k > 0 ? d_weights.data() : nullptr;
        up.d_texture = scene.settings.top_k > 0 ? d_texture.data() : nullptr;
        render_backward(scene, cam, res.fb, up, grads, err_pixel.data(), &res.blended_error);
        for (std::size_t i = 0; i < err_accum.size(); ++i) err_accum[i] += res.blended_error[i];

        group_cfg[kGroupPosition].lr =
            cfg.lr_position * scene.extent *
            std::pow(decay, static_cast<double>(iter) / std::max(1, cfg.iterations));
        for (int g = kGroupPosition; g <= kGroupShRest; ++g) {
            gather_group(scene.nexels, g, scratch.params);
            gather_group_grads(grads.prims, g, scratch.grads);
            adam_step(states[g], group_cfg[g], scratch.params.data(), scratch.grads.data(),
                      scratch.params.size());
            scatter_group(scratch.params, g, scene.nexels);
        }
        adam_step(states[kGroupGrid], group_cfg[kGroupGrid], scene.field.grid.table.data(),
                  grads.field.table.data(), scene.field.grid.table.size());
        adam_step(states[kGroupW1], group_cfg[kGroupW1], scene.field.mlp.w1.data(),
                  grads.field.w1.data(), scene.field.mlp.w1.size());
        adam_step(states[kGroupW2], group_cfg[kGroupW2], scene.field.mlp.w2.data(),
                  grads.field.w2.data(), scene.field.mlp.w2.size());
        adam_step(states[kGroupW3], group_cfg[kGroupW3], scene.field.mlp.w3.data(),
                  grads.field.w3.data(), scene.field.mlp.w3.size());

        if (cfg.densify_every > 0 && iter % cfg.densify_every == 0 && iter >= cfg.densify_start &&
            iter <= cfg.densify_end) {
            const DensityUpdate split =
                densify_split(scene.nexels, err_accum, cfg.budget, cfg.split_fraction, rng);
            for (int g = kGroupPosition; g <= kGroupShRest; ++g)
                adam_remap_rows(states[g], split.new_to_old, kRowWidth[g]);
            const DensityUpdate pruned = prune(scene.nexels, cfg.prune_opacity);
            for (int g = kGroupPosition; g <= kGroupShRest; ++g)
                adam_remap_rows(states[g], pruned.new_to_old, kRowWidth[g]);
            err_accum.assign(scene.nexels.size(), 0.0);
        }

        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.last_loss = terms;
        if (hooks.on_iteration)
            hooks.on_iteration(iter, terms, static_cast<int>(scene.nexels.size()), wall);
        if (hooks.on_eval && cfg.eval_every > 0 &&
            (iter % cfg.eval_every == 0 || iter == cfg.iterations))
            hooks.on_eval(iter, mean_psnr(scene, bundle, bundle.train_views),
                          mean_psnr(scene, bundle, bundle.test_views));
    }

    out.extra.iteration = static_cast<std::uint64_t>(cfg.iterations);
    out.optimizer = std::move(states);
    return out;
}

} // namespace nexel
