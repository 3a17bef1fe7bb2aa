#include "nexel/bundle.hpp"
#include "nexel/checkpoint.hpp"
#include "nexel/error.hpp"
#include "nexel/metrics.hpp"
#include "nexel/oracle.hpp"
#include "nexel/renderer.hpp"
#include "nexel/ssim.hpp"
#include "nexel/synthetic.hpp"
#include "nexel/threading.hpp"
#include "nexel/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <json.hpp>

namespace {

using namespace nexel;

Image clamped_final(const FrameBuffers& fb) {
    Image img;
    img.width = fb.width;
    img.height = fb.height;
    img.px = fb.final_img;
    for (double& x : img.px) x = clamp01(x);
    return img;
}

int cmd_synth(const std::string& spec, const std::string& out) {
    const SynthJob job = parse_synth_spec(spec);
    make_synthetic_bundle(job, out);
    std::printf("wrote %d views (%d train, %d test), %d cloud points to %s\n", job.n_views,
                job.n_views - job.n_test, job.n_test, job.cloud_points, out.c_str());
    return 0;
}

int cmd_train(const std::string& bundle_path, const std::string& out,
              const std::string& config_path, long long seed, bool seed_set, bool deterministic,
              bool save_optimizer) {
    TrainConfig cfg;
    if (!config_path.empty()) cfg = load_train_config(config_path, cfg);
    if (seed_set) cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.deterministic = deterministic;
    cfg.snapshot_path = out + ".diverged";

    const Bundle bundle = load_bundle(bundle_path);

    std::ofstream log(out + ".log.csv");
    if (!log) fail("missing-file", "cannot write " + out + ".log.csv");
    log << "iteration,l1,dssim,image,texture,alpha,opacity,grid,total,primitives,seconds\n";
    log.precision(10);

    TrainHooks hooks;
    hooks.on_iteration = [&](int iter, const LossTerms& t, int prims, double wall) {
        log << iter << ',' << t.l1 << ',' << t.dssim << ',' << t.image << ',' << t.texture << ','
            << t.alpha << ',' << t.opacity << ',' << t.grid << ',' << t.total << ',' << prims
            << ',' << wall << '\n';
    };
    hooks.on_eval = [](int iter, double train_psnr, double test_psnr) {
        std::printf("eval iteration=%d train_psnr=%.3f test_psnr=%.3f\n", iter, train_psnr,
                    test_psnr);
    };

    const TrainResult result = train(bundle, cfg, hooks);
    save_checkpoint(out, result.scene, result.extra,
                    save_optimizer ? &result.optimizer : nullptr);
    std::printf("trained %d iterations, %zu primitives, final loss %.6f -> %s\n", cfg.iterations,
                result.scene.nexels.size(), result.last_loss.total, out.c_str());
    return 0;
}

Camera camera_from_arg(const std::string& arg, const std::vector<Camera>& cams) {
    char* end = nullptr;
    const long idx = std::strtol(arg.c_str(), &end, 10);
    if (end && *end == '\0' && !arg.empty()) {
        if (idx < 0 || idx >= static_cast<long>(cams.size()))
            fail("bad-camera", "camera index " + arg + " out of range [0, " +
                                   std::to_string(cams.size()) + ")");
        return cams[idx];
    }
    std::ifstream in(arg);
    if (!in) fail("missing-file", "no camera file " + arg);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail("bad-json", arg + ": " + e.what());
    }
    Camera cam;
    try {
        cam.name = j.value("image", std::string("camera"));
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
        const auto& m = j.at("world_to_camera");
        if (!m.is_array() || m.size() != 16) fail("bad-json", "world_to_camera must hold 16 numbers");
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) cam.R.m[r][c] = m[4 * r + c].get<double>();
            cam.t[r] = m[4 * r + 3].get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        fail("bad-json", arg + ": " + e.what());
    }
    validate_camera(cam);
    return cam;
}

int cmd_render(const std::string& ckpt, const std::string& camera_arg, const std::string& out) {
    CheckpointExtra extra;
    const Scene scene = load_checkpoint(ckpt, &extra);
    const Camera cam = camera_from_arg(camera_arg, extra.cameras);
    const RenderResult res = render(scene, cam);
    save_png(out, clamped_final(res.fb));
    std::printf("rendered %dx%d view to %s\n", cam.width, cam.height, out.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& bundle_path, const std::string& split) {
    CheckpointExtra extra;
    const Scene scene = load_checkpoint(ckpt, &extra);
    const Bundle bundle = load_bundle(bundle_path);

    const std::vector<int>* views = nullptr;
    if (split == "test") views = &bundle.test_views;
    else if (split == "train") views = &bundle.train_views;
    else fail("bad-settings", "split must be train or test, got \"" + split + "\"");
    if (views->empty()) fail("bad-settings", "bundle has no " + split + " views");

    std::printf("view,psnr,ssim\n");
    double sum_psnr = 0.0, sum_ssim = 0.0;
    for (int v : *views) {
        const RenderResult res = render(scene, bundle.cameras[v]);
        const Image img = clamped_final(res.fb);
        const double p = psnr(img, bundle.images[v]);
        const double s = ssim(img, bundle.images[v]);
        sum_psnr += p;
        sum_ssim += s;
        std::printf("%s,%.6f,%.6f\n", bundle.cameras[v].name.c_str(), p, s);
    }
    const double n = static_cast<double>(views->size());
    std::printf("mean,%.6f,%.6f\n", sum_psnr / n, sum_ssim / n);
    return 0;
}

int cmd_info(const std::string& ckpt) {
    CheckpointExtra extra;
    std::vector<AdamState> opt;
    const Scene scene = load_checkpoint(ckpt, &extra, &opt);
    const MemoryReport mem = report_memory(scene);
    const HashGridConfig& gc = scene.field.grid.cfg;

    std::printf("primitives: %zu\n", scene.nexels.size());
    std::printf("iteration: %llu\n", static_cast<unsigned long long>(extra.iteration));
    std::printf("cameras: %zu\n", extra.cameras.size());
    std::printf("top_k: %d\n", scene.settings.top_k);
    std::printf("grid: %d levels x 2^%d rows x %d features = %zu params\n", gc.levels,
                gc.log2_table, gc.features, gc.param_count());
    std::printf("mlp: %d-%d-%d-%d = %zu params\n", scene.field.mlp.n_in, scene.field.mlp.n_hidden,
                scene.field.mlp.n_hidden, scene.field.mlp.n_out, scene.field.mlp.param_count());
    std::printf("ablations: no_gamma=%d no_prim_sh=%d no_downweight=%d\n",
                scene.settings.no_gamma, scene.settings.no_prim_sh,
                scene.settings.no_downweight);
    std::printf("optimizer state: %s\n", opt.empty() ? "absent" : "present");
    std::printf("memory: %.1f MB (primitives %.1f MB, field %.1f MB)\n", mem.total_mb,
                mem.primitive_bytes / 1e6, mem.field_bytes / 1e6);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"surfel scene trainer/renderer with a shared neural texture field"};
    app.require_subcommand(1);
    app.footer("NEXEL_THREADS overrides the worker count (default: all cores).");

    std::string synth_spec, synth_out;
    auto* synth = app.add_subcommand("synth", "emit a synthetic dataset");
    synth->add_option("spec", synth_spec, "json spec file or built-in name (three-quads)")
        ->required();
    synth->add_option("out", synth_out, "output bundle directory")->required();

    std::string train_bundle, train_out, train_config;
    long long train_seed = 0;
    bool train_deterministic = false, train_save_opt = false;
    auto* tr = app.add_subcommand("train", "fit a scene to a bundle");
    tr->add_option("bundle", train_bundle, "input bundle directory")->required();
    tr->add_option("--out", train_out, "output checkpoint path")->required();
    tr->add_option("--config", train_config, "key = value config file");
    auto* seed_opt = tr->add_option("--seed", train_seed, "rng seed (overrides config)");
    tr->add_flag("--deterministic", train_deterministic,
                 "assert bit-reproducible mode (always on)");
    tr->add_flag("--save-optimizer", train_save_opt, "embed optimizer state in the checkpoint");

    std::string render_ckpt, render_camera, render_out;
    auto* rd = app.add_subcommand("render", "render one view from a checkpoint");
    rd->add_option("checkpoint", render_ckpt, "checkpoint path")->required();
    rd->add_option("--camera", render_camera, "view index into the checkpoint cameras, or a json file")
        ->required();
    rd->add_option("--out", render_out, "output png path")->required();

    std::string eval_ckpt, eval_bundle, eval_split = "test";
    auto* ev = app.add_subcommand("eval", "per-view psnr/ssim as csv");
    ev->add_option("checkpoint", eval_ckpt, "checkpoint path")->required();
    ev->add_option("bundle", eval_bundle, "bundle directory")->required();
    ev->add_option("--split", eval_split, "train or test (default test)");

    std::string info_ckpt;
    auto* in = app.add_subcommand("info", "checkpoint summary and memory report");
    in->add_option("checkpoint", info_ckpt, "checkpoint path")->required();

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(synth_spec, synth_out);
        if (tr->parsed())
            return cmd_train(train_bundle, train_out, train_config, train_seed,
                             seed_opt->count() > 0, train_deterministic, train_save_opt);
        if (rd->parsed()) return cmd_render(render_ckpt, render_camera, render_out);
        if (ev->parsed()) return cmd_eval(eval_ckpt, eval_bundle, eval_split);
        if (in->parsed()) return cmd_info(info_ckpt);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const nexel::Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", e.code().c_str(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
    return 0;
}
