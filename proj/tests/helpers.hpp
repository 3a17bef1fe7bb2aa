#pragma once

#include "nexel/camera.hpp"
#include "nexel/intersect.hpp"
#include "nexel/oracle.hpp"
#include "nexel/renderer.hpp"
#include "nexel/scene.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

namespace testutil {

using namespace nexel;

inline double urand(std::mt19937_64& g, double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(g);
}

inline Vec4 random_quat(std::mt19937_64& g) {
    const double u1 = urand(g, 0, 1), u2 = urand(g, 0, 1), u3 = urand(g, 0, 1);
    const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
    return {b * std::cos(2 * M_PI * u3), a * std::sin(2 * M_PI * u2), a * std::cos(2 * M_PI * u2),
            b * std::sin(2 * M_PI * u3)};
}

// raw = softplus^-1(y), so 1 + softplus(raw) == 1 + y.
inline double softplus_inverse(double y) { return std::log(std::expm1(y)); }

// |analytic - fd| <= max(abs_floor, rel_tol * max(|analytic|, |fd|)).
inline bool grad_close(double analytic, double fd, double rel_tol, double abs_floor) {
    const double scale = std::max(std::abs(analytic), std::abs(fd));
    return std::abs(analytic - fd) <= std::max(abs_floor, rel_tol * scale);
}

struct GradReport {
    double max_rel = 0.0; // worst |a-f| / max(|a|,|f|) among entries above the floor
    int failures = 0;
    int worst_index = -1;
};

inline GradReport compare_grads(const std::vector<double>& analytic, const std::vector<double>& fd,
                                double rel_tol, double abs_floor) {
    GradReport r;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double scale = std::max(std::abs(analytic[i]), std::abs(fd[i]));
        const double err = std::abs(analytic[i] - fd[i]);
        if (err > abs_floor && scale > 0.0) {
            const double rel = err / scale;
            if (rel > r.max_rel) {
                r.max_rel = rel;
                r.worst_index = static_cast<int>(i);
            }
        }
        if (!grad_close(analytic[i], fd[i], rel_tol, abs_floor)) ++r.failures;
    }
    return r;
}

// Camera at `pos` looking at `target`, z-up world, OpenCV axes.
inline Camera look_at_camera(Vec3 pos, Vec3 target, int res, double focal) {
    Camera cam;
    cam.name = "test";
    cam.width = cam.height = res;
    cam.fx = cam.fy = focal;
    cam.cx = cam.cy = res / 2.0;
    const Vec3 fwd = normalized(target - pos);
    Vec3 up{0, 0, 1};
    if (std::abs(dot(fwd, up)) > 0.999) up = {0, 1, 0};
    const Vec3 right = normalized(cross(fwd, up));
    const Vec3 down = cross(fwd, right);
    for (int c = 0; c < 3; ++c) {
        cam.R.m[0][c] = right[c];
        cam.R.m[1][c] = down[c];
        cam.R.m[2][c] = fwd[c];
    }
    cam.t = -(cam.R * pos);
    return cam;
}

inline Camera orbit_camera(std::mt19937_64& g, int res, double focal, double dist) {
    const double theta = urand(g, 0, 2 * M_PI);
    const double h = urand(g, -0.5, 0.9) * dist;
    const double r = std::sqrt(std::max(dist * dist - h * h, 0.25 * dist * dist));
    return look_at_camera({r * std::cos(theta), r * std::sin(theta), h}, {0, 0, 0}, res, focal);
}

inline Nexel random_nexel(std::mt19937_64& g, double box, double sigma_lo, double sigma_hi,
                          double op_lo, double op_hi) {
    Nexel n;
    n.mu = {urand(g, -box, box), urand(g, -box, box), urand(g, -box, box)};
    n.quat = random_quat(g);
    n.log_scale = {std::log(urand(g, sigma_lo, sigma_hi)), std::log(urand(g, sigma_lo, sigma_hi))};
    n.opacity_raw = inverse_sigmoid(urand(g, op_lo, op_hi));
    n.gamma_raw = {softplus_inverse(urand(g, 0.1, 1.0)), softplus_inverse(urand(g, 0.1, 1.0))};
    for (int k = 0; k < kShCoeffs; ++k)
        for (int c = 0; c < 3; ++c)
            n.sh[k * 3 + c] = k == 0 ? urand(g, -0.8, 0.8) : urand(g, -0.12, 0.12);
    return n;
}

// Small real field (default 64-wide MLP unless hidden is overridden).
inline void init_field(TextureField& field, std::mt19937_64& g, int levels, int log2_table,
                       double grid_init, int hidden = 64) {
    field.mlp.n_hidden = hidden;
    field.init(HashGridConfig::for_extent(2.0, levels, log2_table, 2), g, grid_init);
}

inline Scene random_scene(std::mt19937_64& g, int n_prims, int top_k, int grid_levels = 4,
                          int grid_log2 = 5, double grid_init = 1e-2, int hidden = 16) {
    Scene scene;
    scene.settings.top_k = top_k;
    scene.settings.background = {urand(g, 0, 1), urand(g, 0, 1), urand(g, 0, 1)};
    for (int i = 0; i < n_prims; ++i)
        scene.nexels.push_back(random_nexel(g, 0.6, 0.15, 0.45, 0.35, 0.85));
    init_field(scene.field, g, grid_levels, grid_log2, grid_init, hidden);
    return scene;
}

// One unclamped pixel march mirroring the compositing rules: every plane
// crossing above the opacity threshold, sorted by primitive center depth,
// alpha clamped, no early termination.
struct MarchHit {
    int id = -1;
    double depth = 0; // crossing t
    double weight = 0;
    double alpha = 0; // post-clamp
    Vec3 color;       // primitive sh color for this ray
    int arrival = 0;  // compositing order
};

struct PixelMarch {
    std::vector<MarchHit> hits;
    double residual = 1.0;
};

inline PixelMarch full_march(const Scene& scene, const std::vector<ActivatedPrimitive>& acts,
                             const Camera& cam, int px, int py) {
    const Ray ray = cam.pixel_ray(px + 0.5, py + 0.5);
    struct Cand {
        int id;
        double center_depth;
        SurfelHit h;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < acts.size(); ++i) {
        const SurfelHit h = intersect(acts[i], ray, scene.settings.near_eps);
        if (h.hit) cands.push_back({static_cast<int>(i), cam.center_depth(acts[i].mu), h});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.center_depth != b.center_depth) return a.center_depth < b.center_depth;
        return a.id < b.id;
    });
    PixelMarch out;
    double T = 1.0;
    for (std::size_t k = 0; k < cands.size(); ++k) {
        const double alpha = std::min(cands[k].h.alpha, scene.settings.alpha_max);
        MarchHit mh;
        mh.id = cands[k].id;
        mh.depth = cands[k].h.t;
        mh.alpha = alpha;
        mh.weight = alpha * T;
        mh.color = eval_sh(scene.nexels[cands[k].id].sh.data(), ray.dir, scene.sh_degree());
        mh.arrival = static_cast<int>(k);
        out.hits.push_back(mh);
        T *= 1.0 - alpha;
    }
    out.residual = T;
    return out;
}

// Flat parameter vector over everything learnable: primitives (60 each, Nexel
// field order), grid table, mlp w1/w2/w3.
inline std::vector<double> pack_scene(const Scene& s) {
    std::vector<double> p;
    for (const Nexel& n : s.nexels) {
        for (int k = 0; k < 3; ++k) p.push_back(n.mu[k]);
        for (int k = 0; k < 4; ++k) p.push_back(n.quat[k]);
        for (int k = 0; k < 2; ++k) p.push_back(n.log_scale[k]);
        p.push_back(n.opacity_raw);
        for (int k = 0; k < 2; ++k) p.push_back(n.gamma_raw[k]);
        for (double v : n.sh) p.push_back(v);
    }
    p.insert(p.end(), s.field.grid.table.begin(), s.field.grid.table.end());
    p.insert(p.end(), s.field.mlp.w1.begin(), s.field.mlp.w1.end());
    p.insert(p.end(), s.field.mlp.w2.begin(), s.field.mlp.w2.end());
    p.insert(p.end(), s.field.mlp.w3.begin(), s.field.mlp.w3.end());
    return p;
}

inline void unpack_scene(const std::vector<double>& p, Scene& s) {
    std::size_t i = 0;
    for (Nexel& n : s.nexels) {
        for (int k = 0; k < 3; ++k) n.mu[k] = p[i++];
        for (int k = 0; k < 4; ++k) n.quat[k] = p[i++];
        for (int k = 0; k < 2; ++k) n.log_scale[k] = p[i++];
        n.opacity_raw = p[i++];
        for (int k = 0; k < 2; ++k) n.gamma_raw[k] = p[i++];
        for (double& v : n.sh) v = p[i++];
    }
    for (double& v : s.field.grid.table) v = p[i++];
    for (double& v : s.field.mlp.w1) v = p[i++];
    for (double& v : s.field.mlp.w2) v = p[i++];
    for (double& v : s.field.mlp.w3) v = p[i++];
}

// Same flat order as pack_scene, from SceneGrads.
inline std::vector<double> pack_grads(const SceneGrads& g) {
    std::vector<double> p;
    for (const PrimitiveGrad& n : g.prims) {
        for (int k = 0; k < 3; ++k) p.push_back(n.mu[k]);
        for (int k = 0; k < 4; ++k) p.push_back(n.quat[k]);
        for (int k = 0; k < 2; ++k) p.push_back(n.log_scale[k]);
        p.push_back(n.opacity_raw);
        for (int k = 0; k < 2; ++k) p.push_back(n.gamma_raw[k]);
        for (double v : n.sh) p.push_back(v);
    }
    p.insert(p.end(), g.field.table.begin(), g.field.table.end());
    p.insert(p.end(), g.field.w1.begin(), g.field.w1.end());
    p.insert(p.end(), g.field.w2.begin(), g.field.w2.end());
    p.insert(p.end(), g.field.w3.begin(), g.field.w3.end());
    return p;
}

// Margin checks that keep finite differencing on one smooth branch: no
// grazing rays, no crossings at the near plane, no kernel values straddling
// the support threshold or the compositing clamp, no near-terminal
// transmittance, distinct top-K boundary weights, and sh channels away from
// their clamp. Scenes failing any margin are re-rolled, never patched.
inline bool scene_is_fd_safe(const Scene& scene, const Camera& cam, int top_k) {
    const std::vector<ActivatedPrimitive> acts = activate_all(scene.nexels, scene.settings.no_gamma);
    for (int py = 0; py < cam.height; ++py) {
        for (int px = 0; px < cam.width; ++px) {
            const Ray ray = cam.pixel_ray(px + 0.5, py + 0.5);
            for (const ActivatedPrimitive& a : acts) {
                const Vec3 n = a.R.col(2);
                const double denom = dot(ray.dir, n);
                if (std::abs(denom) < 1e-4) return false;
                const double t = dot(a.mu - ray.origin, n) / denom;
                if (std::abs(t - scene.settings.near_eps) < 1e-3) return false;
                if (t <= scene.settings.near_eps) continue;
                const Vec3 delta = ray.origin + t * ray.dir - a.mu;
                const double u = dot(delta, a.R.col(0)) / a.sigma.x;
                const double v = dot(delta, a.R.col(1)) / a.sigma.y;
                const double alpha = eval_kernel(u, v, a.opacity, a.gamma);
                if (std::abs(alpha - kAlphaMin) < 2e-3) return false;
                if (alpha > scene.settings.alpha_max - 5e-3) return false;
            }
            const PixelMarch m = full_march(scene, acts, cam, px, py);
            if (m.residual < 3e-4) return false;
            if (top_k > 0 && static_cast<int>(m.hits.size()) > top_k) {
                std::vector<double> w;
                for (const MarchHit& h : m.hits) w.push_back(h.weight);
                std::sort(w.begin(), w.end(), std::greater<>());
                if (w[top_k - 1] - w[top_k] < 1e-3) return false;
            }
            for (const MarchHit& h : m.hits) {
                double basis[16];
                sh_basis(ray.dir, basis, scene.sh_degree());
                for (int c = 0; c < 3; ++c) {
                    double acc = 0.5;
                    for (int k = 0; k < sh_coeff_count(scene.sh_degree()); ++k)
                        acc += scene.nexels[h.id].sh[k * 3 + c] * basis[k];
                    if (std::abs(acc) < 1e-3) return false;
                }
            }
        }
    }
    return true;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        for (int i = 0;; ++i) {
            auto candidate = base / ("nexel_test_" + std::to_string(::getpid()) + "_" +
                                     std::to_string(i));
            if (std::filesystem::create_directory(candidate)) {
                path = candidate;
                return;
            }
        }
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

} // namespace testutil
