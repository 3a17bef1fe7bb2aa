#include "nexel/synthetic.hpp"

#include "nexel/bundle.hpp"
#include "nexel/error.hpp"
#include "nexel/threading.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

namespace nexel {

namespace {

int cell_of(double s, int cells) {
    return std::min(cells - 1, static_cast<int>(std::floor(s * cells)));
}

Vec3 quad_normal(const TexturedQuad& q) { return normalized(cross(q.u_axis, q.v_axis)); }

Vec3 scene_centroid(const SyntheticSpec& spec) {
    Vec3 c;
    if (spec.quads.empty()) return c;
    for (const TexturedQuad& q : spec.quads) c += q.center;
    return (1.0 / static_cast<double>(spec.quads.size())) * c;
}

double scene_radius(const SyntheticSpec& spec, Vec3 centroid) {
    double r = 1e-6;
    for (const TexturedQuad& q : spec.quads)
        for (int su : {-1, 1})
            for (int sv : {-1, 1}) {
                const Vec3 corner =
                    q.center + static_cast<double>(su) * q.u_axis + static_cast<double>(sv) * q.v_axis;
                r = std::max(r, norm(corner - centroid));
            }
    return r;
}

Camera look_at(Vec3 eye, Vec3 target, int resolution, const std::string& name) {
    const Vec3 forward = normalized(target - eye);
    const Vec3 up{0, 0, 1};
    Vec3 right = cross(forward, up);
    const double rn = norm(right);
    if (rn < 1e-9) fail("bad-camera", "view direction parallel to the up axis");
    right = (1.0 / rn) * right;
    const Vec3 down = cross(forward, right);

    Camera cam;
    cam.name = name;
    cam.width = cam.height = resolution;
    cam.fx = cam.fy = static_cast<double>(resolution);
    cam.cx = cam.cy = resolution / 2.0;
    for (int c = 0; c < 3; ++c) {
        cam.R.m[0][c] = right[c];
        cam.R.m[1][c] = down[c];
        cam.R.m[2][c] = forward[c];
    }
    cam.t = -(cam.R * eye);
    return cam;
}

TexturedQuad make_quad(Vec3 center, Vec3 u_dir, Vec3 v_dir, Vec2 half, QuadTexture tex, int cells,
                       Vec3 a, Vec3 b) {
    TexturedQuad q;
    q.center = center;
    const Vec3 u = normalized(u_dir);
    Vec3 v = v_dir - dot(v_dir, u) * u;
    v = normalized(v);
    q.u_axis = half.x * u;
    q.v_axis = half.y * v;
    q.texture = tex;
    q.cells = cells;
    q.color_a = a;
    q.color_b = b;
    return q;
}

QuadTexture texture_from_name(const std::string& name) {
    if (name == "solid") return QuadTexture::Solid;
    if (name == "checker") return QuadTexture::Checker;
    if (name == "stripes") return QuadTexture::Stripes;
    if (name == "radial") return QuadTexture::Radial;
    fail("bad-json", "unknown quad texture \"" + name + "\"");
}

Vec3 vec3_from(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 3) fail("bad-json", "expected a 3-number array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

} // namespace

Vec3 quad_color(const TexturedQuad& q, double s, double t) {
    switch (q.texture) {
    case QuadTexture::Solid:
        return q.color_a;
    case QuadTexture::Checker:
        return ((cell_of(s, q.cells) + cell_of(t, q.cells)) & 1) ? q.color_b : q.color_a;
    case QuadTexture::Stripes:
        return (cell_of(s, q.cells) & 1) ? q.color_b : q.color_a;
    case QuadTexture::Radial: {
        const double ds = s - 0.5, dt = t - 0.5;
        const double r = clamp01(2.0 * std::sqrt(ds * ds + dt * dt));
        return (1.0 - r) * q.color_a + r * q.color_b;
    }
    }
    return q.color_a;
}

Image raytrace_synthetic(const SyntheticSpec& spec, const Camera& cam) {
    validate_camera(cam);
    struct QuadFrame {
        Vec3 n;
        double inv_u2, inv_v2;
    };
    std::vector<QuadFrame> frames;
    frames.reserve(spec.quads.size());
    for (const TexturedQuad& q : spec.quads)
        frames.push_back({quad_normal(q), 1.0 / dot(q.u_axis, q.u_axis),
                          1.0 / dot(q.v_axis, q.v_axis)});

    Image img;
    img.width = cam.width;
    img.height = cam.height;
    img.px.assign(static_cast<std::size_t>(cam.width) * cam.height * 3, 0.0);

    parallel_chunks(cam.height, 1, [&](std::size_t, std::size_t row, std::size_t) {
        const int py = static_cast<int>(row);
        for (int px = 0; px < cam.width; ++px) {
            const Ray ray = cam.pixel_ray(px + 0.5, py + 0.5);
            double best_t = 1e300;
            Vec3 color = spec.background;
            for (std::size_t i = 0; i < spec.quads.size(); ++i) {
                const TexturedQuad& q = spec.quads[i];
                const double denom = dot(ray.dir, frames[i].n);
                if (std::abs(denom) < 1e-12) continue;
                const double t = dot(q.center - ray.origin, frames[i].n) / denom;
                if (t <= 1e-9 || t >= best_t) continue;
                const Vec3 p = ray.origin + t * ray.dir - q.center;
                const double lu = dot(p, q.u_axis) * frames[i].inv_u2;
                const double lv = dot(p, q.v_axis) * frames[i].inv_v2;
                if (std::abs(lu) > 1.0 || std::abs(lv) > 1.0) continue;
                best_t = t;
                color = quad_color(q, (lu + 1.0) / 2.0, (lv + 1.0) / 2.0);
            }
            const std::size_t pix = (static_cast<std::size_t>(py) * cam.width + px) * 3;
            img.px[pix + 0] = color.x;
            img.px[pix + 1] = color.y;
            img.px[pix + 2] = color.z;
        }
    });
    return img;
}

std::vector<Camera> ring_cameras(const SyntheticSpec& spec, int n_views, int resolution) {
    const Vec3 c = scene_centroid(spec);
    const double rs = scene_radius(spec, c);
    const double dist = 2.5 * rs;

    std::vector<Camera> cams;
    cams.reserve(n_views);
    for (int i = 0; i < n_views; ++i) {
        const double theta = 2.0 * M_PI * i / n_views + 0.37;
        const double h = dist * (0.28 + 0.14 * std::sin(3.0 * theta + 0.5));
        const Vec3 eye = c + Vec3{dist * std::cos(theta), dist * std::sin(theta), h};
        char name[32];
        std::snprintf(name, sizeof(name), "view_%03d", i);
        cams.push_back(look_at(eye, c, resolution, name));
    }
    return cams;
}

void make_synthetic_bundle(const SynthJob& job, const std::string& out_dir) {
    if (job.spec.quads.empty()) fail("bad-settings", "synthetic spec has no quads");
    if (job.n_views < 1) fail("bad-settings", "need at least one view");
    if (job.cloud_points < 2) fail("bad-settings", "need at least two cloud points");

    const std::vector<Camera> cams = ring_cameras(job.spec, job.n_views, job.resolution);
    std::vector<Image> images;
    images.reserve(cams.size());
    for (const Camera& cam : cams) images.push_back(raytrace_synthetic(job.spec, cam));

    std::vector<int> train, test;
    const int stride = job.n_test > 0 ? std::max(1, job.n_views / job.n_test) : 0;
    for (int i = 0; i < job.n_views; ++i) {
        const bool is_test =
            job.n_test > 0 && i % stride == stride / 2 && static_cast<int>(test.size()) < job.n_test;
        (is_test ? test : train).push_back(i);
    }

    std::mt19937_64 rng(job.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    PointCloud cloud;
    cloud.xyz.reserve(job.cloud_points);
    cloud.rgb.reserve(job.cloud_points);
    const int per_quad = job.cloud_points / static_cast<int>(job.spec.quads.size());
    for (std::size_t qi = 0; qi < job.spec.quads.size(); ++qi) {
        const TexturedQuad& q = job.spec.quads[qi];
        int n = per_quad;
        if (qi == 0) n += job.cloud_points - per_quad * static_cast<int>(job.spec.quads.size());
        for (int i = 0; i < n; ++i) {
            const double s = uni(rng), t = uni(rng);
            cloud.xyz.push_back(q.center + (2.0 * s - 1.0) * q.u_axis + (2.0 * t - 1.0) * q.v_axis);
            cloud.rgb.push_back(quad_color(q, s, t));
        }
    }

    save_bundle(out_dir, cams, images, cloud, train, test);
}

SynthJob three_quad_job() {
    SynthJob job;
    job.spec.background = {0.08, 0.08, 0.1};
    job.spec.quads = {
        make_quad({0, 0, 0}, {1, 0, 0}, {0, 0.93, -0.2}, {0.9, 0.9}, QuadTexture::Checker, 6,
                  {0.92, 0.92, 0.92}, {0.12, 0.12, 0.55}),
        make_quad({0.75, -0.4, 0.35}, {0.6, 0.8, 0}, {-0.44, 0.33, 0.84}, {0.55, 0.55},
                  QuadTexture::Checker, 4, {0.9, 0.35, 0.15}, {0.95, 0.85, 0.25}),
        make_quad({-0.65, 0.5, 0.3}, {0.8, -0.6, 0}, {0.42, 0.56, 0.7}, {0.5, 0.5},
                  QuadTexture::Stripes, 5, {0.15, 0.75, 0.3}, {0.08, 0.12, 0.2}),
    };
    return job;
}

SynthJob parse_synth_spec(const std::string& path_or_name) {
    if (path_or_name == "three-quads") return three_quad_job();
    std::ifstream in(path_or_name);
    if (!in) fail("missing-file", "no such spec file or built-in scene: " + path_or_name);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail("bad-json", path_or_name + ": " + e.what());
    }

    SynthJob job;
    try {
        if (j.contains("background")) job.spec.background = vec3_from(j["background"]);
        for (const auto& jq : j.at("quads")) {
            TexturedQuad base;
            const Vec3 u_dir = vec3_from(jq.at("u_axis"));
            const Vec3 v_dir = vec3_from(jq.at("v_axis"));
            job.spec.quads.push_back(make_quad(
                vec3_from(jq.at("center")), u_dir, v_dir, {norm(u_dir), norm(v_dir)},
                texture_from_name(jq.value("texture", "checker")), jq.value("cells", base.cells),
                jq.contains("color_a") ? vec3_from(jq["color_a"]) : base.color_a,
                jq.contains("color_b") ? vec3_from(jq["color_b"]) : base.color_b));
        }
        job.n_views = j.value("views", job.n_views);
        job.n_test = j.value("test_views", job.n_test);
        job.resolution = j.value("resolution", job.resolution);
        job.cloud_points = j.value("points", job.cloud_points);
        job.seed = j.value("seed", job.seed);
    } catch (const nlohmann::json::exception& e) {
        fail("bad-json", path_or_name + ": " + e.what());
    }
    return job;
}

} // namespace nexel
