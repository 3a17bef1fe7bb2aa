#pragma once

#include "nexel/camera.hpp"
#include "nexel/image.hpp"
#include "nexel/vec_math.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nexel {

enum class QuadTexture { Solid, Checker, Stripes, Radial };

// Opaque rectangle: center +/- u_axis +/- v_axis, with an analytic texture
// over local coordinates (s, t) in [0,1]^2.
struct TexturedQuad {
    Vec3 center;
    Vec3 u_axis; // half-extent vectors, orthogonal
    Vec3 v_axis;
    QuadTexture texture = QuadTexture::Solid;
    int cells = 8;
    Vec3 color_a{0.9, 0.9, 0.9};
    Vec3 color_b{0.1, 0.1, 0.1};
};

struct SyntheticSpec {
    std::vector<TexturedQuad> quads;
    Vec3 background{0.08, 0.08, 0.1};
};

// Full job description for emitting a dataset from a spec.
struct SynthJob {
    SyntheticSpec spec;
    int n_views = 20;
    int n_test = 4;
    int resolution = 128;
    int cloud_points = 400;
    std::uint64_t seed = 1;
};

Vec3 quad_color(const TexturedQuad& q, double s, double t);

// Exact nearest-hit raytrace, one ray per pixel center, no shading.
Image raytrace_synthetic(const SyntheticSpec& spec, const Camera& cam);

// Evenly spaced ring of cameras looking at the quad centroid, with a
// deterministic elevation wobble so views are not coplanar.
std::vector<Camera> ring_cameras(const SyntheticSpec& spec, int n_views, int resolution);

// Renders all views, samples a colored point cloud on the quad surfaces, and
// writes a bundle to out_dir. Every (n_views / n_test)-th view goes to the
// test split.
void make_synthetic_bundle(const SynthJob& job, const std::string& out_dir);

// The built-in overfit scene: two checkered quads and one striped quad.
SynthJob three_quad_job();

// Reads a job from json, or returns the built-in when the argument names it.
SynthJob parse_synth_spec(const std::string& path_or_name);

} // namespace nexel
