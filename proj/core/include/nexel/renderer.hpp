#pragma once

#include "nexel/camera.hpp"
#include "nexel/framebuffers.hpp"
#include "nexel/scene.hpp"

#include <vector>

namespace nexel {

struct RenderResult {
    FrameBuffers fb;
    // Per-primitive accumulator for density control; zeroed by the collection
    // pass and filled by render_backward when a per-pixel error map is given.
    std::vector<double> blended_error;
};

// Pass 1: tile binning, global center-depth sort, front-to-back compositing
// with early termination, top-K bookkeeping. Fills base/ids/depths/weights/
// residual. base excludes the buffered primitives' own sh colors and includes
// the background behind the terminal transmittance.
void collection_pass(const Scene& scene, const Camera& cam, RenderResult& out);

// Pass 2: queries the texture field at the buffered crossings and composites
// final = base + sum_j weights[j] * texture[j].
void texturing_pass(const Scene& scene, const Camera& cam, FrameBuffers& fb);

RenderResult render(const Scene& scene, const Camera& cam);

// Gradients of everything trainable.
struct SceneGrads {
    std::vector<PrimitiveGrad> prims;
    FieldGrads field;

    void allocate(const Scene& scene);
};

// Upstream gradients; any pointer may be null (treated as zero). Layouts
// match the FrameBuffers arrays.
struct UpstreamGrads {
    const double* d_final = nullptr;   // H*W*3
    const double* d_weights = nullptr; // H*W*K
    const double* d_texture = nullptr; // H*W*K*3
};

// Reverse pass. Re-marches the tiles with the forward's exact ordering and
// termination, so fb must be the unmodified forward output for scene/cam.
// Top-K membership is treated as constant. err_pixel (H*W, nullable) is the
// per-pixel error used to accumulate blended_error (also nullable).
void render_backward(const Scene& scene, const Camera& cam, const FrameBuffers& fb,
                     const UpstreamGrads& up, SceneGrads& grads,
                     const double* err_pixel = nullptr,
                     std::vector<double>* blended_error = nullptr);

} // namespace nexel
