#pragma once

#include "nexel/framebuffers.hpp"
#include "nexel/image.hpp"
#include "nexel/renderer.hpp"
#include "nexel/scene.hpp"

#include <vector>

namespace nexel {

struct LossWeights {
    double dssim = 0.2;   // blend inside the image term
    double alpha = 0.005;
    double texture = 0.5;
    double opacity = 0.01;
    double grid = 0.01;
};

struct LossTerms {
    double l1 = 0, dssim = 0, image = 0;
    double texture = 0, alpha = 0, opacity = 0, grid = 0;
    double total = 0;

    bool finite() const;
};

// Pixels whose buffered weights sum below this are excluded from the texture
// supervision mean.
inline constexpr double kTextureLossMinWeight = 1e-6;

double loss_l1(const Image& pred, const Image& gt);

// Texture-branch supervision: mean absolute error between gt and the
// weight-normalized buffered texture color, over included pixels.
double loss_texture(const FrameBuffers& fb, const Image& gt);

// Mean per-pixel gap between full coverage and the buffered weight mass.
double loss_alpha(const FrameBuffers& fb);

double loss_opacity(const std::vector<Nexel>& nexels);

// Sum over levels of level_scale^-3 * sum of squared entries.
double loss_grid(const HashGrid& grid);

LossTerms compute_losses(const Scene& scene, const FrameBuffers& fb, const Image& gt,
                         const LossWeights& w);

// Computes all terms and their gradients. d_final/d_weights/d_texture receive
// the upstream gradients for render_backward (resized and overwritten);
// the direct parameter terms (opacity, grid) accumulate straight into grads.
LossTerms losses_backward(const Scene& scene, const FrameBuffers& fb, const Image& gt,
                          const LossWeights& w, std::vector<double>& d_final,
                          std::vector<double>& d_weights, std::vector<double>& d_texture,
                          SceneGrads& grads);

} // namespace nexel
