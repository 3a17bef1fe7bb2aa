#pragma once

#include "nexel/primitive.hpp"
#include "nexel/texture_field.hpp"

#include <vector>

namespace nexel {

struct RenderSettings {
    int top_k = 2;                    // 0 disables the texture pass entirely
    Vec3 background{0, 0, 0};
    double near_eps = 1e-3;           // plane crossings at or before this miss
    double alpha_max = 0.999;         // compositing clamp
    double min_transmittance = 1e-4;  // early termination threshold
    int tile = 16;
    // Ablations.
    bool no_gamma = false;      // kernel exponents pinned to 1 (plain Gaussian)
    bool no_prim_sh = false;    // per-primitive radiance reduced to its DC term
    bool no_downweight = false; // field level fading pinned to 1
};

inline constexpr int kMaxTopK = 8;

struct Scene {
    std::vector<Nexel> nexels;
    TextureField field;
    RenderSettings settings;
    double extent = 1.0; // scene scale, set at initialization

    int sh_degree() const { return settings.no_prim_sh ? 0 : 3; }
};

// Throws Error{"bad-settings"} for out-of-range knobs.
void validate_settings(const RenderSettings& s);

} // namespace nexel
