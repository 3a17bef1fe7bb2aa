#pragma once

#include "nexel/vec_math.hpp"
#include "nexel/error.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace nexel {

inline constexpr int kShCoeffs = 16;              // degree 3, (3+1)^2 basis functions
inline constexpr int kShValues = kShCoeffs * 3;   // rgb interleaved per coefficient
inline constexpr int kParamsPerPrimitive = 3 + 4 + 2 + 1 + 2 + kShValues;

// Raw (pre-activation) parameters of one surfel-like primitive.
// quat is (w, x, y, z) and need not be normalized; scales are stored in log
// space; opacity maps through a sigmoid; the kernel exponents map through
// 1 + softplus so they stay >= 1. sh holds 16 coefficients x rgb, coefficient
// major: sh[k*3 + channel], sh[0..2] is the DC term.
struct Nexel {
    Vec3 mu;
    Vec4 quat{1, 0, 0, 0};
    Vec2 log_scale;
    double opacity_raw = 0;
    Vec2 gamma_raw{-5, -5};
    std::array<double, kShValues> sh{};
};

// Activation output. R columns are the local frame: col0/col1 span the
// primitive plane (scaled by sigma), col2 is the normal.
struct ActivatedPrimitive {
    Vec3 mu;
    Mat3 R;
    Vec2 sigma;
    double opacity = 0;
    Vec2 gamma{1, 1};
};

Mat3 quat_to_rotation(Vec4 q_unit);

// Accumulates dL/dq_raw given dL/dR, chaining through normalization of q_raw.
Vec4 quat_rotation_backward(Vec4 q_raw, const Mat3& dL_dR);

// gamma_frozen pins both exponents to exactly 1 (their gradients are dropped
// by the caller in that mode). Throws Error{"bad-primitive"} on non-finite
// parameters or a near-zero quaternion, message includes `id`.
ActivatedPrimitive activate(const Nexel& n, int id, bool gamma_frozen = false);

std::vector<ActivatedPrimitive> activate_all(const std::vector<Nexel>& nexels, bool gamma_frozen = false);

// Gradient of one primitive's raw parameters, same layout as Nexel.
struct PrimitiveGrad {
    Vec3 mu;
    Vec4 quat;
    Vec2 log_scale;
    double opacity_raw = 0;
    Vec2 gamma_raw;
    std::array<double, kShValues> sh{};

    PrimitiveGrad& operator+=(const PrimitiveGrad& o);
};

} // namespace nexel
