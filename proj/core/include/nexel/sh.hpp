#pragma once

#include "nexel/vec_math.hpp"

#include <array>

namespace nexel {

// Real spherical harmonics, degree 3, in the ordering and sign convention
// common to splatting renderers. dir must be unit length.
inline void sh_basis(Vec3 d, double* b, int degree = 3) {
    constexpr double C0 = 0.28209479177387814;
    constexpr double C1 = 0.4886025119029199;
    constexpr double C2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                              -1.0925484305920792, 0.5462742152960396};
    constexpr double C3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                              0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                              -0.5900435899266435};
    const double x = d.x, y = d.y, z = d.z;
    b[0] = C0;
    if (degree < 1) return;
    b[1] = -C1 * y;
    b[2] = C1 * z;
    b[3] = -C1 * x;
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    b[4] = C2[0] * x * y;
    b[5] = C2[1] * y * z;
    b[6] = C2[2] * (2.0 * zz - xx - yy);
    b[7] = C2[3] * x * z;
    b[8] = C2[4] * (xx - yy);
    if (degree < 3) return;
    b[9] = C3[0] * y * (3.0 * xx - yy);
    b[10] = C3[1] * x * y * z;
    b[11] = C3[2] * y * (4.0 * zz - xx - yy);
    b[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = C3[4] * x * (4.0 * zz - xx - yy);
    b[14] = C3[5] * z * (xx - yy);
    b[15] = C3[6] * x * (xx - 3.0 * yy);
}

inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// coeffs: 16 x rgb, coefficient major. Returns max(0, sum_k coeffs_k * Y_k + 0.5)
// per channel. Coefficients beyond `degree` are ignored.
inline Vec3 eval_sh(const double* coeffs, Vec3 dir, int degree = 3) {
    double b[16];
    sh_basis(dir, b, degree);
    const int n = sh_coeff_count(degree);
    Vec3 rgb;
    for (int c = 0; c < 3; ++c) {
        double acc = 0.5;
        for (int k = 0; k < n; ++k) acc += coeffs[k * 3 + c] * b[k];
        rgb[c] = acc < 0.0 ? 0.0 : acc;
    }
    return rgb;
}

// Same evaluation but also exposes the basis values and the clamp mask so
// callers can backpropagate: d color_c / d coeffs[k*3+c] = mask_c * basis_k.
inline Vec3 eval_sh_cached(const double* coeffs, Vec3 dir, int degree, double* basis,
                           std::array<bool, 3>& active) {
    sh_basis(dir, basis, degree);
    const int n = sh_coeff_count(degree);
    Vec3 rgb;
    for (int c = 0; c < 3; ++c) {
        double acc = 0.5;
        for (int k = 0; k < n; ++k) acc += coeffs[k * 3 + c] * basis[k];
        active[c] = acc >= 0.0;
        rgb[c] = acc < 0.0 ? 0.0 : acc;
    }
    return rgb;
}

// Accumulates dL/dcoeffs from dL/dcolor given cached basis + clamp mask.
inline void eval_sh_backward(Vec3 d_color, const double* basis, const std::array<bool, 3>& active,
                             int degree, double* d_coeffs) {
    const int n = sh_coeff_count(degree);
    for (int c = 0; c < 3; ++c) {
        if (!active[c]) continue;
        for (int k = 0; k < n; ++k) d_coeffs[k * 3 + c] += d_color[c] * basis[k];
    }
}

} // namespace nexel
