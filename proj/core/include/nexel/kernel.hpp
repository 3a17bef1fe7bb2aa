#pragma once

#include "nexel/vec_math.hpp"

#include <cmath>

namespace nexel {

// Opacity falls below 1/255 outside the analytic support radius, so both the
// rasterizer culling and the intersection test share this constant.
inline constexpr double kAlphaMin = 1.0 / 255.0;

// |u|^(2g) with the exact-Gaussian fast path at g == 1 and a zero branch at
// u == 0. The fast path keeps eval_kernel at gamma (1,1) bit-identical to
// o * exp(-(u*u + v*v) / 2).
inline double axis_power(double u, double g) {
    if (u == 0.0) return 0.0;
    if (g == 1.0) return u * u;
    double e = 2.0 * g * std::log(std::abs(u));
    if (e > 700.0) return INFINITY;
    return std::exp(e);
}

// Flat-topped generalized Gaussian: alpha = o * exp(-(|u|^2g1 + |v|^2g2)/2).
// g = 1 is a Gaussian, large g approaches the unit-square indicator.
inline double eval_kernel(double u, double v, double opacity, Vec2 gamma) {
    double p = axis_power(u, gamma.x) + axis_power(v, gamma.y);
    if (std::isinf(p)) return 0.0;
    return opacity * std::exp(-0.5 * p);
}

struct KernelGrad {
    double d_u = 0, d_v = 0, d_opacity = 0;
    Vec2 d_gamma;
};

// alpha plus its partials. At u == 0 the u/gamma.x partials vanish (the
// kernel is flat across the axis for g >= 1); same for v. Far outside the
// support (overflowing exponent) everything is exactly 0.
inline double eval_kernel_grad(double u, double v, double opacity, Vec2 gamma, KernelGrad& g) {
    const double pu = axis_power(u, gamma.x);
    const double pv = axis_power(v, gamma.y);
    if (std::isinf(pu) || std::isinf(pv)) {
        g = {};
        return 0.0;
    }
    const double k = std::exp(-0.5 * (pu + pv));
    const double alpha = opacity * k;
    g.d_opacity = k;
    if (u == 0.0) {
        g.d_u = 0.0;
        g.d_gamma.x = 0.0;
    } else {
        const double au = std::abs(u);
        // d alpha / du = -alpha * g1 * |u|^(2g1-1) * sign(u)
        g.d_u = -alpha * gamma.x * (pu / au) * (u > 0 ? 1.0 : -1.0);
        g.d_gamma.x = -alpha * std::log(au) * pu;
    }
    if (v == 0.0) {
        g.d_v = 0.0;
        g.d_gamma.y = 0.0;
    } else {
        const double av = std::abs(v);
        g.d_v = -alpha * gamma.y * (pv / av) * (v > 0 ? 1.0 : -1.0);
        g.d_gamma.y = -alpha * std::log(av) * pv;
    }
    return alpha;
}

// Largest |u| with alpha >= 1/255 along one axis (v = 0); 0 when even the
// center cannot reach the threshold.
inline double support_radius(double opacity, double g) {
    const double lim = 2.0 * std::log(opacity / kAlphaMin);
    if (lim <= 0.0) return 0.0;
    return std::pow(lim, 1.0 / (2.0 * g));
}

} // namespace nexel
