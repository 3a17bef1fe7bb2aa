#pragma once

#include "nexel/camera.hpp"
#include "nexel/kernel.hpp"
#include "nexel/primitive.hpp"

#include <cmath>

namespace nexel {

// Grazing rays (|dir . normal| below this) never intersect.
inline constexpr double kMinNormalDot = 1e-8;

struct SurfelHit {
    bool hit = false;
    double t = 0;       // ray parameter of the plane crossing
    double u = 0, v = 0; // local plane coordinates in units of sigma
    double alpha = 0;   // unclamped kernel opacity at (u, v)
};

// Ray vs. surfel plane. Misses when the ray grazes the plane, the crossing is
// at or behind near_eps, or alpha falls below alpha_min.
inline SurfelHit intersect(const ActivatedPrimitive& a, const Ray& ray, double near_eps,
                           double alpha_min = kAlphaMin) {
    SurfelHit h;
    const Vec3 n = a.R.col(2);
    const double denom = dot(ray.dir, n);
    if (std::abs(denom) < kMinNormalDot) return h;
    const double t = dot(a.mu - ray.origin, n) / denom;
    if (!(t > near_eps)) return h;
    const Vec3 delta = ray.origin + t * ray.dir - a.mu;
    const double u = dot(delta, a.R.col(0)) / a.sigma.x;
    const double v = dot(delta, a.R.col(1)) / a.sigma.y;
    const double alpha = eval_kernel(u, v, a.opacity, a.gamma);
    if (alpha < alpha_min) return h;
    h.hit = true;
    h.t = t;
    h.u = u;
    h.v = v;
    h.alpha = alpha;
    return h;
}

// Gradients in activated parameter space.
struct ActivatedGrad {
    Vec3 d_mu;
    Mat3 d_R;       // per-column gradients for (v1, v2, normal)
    Vec2 d_sigma;
    double d_opacity = 0;
    Vec2 d_gamma;
};

// Backward through alpha(u, v) and the plane crossing. d_alpha and d_t are
// the upstream gradients on this hit's alpha and ray parameter. The hit must
// be the unmodified result of intersect() for the same ray/primitive.
inline void intersect_backward(const ActivatedPrimitive& a, const Ray& ray, const SurfelHit& h,
                               double d_alpha, double d_t, ActivatedGrad& g) {
    const Vec3 v1 = a.R.col(0), v2 = a.R.col(1), n = a.R.col(2);
    const double denom = dot(ray.dir, n);
    const Vec3 x = ray.origin + h.t * ray.dir;

    KernelGrad kg;
    eval_kernel_grad(h.u, h.v, a.opacity, a.gamma, kg);

    g.d_opacity += d_alpha * kg.d_opacity;
    g.d_gamma.x += d_alpha * kg.d_gamma.x;
    g.d_gamma.y += d_alpha * kg.d_gamma.y;
    g.d_sigma.x += d_alpha * kg.d_u * (-h.u / a.sigma.x);
    g.d_sigma.y += d_alpha * kg.d_v * (-h.v / a.sigma.y);

    const double du = d_alpha * kg.d_u;
    const double dv = d_alpha * kg.d_v;

    // u and v move with t; fold that into the total t gradient first.
    const double dt = d_t + du * dot(ray.dir, v1) / a.sigma.x + dv * dot(ray.dir, v2) / a.sigma.y;

    g.d_mu += (-du / a.sigma.x) * v1 + (-dv / a.sigma.y) * v2 + (dt / denom) * n;

    const Vec3 d_v1 = (du / a.sigma.x) * (x - a.mu);
    const Vec3 d_v2 = (dv / a.sigma.y) * (x - a.mu);
    const Vec3 d_n = (dt / denom) * (a.mu - x);
    for (int i = 0; i < 3; ++i) {
        g.d_R.m[i][0] += d_v1[i];
        g.d_R.m[i][1] += d_v2[i];
        g.d_R.m[i][2] += d_n[i];
    }
}

// Maps activated-space gradients back to raw parameter space. gamma_frozen
// drops the exponent gradients (activation pinned gamma to 1).
inline void activation_backward(const Nexel& n, const ActivatedPrimitive& a,
                                const ActivatedGrad& g, bool gamma_frozen, PrimitiveGrad& out) {
    out.mu += g.d_mu;
    Vec4 dq = quat_rotation_backward(n.quat, g.d_R);
    out.quat = out.quat + dq;
    out.log_scale.x += g.d_sigma.x * a.sigma.x;
    out.log_scale.y += g.d_sigma.y * a.sigma.y;
    out.opacity_raw += g.d_opacity * a.opacity * (1.0 - a.opacity);
    if (!gamma_frozen) {
        out.gamma_raw.x += g.d_gamma.x * softplus_grad(n.gamma_raw.x);
        out.gamma_raw.y += g.d_gamma.y * softplus_grad(n.gamma_raw.y);
    }
}

} // namespace nexel
