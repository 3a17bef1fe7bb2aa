#include "nexel/primitive.hpp"

#include <cmath>

namespace nexel {

Mat3 quat_to_rotation(Vec4 q) {
    const double w = q.x, x = q.y, y = q.z, z = q.w;
    Mat3 R;
    R.m[0][0] = 1 - 2 * (y * y + z * z);
    R.m[0][1] = 2 * (x * y - w * z);
    R.m[0][2] = 2 * (x * z + w * y);
    R.m[1][0] = 2 * (x * y + w * z);
    R.m[1][1] = 1 - 2 * (x * x + z * z);
    R.m[1][2] = 2 * (y * z - w * x);
    R.m[2][0] = 2 * (x * z - w * y);
    R.m[2][1] = 2 * (y * z + w * x);
    R.m[2][2] = 1 - 2 * (x * x + y * y);
    return R;
}

Vec4 quat_rotation_backward(Vec4 q_raw, const Mat3& g) {
    const double n = norm(q_raw);
    const Vec4 u = (1.0 / n) * q_raw;
    const double w = u.x, x = u.y, y = u.z, z = u.w;

    Vec4 du; // dL/d(unit quat), components (w, x, y, z)
    du.x = 2 * (-z * g.m[0][1] + y * g.m[0][2] + z * g.m[1][0] - x * g.m[1][2] -
                y * g.m[2][0] + x * g.m[2][1]);
    du.y = 2 * (y * g.m[0][1] + z * g.m[0][2] + y * g.m[1][0] - 2 * x * g.m[1][1] -
                w * g.m[1][2] + z * g.m[2][0] + w * g.m[2][1] - 2 * x * g.m[2][2]);
    du.z = 2 * (-2 * y * g.m[0][0] + x * g.m[0][1] + w * g.m[0][2] + x * g.m[1][0] +
                z * g.m[1][2] - w * g.m[2][0] + z * g.m[2][1] - 2 * y * g.m[2][2]);
    du.w = 2 * (-2 * z * g.m[0][0] - w * g.m[0][1] + x * g.m[0][2] + w * g.m[1][0] -
                2 * z * g.m[1][1] + y * g.m[1][2] + x * g.m[2][0] + y * g.m[2][1]);

    // Through q_unit = q / |q|: project out the radial component.
    const double r = dot(du, u);
    Vec4 dq;
    dq.x = (du.x - r * u.x) / n;
    dq.y = (du.y - r * u.y) / n;
    dq.z = (du.z - r * u.z) / n;
    dq.w = (du.w - r * u.w) / n;
    return dq;
}

ActivatedPrimitive activate(const Nexel& n, int id, bool gamma_frozen) {
    auto bad = [&](const char* what) {
        fail("bad-primitive", std::string(what) + " in primitive " + std::to_string(id));
    };
    for (int i = 0; i < 3; ++i)
        if (!std::isfinite(n.mu[i])) bad("non-finite position");
    for (int i = 0; i < 4; ++i)
        if (!std::isfinite(n.quat[i])) bad("non-finite quaternion");
    for (int i = 0; i < 2; ++i) {
        if (!std::isfinite(n.log_scale[i])) bad("non-finite log scale");
        if (!std::isfinite(n.gamma_raw[i])) bad("non-finite kernel exponent");
    }
    if (!std::isfinite(n.opacity_raw)) bad("non-finite opacity");
    for (double c : n.sh)
        if (!std::isfinite(c)) bad("non-finite sh coefficient");
    const double qn = norm(n.quat);
    if (!(qn > 1e-12)) bad("degenerate quaternion");

    ActivatedPrimitive a;
    a.mu = n.mu;
    a.R = quat_to_rotation((1.0 / qn) * n.quat);
    a.sigma = {std::exp(n.log_scale.x), std::exp(n.log_scale.y)};
    a.opacity = sigmoid(n.opacity_raw);
    if (gamma_frozen) {
        a.gamma = {1.0, 1.0};
    } else {
        a.gamma = {1.0 + softplus(n.gamma_raw.x), 1.0 + softplus(n.gamma_raw.y)};
    }
    return a;
}

std::vector<ActivatedPrimitive> activate_all(const std::vector<Nexel>& nexels, bool gamma_frozen) {
    std::vector<ActivatedPrimitive> out;
    out.reserve(nexels.size());
    for (std::size_t i = 0; i < nexels.size(); ++i)
        out.push_back(activate(nexels[i], static_cast<int>(i), gamma_frozen));
    return out;
}

PrimitiveGrad& PrimitiveGrad::operator+=(const PrimitiveGrad& o) {
    mu += o.mu;
    quat = quat + o.quat;
    log_scale.x += o.log_scale.x;
    log_scale.y += o.log_scale.y;
    opacity_raw += o.opacity_raw;
    gamma_raw.x += o.gamma_raw.x;
    gamma_raw.y += o.gamma_raw.y;
    for (int i = 0; i < kShValues; ++i) sh[i] += o.sh[i];
    return *this;
}

} // namespace nexel
