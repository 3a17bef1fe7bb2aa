#include "nexel/camera.hpp"
#include "nexel/error.hpp"

#include <cmath>

namespace nexel {

void validate_camera(const Camera& cam) {
    auto bad = [&](const std::string& what) {
        fail("bad-camera", "camera '" + cam.name + "': " + what);
    };
    if (cam.width <= 0 || cam.height <= 0) bad("non-positive image size");
    if (!(cam.fx > 0) || !(cam.fy > 0)) bad("non-positive focal length");
    for (int i = 0; i < 3; ++i) {
        if (!std::isfinite(cam.t[i])) bad("non-finite translation");
        for (int j = 0; j < 3; ++j)
            if (!std::isfinite(cam.R.m[i][j])) bad("non-finite rotation");
    }
    if (!std::isfinite(cam.cx) || !std::isfinite(cam.cy)) bad("non-finite principal point");

    // R R^T = I within 1e-9, det(R) > 0.
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double want = i == j ? 1.0 : 0.0;
            double got = dot(cam.R.row(i), cam.R.row(j));
            if (std::abs(got - want) > 1e-9) bad("rotation is not orthonormal");
        }
    }
    Vec3 r0 = cam.R.row(0), r1 = cam.R.row(1), r2 = cam.R.row(2);
    if (dot(cross(r0, r1), r2) < 0) bad("rotation is left-handed");
}

} // namespace nexel
