#pragma once

#include "nexel/vec_math.hpp"

#include <optional>
#include <string>

namespace nexel {

struct Ray {
    Vec3 origin;
    Vec3 dir; // unit length
};

// Pinhole camera, OpenCV-style: +z looks forward, +x right, +y down.
// world_to_camera is rigid: X_cam = R * X_world + t.
struct Camera {
    std::string name;
    int width = 0, height = 0;
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Mat3 R;
    Vec3 t;

    Vec3 position() const { return -mul_transposed(R, t); }

    Vec3 to_camera(Vec3 p) const { return R * p + t; }

    double center_depth(Vec3 p) const { return to_camera(p).z; }

    // px, py are continuous pixel coordinates; the center of pixel (i, j)
    // is (i + 0.5, j + 0.5).
    Ray pixel_ray(double px, double py) const {
        Vec3 d{(px - cx) / fx, (py - cy) / fy, 1.0};
        return {position(), mul_transposed(R, normalized(d))};
    }

    // Projects a world point; nullopt when it is at or behind the pinhole.
    std::optional<Vec2> project(Vec3 p, double min_depth = 1e-9) const {
        Vec3 c = to_camera(p);
        if (c.z < min_depth) return std::nullopt;
        return Vec2{fx * c.x / c.z + cx, fy * c.y / c.z + cy};
    }
};

// Throws Error{"bad-camera"} when dimensions/focals are not positive or the
// rotation block is not orthonormal with positive determinant (1e-9).
void validate_camera(const Camera& cam);

} // namespace nexel
