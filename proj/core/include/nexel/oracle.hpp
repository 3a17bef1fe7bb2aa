#pragma once

#include "nexel/camera.hpp"
#include "nexel/image.hpp"
#include "nexel/scene.hpp"

#include <functional>
#include <vector>

namespace nexel {

// Brute-force reference renderer: per pixel, intersects every primitive,
// sorts by center depth, composites without tiles or early termination, and
// picks the texture slots by a full sort (weight desc, arrival asc). 64-bit
// throughout. Slow by design; keep scenes small.
Image naive_render(const Scene& scene, const Camera& cam);

// Central differences, one coordinate at a time.
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& params, double step = 1e-5);

} // namespace nexel
