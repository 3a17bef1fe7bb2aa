#pragma once

#include "nexel/primitive.hpp"
#include "nexel/vec_math.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace nexel {

struct PointCloud {
    std::vector<Vec3> xyz;
    std::vector<Vec3> rgb; // empty or same length as xyz, values in [0,1]
};

struct FpsResult {
    std::vector<int> order;      // selected input indices, selection order
    std::vector<double> dist;    // distance to the nearest earlier selection;
                                 // dist[0] is the global maximum over the rest
};

// Deterministic farthest point sampling: starts at the lowest index, then
// repeatedly takes the point farthest from everything selected. Ties go to
// the lower index. Inputs above 200k points are pre-decimated by striding.
FpsResult farthest_point_sample(const std::vector<Vec3>& pts, int count);

// Seeds floor(budget/2) primitives (capped by the cloud size) on FPS samples.
// Scale is isotropic from the predecessor distance, opacity starts at 0.5,
// exponents near 1, orientations random, sh DC from the point color (0.5
// gray when absent).
std::vector<Nexel> initialize_primitives(const PointCloud& cloud, int budget,
                                         std::mt19937_64& rng);

// Row mapping from a density-control step: new_to_old[i] is the source row of
// the surviving primitive now at i, or -1 for a fresh row (split child).
struct DensityUpdate {
    std::vector<std::int32_t> new_to_old;
    int split_count = 0;
    int pruned_count = 0;
};

// Splits ceil(split_fraction * N) distinct primitives sampled without
// replacement with probability proportional to their accumulated blended
// error, capped so the total count never exceeds budget. Each parent is
// replaced by two children along its longest axis. All-zero errors or a full
// budget make this a no-op.
DensityUpdate densify_split(std::vector<Nexel>& nexels, const std::vector<double>& errors,
                            int budget, double split_fraction, std::mt19937_64& rng);

// Removes primitives whose activated opacity is below min_opacity, keeping
// survivor order.
DensityUpdate prune(std::vector<Nexel>& nexels, double min_opacity);

} // namespace nexel
