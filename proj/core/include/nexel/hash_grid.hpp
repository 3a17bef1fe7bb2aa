#pragma once

#include "nexel/vec_math.hpp"

#include <cstdint>
#include <vector>

namespace nexel {

// Folds signed lattice coordinates into distinct non-negative ints:
// 0, 1, -1, 2, -2, ... -> 0, 1, 2, 3, 4, ...
inline std::uint64_t map_positive(std::int64_t x) {
    return x > 0 ? static_cast<std::uint64_t>(2 * x - 1) : static_cast<std::uint64_t>(-2 * x);
}

// Spatial hash over folded coordinates, 32-bit wrapping arithmetic.
inline std::uint32_t hash_cell(std::int64_t ix, std::int64_t iy, std::int64_t iz,
                               std::uint32_t table_size) {
    const std::uint32_t a = static_cast<std::uint32_t>(map_positive(ix));
    const std::uint32_t b = static_cast<std::uint32_t>(map_positive(iy)) * 2654435761u;
    const std::uint32_t c = static_cast<std::uint32_t>(map_positive(iz)) * 805459861u;
    return (a ^ b ^ c) & (table_size - 1);
}

// Fade factor for one resolution level along a ray: approaches 0 when the
// level's cells are far smaller than a pixel footprint at distance t, and 1
// when they are far larger. f is the focal length in pixels.
inline double downweight(double level_scale, double t, double f) {
    const double r = f / (level_scale * t);
    return 1.0 - std::exp(-r * r / (2.0 * M_PI));
}

inline double downweight_grad_t(double level_scale, double t, double f) {
    const double a = (f / level_scale) * (f / level_scale) / (2.0 * M_PI);
    const double it = 1.0 / t;
    return -std::exp(-a * it * it) * 2.0 * a * it * it * it;
}

struct HashGridConfig {
    int levels = 16;
    int log2_table = 20;
    int features = 2;
    double base_scale = 1.0; // lattice points per world unit at level 0
    double growth = 2.0;     // scale multiplier per level

    std::uint32_t table_size() const { return 1u << log2_table; }
    std::size_t param_count() const {
        return static_cast<std::size_t>(levels) * table_size() * features;
    }
    double level_scale(int level) const;

    // Coarsest cell spans the given world extent, finest is extent / 2^15
    // (growth solved from the endpoints).
    static HashGridConfig for_extent(double extent, int levels = 16, int log2_table = 20,
                                     int features = 2);
};

struct HashGrid {
    HashGridConfig cfg;
    std::vector<double> table; // [level][row][feature]

    void allocate() { table.assign(cfg.param_count(), 0.0); }
    std::size_t entry_index(int level, std::uint32_t row, int f) const {
        return (static_cast<std::size_t>(level) * cfg.table_size() + row) * cfg.features + f;
    }
};

// One level's cached lookup state, enough to backpropagate without rehashing.
struct LevelLookup {
    std::uint32_t corner_row[8]; // rows in this level's table slab
    double corner_w[8];          // trilinear weights
    Vec3 frac;
    double dw; // downweight factor applied to this level's features
};

// Interpolated, downweighted features for all levels; out has levels*features
// entries, level major. When cache is non-null it receives one LevelLookup
// per level. no_downweight pins every level factor to 1.
void grid_lookup(const HashGrid& grid, Vec3 x, double t, double f, double* out,
                 LevelLookup* cache = nullptr, bool no_downweight = false);

// Backward for one query given its cached lookup. d_out is the gradient on
// the lookup output (levels*features). Emits sparse table gradients through
// add_table(entry_index, value), and accumulates dL/dx and dL/dt.
template <typename AddTable>
void grid_lookup_backward(const HashGrid& grid, Vec3 x, double t, double f,
                          const LevelLookup* cache, const double* d_out, AddTable&& add_table,
                          Vec3& d_x, double& d_t, bool no_downweight = false) {
    const int F = grid.cfg.features;
    double s = grid.cfg.base_scale;
    for (int l = 0; l < grid.cfg.levels; ++l, s *= grid.cfg.growth) {
        const LevelLookup& c = cache[l];
        const double* g = d_out + static_cast<std::size_t>(l) * F;
        const std::size_t slab = static_cast<std::size_t>(l) * grid.cfg.table_size();

        double d_dw = 0.0;
        Vec3 d_p; // gradient wrt grid-space position
        for (int ci = 0; ci < 8; ++ci) {
            const double* feat = grid.table.data() + (slab + c.corner_row[ci]) * F;
            // weight gradient per axis: +/- product of the other two factors
            const double wx = (ci & 1) ? c.frac.x : 1.0 - c.frac.x;
            const double wy = (ci & 2) ? c.frac.y : 1.0 - c.frac.y;
            const double wz = (ci & 4) ? c.frac.z : 1.0 - c.frac.z;
            double gdotf = 0.0;
            for (int fi = 0; fi < F; ++fi) {
                const double up = g[fi] * c.dw;
                add_table((slab + c.corner_row[ci]) * F + fi, up * c.corner_w[ci]);
                gdotf += g[fi] * feat[fi];
            }
            const double updotf = gdotf * c.dw;
            d_p.x += updotf * ((ci & 1) ? 1.0 : -1.0) * wy * wz;
            d_p.y += updotf * wx * ((ci & 2) ? 1.0 : -1.0) * wz;
            d_p.z += updotf * wx * wy * ((ci & 4) ? 1.0 : -1.0);
            d_dw += gdotf * c.corner_w[ci];
        }
        d_x += s * d_p;
        if (!no_downweight) {
            // downweight_grad_t rewritten in terms of the cached factor:
            // exp(-r^2/2pi) == 1 - dw, avoiding a second exp per level.
            const double r = f / (s * t);
            d_t += d_dw * (c.dw - 1.0) * r * r / (M_PI * t);
        }
    }
}

} // namespace nexel
