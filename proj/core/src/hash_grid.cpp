#include "nexel/hash_grid.hpp"

#include <cmath>

namespace nexel {

double HashGridConfig::level_scale(int level) const {
    // Iterated product, not pow: lookup loops step the scale the same way, so
    // every consumer sees bit-identical per-level scales.
    double s = base_scale;
    for (int l = 0; l < level; ++l) s *= growth;
    return s;
}

HashGridConfig HashGridConfig::for_extent(double extent, int levels, int log2_table,
                                          int features) {
    HashGridConfig cfg;
    cfg.levels = levels;
    cfg.log2_table = log2_table;
    cfg.features = features;
    cfg.base_scale = 1.0 / extent;
    cfg.growth = levels > 1 ? std::pow(32768.0, 1.0 / (levels - 1)) : 1.0;
    return cfg;
}

void grid_lookup(const HashGrid& grid, Vec3 x, double t, double f, double* out,
                 LevelLookup* cache, bool no_downweight) {
    const int F = grid.cfg.features;
    const std::uint32_t T = grid.cfg.table_size();
    const double* table = grid.table.data();
    double s = grid.cfg.base_scale;
    for (int l = 0; l < grid.cfg.levels; ++l, s *= grid.cfg.growth) {
        const Vec3 p = s * x;
        const double fx = std::floor(p.x), fy = std::floor(p.y), fz = std::floor(p.z);
        const std::int64_t bx = static_cast<std::int64_t>(fx);
        const std::int64_t by = static_cast<std::int64_t>(fy);
        const std::int64_t bz = static_cast<std::int64_t>(fz);
        const Vec3 frac{p.x - fx, p.y - fy, p.z - fz};
        const double dw = no_downweight ? 1.0 : downweight(s, t, f);

        const double wx[2] = {1.0 - frac.x, frac.x};
        const double wy[2] = {1.0 - frac.y, frac.y};
        const double wz[2] = {1.0 - frac.z, frac.z};
        double* g = out + static_cast<std::size_t>(l) * F;
        const std::size_t slab = static_cast<std::size_t>(l) * T;

        if (F == 2) {
            double a0 = 0.0, a1 = 0.0;
            for (int ci = 0; ci < 8; ++ci) {
                const std::uint32_t row = hash_cell(bx + (ci & 1), by + ((ci >> 1) & 1),
                                                    bz + ((ci >> 2) & 1), T);
                const double w = wx[ci & 1] * wy[(ci >> 1) & 1] * wz[(ci >> 2) & 1];
                const double* feat = table + (slab + row) * 2;
                a0 += w * feat[0];
                a1 += w * feat[1];
                if (cache) {
                    cache[l].corner_row[ci] = row;
                    cache[l].corner_w[ci] = w;
                }
            }
            g[0] = a0 * dw;
            g[1] = a1 * dw;
        } else {
            for (int fi = 0; fi < F; ++fi) g[fi] = 0.0;
            for (int ci = 0; ci < 8; ++ci) {
                const std::uint32_t row = hash_cell(bx + (ci & 1), by + ((ci >> 1) & 1),
                                                    bz + ((ci >> 2) & 1), T);
                const double w = wx[ci & 1] * wy[(ci >> 1) & 1] * wz[(ci >> 2) & 1];
                const double* feat = table + (slab + row) * F;
                for (int fi = 0; fi < F; ++fi) g[fi] += w * feat[fi];
                if (cache) {
                    cache[l].corner_row[ci] = row;
                    cache[l].corner_w[ci] = w;
                }
            }
            for (int fi = 0; fi < F; ++fi) g[fi] *= dw;
        }
        if (cache) {
            cache[l].frac = frac;
            cache[l].dw = dw;
        }
    }
}

} // namespace nexel
