#include "nexel/density.hpp"

#include "nexel/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace nexel {

namespace {
constexpr int kFpsDecimateAbove = 200000;
}

FpsResult farthest_point_sample(const std::vector<Vec3>& pts, int count) {
    FpsResult res;
    if (pts.empty() || count <= 0) return res;

    std::vector<int> subset;
    if (pts.size() > kFpsDecimateAbove) {
        const std::size_t stride = (pts.size() + kFpsDecimateAbove - 1) / kFpsDecimateAbove;
        for (std::size_t i = 0; i < pts.size(); i += stride) subset.push_back(static_cast<int>(i));
    } else {
        subset.resize(pts.size());
        std::iota(subset.begin(), subset.end(), 0);
    }
    const int n = static_cast<int>(subset.size());
    count = std::min(count, n);

    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    res.order.reserve(count);
    res.dist.assign(count, 0.0);

    int current = 0; // position in subset, lowest original index
    res.order.push_back(subset[0]);
    min_d2[0] = -1.0; // selected points never win the argmax again
    for (int picked = 1; picked < count; ++picked) {
        const Vec3 p = pts[subset[current]];
        int best = -1;
        double best_d2 = 0.0;
        for (int i = 0; i < n; ++i) {
            if (min_d2[i] < 0.0) continue;
            const Vec3 d = pts[subset[i]] - p;
            const double d2 = dot(d, d);
            if (d2 < min_d2[i]) min_d2[i] = d2;
            if (best < 0 || min_d2[i] > best_d2) {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        res.order.push_back(subset[best]);
        res.dist[picked] = std::sqrt(best_d2);
        min_d2[best] = -1.0;
        current = best;
    }
    // The seed has no predecessor; it takes the largest gap seen.
    for (int i = 1; i < count; ++i) res.dist[0] = std::max(res.dist[0], res.dist[i]);
    return res;
}

std::vector<Nexel> initialize_primitives(const PointCloud& cloud, int budget,
                                         std::mt19937_64& rng) {
    std::vector<Nexel> out;
    const int want = std::min<int>(budget / 2, static_cast<int>(cloud.xyz.size()));
    if (want <= 0) return out;

    const FpsResult fps = farthest_point_sample(cloud.xyz, want);
    const double global_max = std::max(fps.dist.empty() ? 0.0 : fps.dist[0], 1e-12);
    const bool has_color = cloud.rgb.size() == cloud.xyz.size();
    constexpr double kDcBasis = 0.28209479177387814;

    std::uniform_real_distribution<double> uni(0.0, 1.0);
    out.reserve(fps.order.size());
    for (std::size_t i = 0; i < fps.order.size(); ++i) {
        const int src = fps.order[i];
        Nexel n;
        n.mu = cloud.xyz[src];
        const double d = std::max(fps.dist[i], 1e-9 * global_max);
        n.log_scale = {std::log(d), std::log(d)};
        n.opacity_raw = 0.0; // sigmoid -> 0.5
        n.gamma_raw = {-5.0, -5.0};

        // Uniform random orientation (Shoemake's subgroup method).
        const double u1 = uni(rng), u2 = uni(rng), u3 = uni(rng);
        const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
        n.quat = {b * std::cos(2.0 * M_PI * u3), a * std::sin(2.0 * M_PI * u2),
                  a * std::cos(2.0 * M_PI * u2), b * std::sin(2.0 * M_PI * u3)};

        if (has_color)
            for (int c = 0; c < 3; ++c) n.sh[c] = (cloud.rgb[src][c] - 0.5) / kDcBasis;
        out.push_back(n);
    }
    return out;
}

DensityUpdate densify_split(std::vector<Nexel>& nexels, const std::vector<double>& errors,
                            int budget, double split_fraction, std::mt19937_64& rng) {
    DensityUpdate upd;
    const int n = static_cast<int>(nexels.size());
    upd.new_to_old.resize(n);
    std::iota(upd.new_to_old.begin(), upd.new_to_old.end(), 0);
    if (n == 0) return upd;
    if (errors.size() != nexels.size())
        fail("bad-settings", "error accumulator size does not match primitive count");

    int allowed = std::min(static_cast<int>(std::ceil(split_fraction * n)), budget - n);
    if (allowed <= 0) return upd;

    // Weighted sampling without replacement via exponential-key reservoir:
    // key u^(1/e) makes P(top key = i) proportional to e_i.
    struct Key {
        double k;
        int idx;
    };
    std::vector<Key> keys;
    keys.reserve(n);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        const double e = errors[i];
        const double u = uni(rng); // one draw per primitive keeps the stream aligned
        if (e > 0.0) keys.push_back({std::pow(u, 1.0 / e), i});
    }
    if (keys.empty()) return upd;
    allowed = std::min<int>(allowed, static_cast<int>(keys.size()));
    std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
        if (a.k != b.k) return a.k > b.k;
        return a.idx < b.idx;
    });

    std::vector<int> selected(allowed);
    for (int i = 0; i < allowed; ++i) selected[i] = keys[i].idx;
    std::sort(selected.begin(), selected.end());

    std::vector<Nexel> tail;
    tail.reserve(allowed);
    for (int parent_idx : selected) {
        Nexel& parent = nexels[parent_idx];
        const ActivatedPrimitive a = activate(parent, parent_idx);
        Nexel child = parent;

        Vec3 offset;
        if (a.sigma.x >= a.sigma.y) {
            offset = (a.sigma.x / 2.0) * a.R.col(0);
            child.log_scale.x = std::log(a.sigma.x / 2.0);
        } else {
            offset = (a.sigma.y / 2.0) * a.R.col(1);
            child.log_scale.y = std::log(a.sigma.y / 2.0);
        }
        Nexel other = child;
        child.mu = parent.mu + offset;
        other.mu = parent.mu - offset;

        nexels[parent_idx] = child; // first child reuses the parent slot
        upd.new_to_old[parent_idx] = -1;
        tail.push_back(other);
    }
    for (Nexel& t : tail) {
        nexels.push_back(std::move(t));
        upd.new_to_old.push_back(-1);
    }
    upd.split_count = allowed;
    return upd;
}

DensityUpdate prune(std::vector<Nexel>& nexels, double min_opacity) {
    DensityUpdate upd;
    std::vector<Nexel> kept;
    kept.reserve(nexels.size());
    for (std::size_t i = 0; i < nexels.size(); ++i) {
        if (sigmoid(nexels[i].opacity_raw) < min_opacity) {
            ++upd.pruned_count;
            continue;
        }
        upd.new_to_old.push_back(static_cast<std::int32_t>(i));
        kept.push_back(nexels[i]);
    }
    nexels = std::move(kept);
    return upd;
}

} // namespace nexel
