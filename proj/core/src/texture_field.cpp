#include "nexel/texture_field.hpp"

#include "nexel/primitive.hpp"
#include "nexel/threading.hpp"

#include <cassert>
#include <cstring>

namespace nexel {

void TextureField::init(const HashGridConfig& cfg, std::mt19937_64& rng, double grid_init) {
    grid.cfg = cfg;
    grid.allocate();
    std::uniform_real_distribution<double> dist(-grid_init, grid_init);
    for (double& v : grid.table) v = dist(rng);
    mlp.n_in = cfg.levels * cfg.features;
    mlp.init(rng);
}

void field_coeffs(const TextureField& field, const FieldQuery& q, double* coeffs,
                  bool no_downweight) {
    const int n_in = field.mlp.n_in;
    assert(n_in == field.grid.cfg.levels * field.grid.cfg.features);
    double feats[256];
    double h1[256], h2[256];
    grid_lookup(field.grid, q.x, q.t, q.f, feats, nullptr, no_downweight);
    field.mlp.forward(feats, h1, h2, coeffs);
    (void)n_in;
}

Vec3 field_forward(const TextureField& field, const FieldQuery& q, bool no_downweight) {
    double coeffs[kShValues];
    field_coeffs(field, q, coeffs, no_downweight);
    return eval_sh(coeffs, q.dir, 3);
}

void FieldGrads::allocate(const TextureField& field) {
    table.assign(field.grid.table.size(), 0.0);
    w1.assign(field.mlp.w1.size(), 0.0);
    w2.assign(field.mlp.w2.size(), 0.0);
    w3.assign(field.mlp.w3.size(), 0.0);
}

void FieldGrads::clear() {
    std::memset(table.data(), 0, table.size() * sizeof(double));
    std::memset(w1.data(), 0, w1.size() * sizeof(double));
    std::memset(w2.data(), 0, w2.size() * sizeof(double));
    std::memset(w3.data(), 0, w3.size() * sizeof(double));
}

namespace {
constexpr std::size_t kQueryChunk = 512;
}

void field_forward_batch(const TextureField& field, const std::vector<FieldQuery>& queries,
                         double* colors, bool no_downweight) {
    parallel_chunks(queries.size(), kQueryChunk,
                    [&](std::size_t, std::size_t b, std::size_t e) {
                        for (std::size_t i = b; i < e; ++i) {
                            Vec3 rgb = field_forward(field, queries[i], no_downweight);
                            colors[i * 3 + 0] = rgb.x;
                            colors[i * 3 + 1] = rgb.y;
                            colors[i * 3 + 2] = rgb.z;
                        }
                    });
}

namespace {

struct ChunkGrads {
    std::vector<std::pair<std::size_t, double>> table; // (entry, grad) in query order
    std::vector<double> w1, w2, w3;
};

} // namespace

void field_backward_batch(const TextureField& field, const std::vector<FieldQuery>& queries,
                          const double* d_colors, FieldGrads& grads, Vec3* d_x, double* d_t,
                          bool no_downweight) {
    const std::size_t n = queries.size();
    if (n == 0) return;
    const std::size_t n_chunks = (n + kQueryChunk - 1) / kQueryChunk;

    // Chunks run in consecutive waves over a bounded set of slot buffers and
    // are merged strictly in chunk order. Slot count only affects wave
    // grouping, never chunk boundaries or merge order, so results stay
    // bit-identical for any worker count.
    const std::size_t slots = std::min<std::size_t>(std::max(worker_count(), 1), n_chunks);
    std::vector<ChunkGrads> partial(slots);
    for (auto& cg : partial) {
        cg.w1.assign(field.mlp.w1.size(), 0.0);
        cg.w2.assign(field.mlp.w2.size(), 0.0);
        cg.w3.assign(field.mlp.w3.size(), 0.0);
        cg.table.reserve(kQueryChunk * field.grid.cfg.levels * 8 * field.grid.cfg.features);
    }

    for (std::size_t wave = 0; wave < n_chunks; wave += slots) {
        const std::size_t wn = std::min(slots, n_chunks - wave);
        parallel_chunks(wn, 1, [&](std::size_t, std::size_t s, std::size_t) {
            const std::size_t ci = wave + s;
            const std::size_t b = ci * kQueryChunk;
            const std::size_t e = std::min(n, b + kQueryChunk);
            ChunkGrads& cg = partial[s];

            double feats[256], h1[256], h2[256], coeffs[kShValues];
            double d_coeffs[kShValues], d_feats[256];
            double basis[kShCoeffs];
            LevelLookup cache[64];
            for (std::size_t i = b; i < e; ++i) {
                const FieldQuery& q = queries[i];
                grid_lookup(field.grid, q.x, q.t, q.f, feats, cache, no_downweight);
                field.mlp.forward(feats, h1, h2, coeffs);

                std::array<bool, 3> active;
                eval_sh_cached(coeffs, q.dir, 3, basis, active);
                for (int k = 0; k < kShValues; ++k) d_coeffs[k] = 0.0;
                Vec3 d_rgb{d_colors[i * 3 + 0], d_colors[i * 3 + 1], d_colors[i * 3 + 2]};
                eval_sh_backward(d_rgb, basis, active, 3, d_coeffs);

                field.mlp.backward(feats, h1, h2, d_coeffs, cg.w1.data(), cg.w2.data(),
                                   cg.w3.data(), d_feats);

                Vec3 dx;
                double dt = 0.0;
                grid_lookup_backward(
                    field.grid, q.x, q.t, q.f, cache, d_feats,
                    [&cg](std::size_t idx, double v) { cg.table.emplace_back(idx, v); }, dx, dt,
                    no_downweight);
                if (d_x) d_x[i] = dx;
                if (d_t) d_t[i] = dt;
            }
        });

        for (std::size_t s = 0; s < wn; ++s) {
            ChunkGrads& cg = partial[s];
            for (auto& [idx, v] : cg.table) grads.table[idx] += v;
            for (std::size_t i = 0; i < cg.w1.size(); ++i) grads.w1[i] += cg.w1[i];
            for (std::size_t i = 0; i < cg.w2.size(); ++i) grads.w2[i] += cg.w2[i];
            for (std::size_t i = 0; i < cg.w3.size(); ++i) grads.w3[i] += cg.w3[i];
            cg.table.clear();
            std::memset(cg.w1.data(), 0, cg.w1.size() * sizeof(double));
            std::memset(cg.w2.data(), 0, cg.w2.size() * sizeof(double));
            std::memset(cg.w3.data(), 0, cg.w3.size() * sizeof(double));
        }
    }
}

} // namespace nexel
