#pragma once

#include "nexel/hash_grid.hpp"
#include "nexel/mlp.hpp"
#include "nexel/sh.hpp"
#include "nexel/vec_math.hpp"

#include <random>
#include <vector>

namespace nexel {

// Shared neural texture: multiresolution hash grid -> bias-free MLP -> 48
// view-dependent sh coefficients. A zero grid yields exactly zero
// coefficients (0.5 gray after the sh offset).
struct TextureField {
    HashGrid grid;
    TextureMlp mlp;

    // Grid entries start tiny but nonzero; an exactly zero grid has zero
    // gradient everywhere through the bias-free ReLU stack.
    void init(const HashGridConfig& cfg, std::mt19937_64& rng, double grid_init = 1e-4);

    std::size_t param_count() const { return grid.table.size() + mlp.param_count(); }
};

struct FieldQuery {
    Vec3 x;      // world-space sample
    double t;    // ray parameter of the sample (drives level fading)
    double f;    // focal length in pixels
    Vec3 dir;    // unit view direction
};

// Evaluates sh coefficients at the query; coeffs must hold 48 doubles.
void field_coeffs(const TextureField& field, const FieldQuery& q, double* coeffs,
                  bool no_downweight = false);

// Full evaluation to an rgb color.
Vec3 field_forward(const TextureField& field, const FieldQuery& q, bool no_downweight = false);

struct FieldGrads {
    std::vector<double> table;
    std::vector<double> w1, w2, w3;

    void allocate(const TextureField& field);
    void clear();
};

// Batched forward: writes one rgb triple per query into colors (3 per query).
// Parallel over fixed-size chunks; bit-stable for any worker count.
void field_forward_batch(const TextureField& field, const std::vector<FieldQuery>& queries,
                         double* colors, bool no_downweight = false);

// Batched backward. d_colors holds dL/drgb per query (3 per query). Internals
// are recomputed from the queries, so no forward cache object is needed, but
// the queries must be the ones the forward saw. Accumulates into grads and
// writes per-query dL/dx and dL/dt (x and t treated as independent inputs;
// callers fold dL/dx into dL/dt when x = origin + t*dir). Chunked merge in
// fixed order keeps accumulation bit-stable for any worker count.
void field_backward_batch(const TextureField& field, const std::vector<FieldQuery>& queries,
                          const double* d_colors, FieldGrads& grads, Vec3* d_x, double* d_t,
                          bool no_downweight = false);

} // namespace nexel
