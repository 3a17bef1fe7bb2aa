#pragma once

#include <cstdint>
#include <vector>

namespace nexel {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;

    void resize(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        step = 0;
    }
};

// One update over a flat parameter block. Bias correction uses a state-level
// step counter, so rows that joined late share the group's schedule.
void adam_step(AdamState& state, const AdamConfig& cfg, double* params, const double* grads,
               std::size_t count);

// Reorder per-primitive moment rows after densify/prune. new_to_old[i] is the
// source row for new row i, or -1 for a fresh row (zero moments).
void adam_remap_rows(AdamState& state, const std::vector<std::int32_t>& new_to_old,
                     std::size_t row_width);

} // namespace nexel
