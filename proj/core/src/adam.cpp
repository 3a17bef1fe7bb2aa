#include "nexel/adam.hpp"

#include "nexel/error.hpp"

#include <cmath>

namespace nexel {

void adam_step(AdamState& state, const AdamConfig& cfg, double* params, const double* grads,
               std::size_t count) {
    if (state.m.size() != count) state.resize(count);
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < count; ++i) {
        const double g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

void adam_remap_rows(AdamState& state, const std::vector<std::int32_t>& new_to_old,
                     std::size_t row_width) {
    const std::size_t old_rows = state.m.size() / row_width;
    std::vector<double> m(new_to_old.size() * row_width, 0.0);
    std::vector<double> v(new_to_old.size() * row_width, 0.0);
    for (std::size_t i = 0; i < new_to_old.size(); ++i) {
        const std::int32_t src = new_to_old[i];
        if (src < 0) continue;
        if (static_cast<std::size_t>(src) >= old_rows)
            fail("bad-settings", "row remap references a missing source row");
        for (std::size_t k = 0; k < row_width; ++k) {
            m[i * row_width + k] = state.m[src * row_width + k];
            v[i * row_width + k] = state.v[src * row_width + k];
        }
    }
    state.m = std::move(m);
    state.v = std::move(v);
}

} // namespace nexel
