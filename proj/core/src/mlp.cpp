#include "nexel/mlp.hpp"

#include <cmath>

namespace nexel {

void TextureMlp::allocate() {
    w1.assign(static_cast<std::size_t>(n_hidden) * n_in, 0.0);
    w2.assign(static_cast<std::size_t>(n_hidden) * n_hidden, 0.0);
    w3.assign(static_cast<std::size_t>(n_out) * n_hidden, 0.0);
}

void TextureMlp::init(std::mt19937_64& rng) {
    allocate();
    auto fill = [&rng](std::vector<double>& w, int fan_in) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (double& v : w) v = dist(rng);
    };
    fill(w1, n_in);
    fill(w2, n_hidden);
    fill(w3, n_hidden);
}

void TextureMlp::forward(const double* x, double* h1, double* h2, double* y) const {
    for (int o = 0; o < n_hidden; ++o) {
        const double* row = w1.data() + static_cast<std::size_t>(o) * n_in;
        double acc = 0.0;
        for (int i = 0; i < n_in; ++i) acc += row[i] * x[i];
        h1[o] = acc > 0.0 ? acc : 0.0;
    }
    for (int o = 0; o < n_hidden; ++o) {
        const double* row = w2.data() + static_cast<std::size_t>(o) * n_hidden;
        double acc = 0.0;
        for (int i = 0; i < n_hidden; ++i) acc += row[i] * h1[i];
        h2[o] = acc > 0.0 ? acc : 0.0;
    }
    for (int o = 0; o < n_out; ++o) {
        const double* row = w3.data() + static_cast<std::size_t>(o) * n_hidden;
        double acc = 0.0;
        for (int i = 0; i < n_hidden; ++i) acc += row[i] * h2[i];
        y[o] = acc;
    }
}

void TextureMlp::backward(const double* x, const double* h1, const double* h2, const double* d_y,
                          double* g_w1, double* g_w2, double* g_w3, double* d_x) const {
    // Post-ReLU activations are zero exactly where the pre-activation was
    // clamped (or zero, where relu' is taken as 0), so h > 0 is the mask.
    double d_h2[256];
    double d_h1[256];

    for (int i = 0; i < n_hidden; ++i) d_h2[i] = 0.0;
    for (int o = 0; o < n_out; ++o) {
        const double g = d_y[o];
        const double* row = w3.data() + static_cast<std::size_t>(o) * n_hidden;
        double* grow = g_w3 + static_cast<std::size_t>(o) * n_hidden;
        for (int i = 0; i < n_hidden; ++i) {
            grow[i] += g * h2[i];
            d_h2[i] += g * row[i];
        }
    }
    for (int i = 0; i < n_hidden; ++i)
        if (h2[i] <= 0.0) d_h2[i] = 0.0;

    for (int i = 0; i < n_hidden; ++i) d_h1[i] = 0.0;
    for (int o = 0; o < n_hidden; ++o) {
        const double g = d_h2[o];
        if (g == 0.0) continue;
        const double* row = w2.data() + static_cast<std::size_t>(o) * n_hidden;
        double* grow = g_w2 + static_cast<std::size_t>(o) * n_hidden;
        for (int i = 0; i < n_hidden; ++i) {
            grow[i] += g * h1[i];
            d_h1[i] += g * row[i];
        }
    }
    for (int i = 0; i < n_hidden; ++i)
        if (h1[i] <= 0.0) d_h1[i] = 0.0;

    for (int i = 0; i < n_in; ++i) d_x[i] = 0.0;
    for (int o = 0; o < n_hidden; ++o) {
        const double g = d_h1[o];
        if (g == 0.0) continue;
        const double* row = w1.data() + static_cast<std::size_t>(o) * n_in;
        double* grow = g_w1 + static_cast<std::size_t>(o) * n_in;
        for (int i = 0; i < n_in; ++i) {
            grow[i] += g * x[i];
            d_x[i] += g * row[i];
        }
    }
}

} // namespace nexel
