#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace nexel {

// Bias-free two-hidden-layer ReLU MLP. Weights are row major [out][in], so a
// zero input maps to exactly zero output. relu'(0) is taken as 0.
struct TextureMlp {
    int n_in = 32, n_hidden = 64, n_out = 48;
    std::vector<double> w1; // [hidden][in]
    std::vector<double> w2; // [hidden][hidden]
    std::vector<double> w3; // [out][hidden]

    void allocate();
    // He-style init: N(0, sqrt(2 / fan_in)) per layer.
    void init(std::mt19937_64& rng);

    std::size_t param_count() const {
        return w1.size() + w2.size() + w3.size();
    }

    // h1, h2 are scratch of size n_hidden holding post-ReLU activations;
    // they double as the backward cache.
    void forward(const double* x, double* h1, double* h2, double* y) const;

    // Accumulates weight gradients and writes dL/dx. h1/h2 must come from
    // forward() on the same x.
    void backward(const double* x, const double* h1, const double* h2, const double* d_y,
                  double* g_w1, double* g_w2, double* g_w3, double* d_x) const;
};

} // namespace nexel
