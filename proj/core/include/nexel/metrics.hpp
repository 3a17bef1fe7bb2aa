#pragma once

#include "nexel/image.hpp"
#include "nexel/scene.hpp"

#include <cstddef>

namespace nexel {

double mse(const Image& a, const Image& b);

// 10*log10(1/mse), capped at 99 dB so identical images stay finite.
double psnr(const Image& a, const Image& b);
double psnr_from_mse(double mse_value);

// Storage footprint of a trained model: primitives at 4 bytes per value,
// field parameters (grid + mlp) at 2 bytes per value. Megabyte = 1e6 bytes.
struct MemoryReport {
    std::size_t primitive_values = 0;
    std::size_t field_values = 0;
    std::size_t primitive_bytes = 0;
    std::size_t field_bytes = 0;
    std::size_t total_bytes = 0;
    double total_mb = 0.0;
};

MemoryReport report_memory(std::size_t primitive_count, std::size_t values_per_primitive,
                           std::size_t grid_params, std::size_t mlp_params);
MemoryReport report_memory(const Scene& scene);

} // namespace nexel
