#include "nexel/metrics.hpp"

#include "nexel/error.hpp"

#include <cmath>

namespace nexel {

double mse(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        fail("bad-settings", "metric images have different sizes");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.px.size(); ++i) {
        const double d = a.px[i] - b.px[i];
        acc += d * d;
    }
    return a.px.empty() ? 0.0 : acc / static_cast<double>(a.px.size());
}

double psnr_from_mse(double mse_value) {
    if (!(mse_value > 0.0)) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse_value));
}

double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

MemoryReport report_memory(std::size_t primitive_count, std::size_t values_per_primitive,
                           std::size_t grid_params, std::size_t mlp_params) {
    MemoryReport r;
    r.primitive_values = primitive_count * values_per_primitive;
    r.field_values = grid_params + mlp_params;
    r.primitive_bytes = 4 * r.primitive_values;
    r.field_bytes = 2 * r.field_values;
    r.total_bytes = r.primitive_bytes + r.field_bytes;
    r.total_mb = static_cast<double>(r.total_bytes) / 1e6;
    return r;
}

MemoryReport report_memory(const Scene& scene) {
    const std::size_t geom = kParamsPerPrimitive - kShValues;
    const std::size_t sh = scene.settings.no_prim_sh ? 3 : kShValues;
    const std::size_t mlp = scene.field.mlp.param_count();
    return report_memory(scene.nexels.size(), geom + sh, scene.field.grid.cfg.param_count(), mlp);
}

} // namespace nexel
