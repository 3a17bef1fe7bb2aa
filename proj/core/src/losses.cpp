#include "nexel/losses.hpp"

#include "nexel/error.hpp"
#include "nexel/ssim.hpp"

#include <cmath>

namespace nexel {

namespace {
double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

Image wrap_final(const FrameBuffers& fb) {
    Image img;
    img.width = fb.width;
    img.height = fb.height;
    img.px = fb.final_img;
    return img;
}
} // namespace

bool LossTerms::finite() const {
    return std::isfinite(total) && std::isfinite(image) && std::isfinite(texture) &&
           std::isfinite(alpha) && std::isfinite(opacity) && std::isfinite(grid);
}

double loss_l1(const Image& pred, const Image& gt) {
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.px.size(); ++i) acc += std::abs(pred.px[i] - gt.px[i]);
    return acc / pred.px.size();
}

double loss_texture(const FrameBuffers& fb, const Image& gt) {
    if (fb.top_k == 0) return 0.0;
    const std::size_t n_pix = static_cast<std::size_t>(fb.width) * fb.height;
    double acc = 0.0;
    std::size_t included = 0;
    for (std::size_t pix = 0; pix < n_pix; ++pix) {
        double sw = 0.0;
        for (int j = 0; j < fb.top_k; ++j) sw += fb.weights[fb.slot(pix, j)];
        if (sw < kTextureLossMinWeight) continue;
        ++included;
        for (int c = 0; c < 3; ++c) {
            double r = 0.0;
            for (int j = 0; j < fb.top_k; ++j) {
                const std::size_t sl = fb.slot(pix, j);
                r += fb.weights[sl] * fb.texture[sl * 3 + c];
            }
            acc += std::abs(gt.px[pix * 3 + c] - r / sw);
        }
    }
    return included == 0 ? 0.0 : acc / (3.0 * included);
}

double loss_alpha(const FrameBuffers& fb) {
    const std::size_t n_pix = static_cast<std::size_t>(fb.width) * fb.height;
    if (fb.top_k == 0) return 1.0;
    double acc = 0.0;
    for (std::size_t pix = 0; pix < n_pix; ++pix) {
        double sw = 0.0;
        for (int j = 0; j < fb.top_k; ++j) sw += fb.weights[fb.slot(pix, j)];
        acc += 1.0 - sw;
    }
    return acc / n_pix;
}

double loss_opacity(const std::vector<Nexel>& nexels) {
    if (nexels.empty()) return 0.0;
    double acc = 0.0;
    for (const Nexel& n : nexels) acc += sigmoid(n.opacity_raw);
    return acc / nexels.size();
}

double loss_grid(const HashGrid& grid) {
    const std::uint32_t T = grid.cfg.table_size();
    const int F = grid.cfg.features;
    double total = 0.0;
    for (int l = 0; l < grid.cfg.levels; ++l) {
        const double s = grid.cfg.level_scale(l);
        const double* slab = grid.table.data() + static_cast<std::size_t>(l) * T * F;
        double acc = 0.0;
        const std::size_t n = static_cast<std::size_t>(T) * F;
        for (std::size_t i = 0; i < n; ++i) acc += slab[i] * slab[i];
        total += acc / (s * s * s);
    }
    return total;
}

LossTerms compute_losses(const Scene& scene, const FrameBuffers& fb, const Image& gt,
                         const LossWeights& w) {
    if (gt.width != fb.width || gt.height != fb.height)
        fail("bad-settings", "ground truth size does not match the render");
    LossTerms t;
    const Image pred = wrap_final(fb);
    t.l1 = loss_l1(pred, gt);
    t.dssim = (1.0 - ssim(pred, gt)) / 2.0;
    t.image = (1.0 - w.dssim) * t.l1 + w.dssim * t.dssim;
    t.texture = loss_texture(fb, gt);
    t.alpha = loss_alpha(fb);
    t.opacity = loss_opacity(scene.nexels);
    t.grid = loss_grid(scene.field.grid);
    t.total = t.image + w.texture * t.texture + w.alpha * t.alpha + w.opacity * t.opacity +
              w.grid * t.grid;
    return t;
}

LossTerms losses_backward(const Scene& scene, const FrameBuffers& fb, const Image& gt,
                          const LossWeights& w, std::vector<double>& d_final,
                          std::vector<double>& d_weights, std::vector<double>& d_texture,
                          SceneGrads& grads) {
    if (gt.width != fb.width || gt.height != fb.height)
        fail("bad-settings", "ground truth size does not match the render");
    LossTerms t;
    const Image pred = wrap_final(fb);
    const std::size_t n_pix = static_cast<std::size_t>(fb.width) * fb.height;

    d_final.assign(n_pix * 3, 0.0);
    d_weights.assign(fb.weights.size(), 0.0);
    d_texture.assign(fb.texture.size(), 0.0);

    // Image term: (1-ld)*L1 + ld*(1-ssim)/2.
    Image d_ssim;
    const double s = ssim_with_grad(pred, gt, d_ssim);
    t.dssim = (1.0 - s) / 2.0;
    double acc = 0.0;
    const double l1_scale = 1.0 / pred.px.size();
    for (std::size_t i = 0; i < pred.px.size(); ++i) {
        const double diff = pred.px[i] - gt.px[i];
        acc += std::abs(diff);
        d_final[i] = (1.0 - w.dssim) * sign(diff) * l1_scale - 0.5 * w.dssim * d_ssim.px[i];
    }
    t.l1 = acc * l1_scale;
    t.image = (1.0 - w.dssim) * t.l1 + w.dssim * t.dssim;

    // Texture supervision on the weight-normalized buffered color.
    if (fb.top_k > 0) {
        double tex_acc = 0.0;
        std::size_t included = 0;
        std::vector<std::size_t> pix_included;
        pix_included.reserve(n_pix);
        for (std::size_t pix = 0; pix < n_pix; ++pix) {
            double sw = 0.0;
            for (int j = 0; j < fb.top_k; ++j) sw += fb.weights[fb.slot(pix, j)];
            if (sw < kTextureLossMinWeight) continue;
            ++included;
            pix_included.push_back(pix);
            for (int c = 0; c < 3; ++c) {
                double r = 0.0;
                for (int j = 0; j < fb.top_k; ++j) {
                    const std::size_t sl = fb.slot(pix, j);
                    r += fb.weights[sl] * fb.texture[sl * 3 + c];
                }
                tex_acc += std::abs(gt.px[pix * 3 + c] - r / sw);
            }
        }
        t.texture = included == 0 ? 0.0 : tex_acc / (3.0 * included);
        if (included > 0) {
            const double coef = w.texture / (3.0 * included);
            for (std::size_t pix : pix_included) {
                double sw = 0.0;
                for (int j = 0; j < fb.top_k; ++j) sw += fb.weights[fb.slot(pix, j)];
                double rn[3];
                for (int c = 0; c < 3; ++c) {
                    double r = 0.0;
                    for (int j = 0; j < fb.top_k; ++j) {
                        const std::size_t sl = fb.slot(pix, j);
                        r += fb.weights[sl] * fb.texture[sl * 3 + c];
                    }
                    rn[c] = r / sw;
                }
                for (int j = 0; j < fb.top_k; ++j) {
                    const std::size_t sl = fb.slot(pix, j);
                    if (fb.ids[sl] < 0) continue;
                    double dw_acc = 0.0;
                    for (int c = 0; c < 3; ++c) {
                        const double sg = sign(rn[c] - gt.px[pix * 3 + c]);
                        d_texture[sl * 3 + c] += coef * sg * fb.weights[sl] / sw;
                        dw_acc += sg * (fb.texture[sl * 3 + c] - rn[c]);
                    }
                    d_weights[sl] += coef * dw_acc / sw;
                }
            }
        }

        // Coverage term pushes buffered mass toward 1.
        double a_acc = 0.0;
        const double a_coef = w.alpha / n_pix;
        for (std::size_t pix = 0; pix < n_pix; ++pix) {
            double sw = 0.0;
            for (int j = 0; j < fb.top_k; ++j) {
                const std::size_t sl = fb.slot(pix, j);
                sw += fb.weights[sl];
                if (fb.ids[sl] >= 0) d_weights[sl] -= a_coef;
            }
            a_acc += 1.0 - sw;
        }
        t.alpha = a_acc / n_pix;
    } else {
        t.texture = 0.0;
        t.alpha = 1.0;
    }

    // Direct parameter terms.
    if (!scene.nexels.empty()) {
        double o_acc = 0.0;
        const double o_coef = w.opacity / scene.nexels.size();
        for (std::size_t i = 0; i < scene.nexels.size(); ++i) {
            const double o = sigmoid(scene.nexels[i].opacity_raw);
            o_acc += o;
            grads.prims[i].opacity_raw += o_coef * o * (1.0 - o);
        }
        t.opacity = o_acc / scene.nexels.size();
    }

    {
        const HashGrid& grid = scene.field.grid;
        const std::uint32_t T = grid.cfg.table_size();
        const int F = grid.cfg.features;
        double g_total = 0.0;
        for (int l = 0; l < grid.cfg.levels; ++l) {
            const double s3 = std::pow(grid.cfg.level_scale(l), 3.0);
            const std::size_t base = static_cast<std::size_t>(l) * T * F;
            const std::size_t n = static_cast<std::size_t>(T) * F;
            double lacc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double v = grid.table[base + i];
                lacc += v * v;
                grads.field.table[base + i] += w.grid * 2.0 * v / s3;
            }
            g_total += lacc / s3;
        }
        t.grid = g_total;
    }

    t.total = t.image + w.texture * t.texture + w.alpha * t.alpha + w.opacity * t.opacity +
              w.grid * t.grid;
    return t;
}

} // namespace nexel
