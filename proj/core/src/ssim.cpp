#include "nexel/ssim.hpp"

#include <cmath>
#include <vector>

namespace nexel {

namespace {

constexpr int kWin = 11;
constexpr int kHalf = kWin / 2;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const double* gaussian_taps() {
    static const std::vector<double> taps = [] {
        std::vector<double> t(kWin);
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i) {
            double d = i - kHalf;
            t[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            sum += t[i];
        }
        for (double& v : t) v /= sum;
        return t;
    }();
    return taps.data();
}

// Zero-padded separable blur; the kernel is symmetric so this is its own
// adjoint, which the gradient path relies on.
void blur(const std::vector<double>& src, std::vector<double>& tmp, std::vector<double>& dst,
          int w, int h) {
    const double* g = gaussian_taps();
    tmp.assign(src.size(), 0.0);
    dst.assign(src.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        const double* row = src.data() + static_cast<std::size_t>(y) * w;
        double* out = tmp.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            const int k0 = std::max(-kHalf, -x), k1 = std::min(kHalf, w - 1 - x);
            for (int k = k0; k <= k1; ++k) acc += g[k + kHalf] * row[x + k];
            out[x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        const int k0 = std::max(-kHalf, -y), k1 = std::min(kHalf, h - 1 - y);
        double* out = dst.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = k0; k <= k1; ++k) acc += g[k + kHalf] * tmp[(y + k) * static_cast<std::size_t>(w) + x];
            out[x] = acc;
        }
    }
}

void extract_channel(const Image& img, int c, std::vector<double>& out) {
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = img.px[i * 3 + c];
}

} // namespace

double ssim(const Image& a, const Image& b) {
    const int w = a.width, h = a.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::vector<double> x, y, t0, t1, mx, my, xx, yy, xy, bxx, byy, bxy;
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        extract_channel(a, c, x);
        extract_channel(b, c, y);
        blur(x, t0, mx, w, h);
        blur(y, t0, my, w, h);
        xx.resize(n); yy.resize(n); xy.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        blur(xx, t0, bxx, w, h);
        blur(yy, t0, byy, w, h);
        blur(xy, t0, bxy, w, h);
        for (std::size_t i = 0; i < n; ++i) {
            const double sxx = bxx[i] - mx[i] * mx[i];
            const double syy = byy[i] - my[i] * my[i];
            const double sxy = bxy[i] - mx[i] * my[i];
            const double a1 = 2 * mx[i] * my[i] + kC1;
            const double a2 = 2 * sxy + kC2;
            const double b1 = mx[i] * mx[i] + my[i] * my[i] + kC1;
            const double b2 = sxx + syy + kC2;
            total += (a1 * a2) / (b1 * b2);
        }
    }
    return total / (3.0 * n);
}

double ssim_with_grad(const Image& pred, const Image& gt, Image& d_pred) {
    const int w = pred.width, h = pred.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    d_pred.allocate(w, h);
    const double scale = 1.0 / (3.0 * n);

    std::vector<double> x, y, t0, mx, my, xx, yy, xy, bxx, byy, bxy;
    std::vector<double> d_mu, d_x2, d_xy, b_dmu, b_dx2, b_dxy;
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        extract_channel(pred, c, x);
        extract_channel(gt, c, y);
        blur(x, t0, mx, w, h);
        blur(y, t0, my, w, h);
        xx.resize(n); yy.resize(n); xy.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        blur(xx, t0, bxx, w, h);
        blur(yy, t0, byy, w, h);
        blur(xy, t0, bxy, w, h);

        d_mu.assign(n, 0.0);
        d_x2.assign(n, 0.0);
        d_xy.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double sxx = bxx[i] - mx[i] * mx[i];
            const double syy = byy[i] - my[i] * my[i];
            const double sxy = bxy[i] - mx[i] * my[i];
            const double a1 = 2 * mx[i] * my[i] + kC1;
            const double a2 = 2 * sxy + kC2;
            const double b1 = mx[i] * mx[i] + my[i] * my[i] + kC1;
            const double b2 = sxx + syy + kC2;
            const double s = (a1 * a2) / (b1 * b2);
            total += s;
            // Partials wrt the blurred statistics (mu_x, E[x^2], E[xy]).
            d_mu[i] = scale * ((2 * my[i] * a2 - 2 * my[i] * a1) / (b1 * b2) -
                               s * (2 * mx[i] / b1 - 2 * mx[i] / b2));
            d_x2[i] = scale * (-s / b2);
            d_xy[i] = scale * (2 * a1 / (b1 * b2));
        }
        blur(d_mu, t0, b_dmu, w, h);
        blur(d_x2, t0, b_dx2, w, h);
        blur(d_xy, t0, b_dxy, w, h);
        for (std::size_t i = 0; i < n; ++i)
            d_pred.px[i * 3 + c] = b_dmu[i] + 2 * x[i] * b_dx2[i] + y[i] * b_dxy[i];
    }
    return total * scale;
}

} // namespace nexel
