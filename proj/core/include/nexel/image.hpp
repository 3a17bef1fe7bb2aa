#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nexel {

// Row-major rgb image, values nominally in [0, 1] (not clamped in memory).
struct Image {
    int width = 0, height = 0;
    std::vector<double> px; // width*height*3

    void allocate(int w, int h, double fill = 0.0) {
        width = w;
        height = h;
        px.assign(static_cast<std::size_t>(w) * h * 3, fill);
    }
    double& at(int x, int y, int c) { return px[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const {
        return px[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

// 8-bit rgb PNG, sRGB bytes mapped linearly to [0,1] (no transfer function).
Image load_png(const std::string& path);
void save_png(const std::string& path, const Image& img);

} // namespace nexel
