#pragma once

#include "nexel/scene.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace nexel {

// Keeps the K largest-weight intersections seen so far, ties broken in favor
// of earlier insertions. Equivalent to sorting all insertions by
// (weight desc, arrival asc) and keeping the first K.
struct TopKBuffer {
    struct Entry {
        std::int32_t id = -1;
        double weight = 0;
        double depth = 0;
        std::uint32_t seq = 0;
    };
    Entry e[kMaxTopK];
    int k = 0;
    int size = 0;
    std::uint32_t counter = 0;

    void reset(int top_k) {
        k = top_k;
        size = 0;
        counter = 0;
        for (auto& s : e) s = {};
    }

    void insert(std::int32_t id, double weight, double depth) {
        const std::uint32_t seq = counter++;
        if (size < k) {
            e[size++] = {id, weight, depth, seq};
            return;
        }
        if (k == 0) return;
        // Last-ranked incumbent: smallest weight, latest arrival among ties.
        int m = 0;
        for (int i = 1; i < size; ++i) {
            if (e[i].weight < e[m].weight ||
                (e[i].weight == e[m].weight && e[i].seq > e[m].seq))
                m = i;
        }
        if (weight > e[m].weight) e[m] = {id, weight, depth, seq};
    }

    // Canonical order: weight descending, earlier arrival first.
    void finalize() {
        std::sort(e, e + size, [](const Entry& a, const Entry& b) {
            if (a.weight != b.weight) return a.weight > b.weight;
            return a.seq < b.seq;
        });
    }
};

// Per-view buffers. ids/depths/weights/texture have top_k slots per pixel;
// unused slots hold the sentinel id -1 with weight and depth 0.
struct FrameBuffers {
    int width = 0, height = 0, top_k = 0;
    std::vector<double> base;       // H*W*3, untextured render
    std::vector<std::int32_t> ids;  // H*W*K
    std::vector<double> depths;     // H*W*K
    std::vector<double> weights;    // H*W*K
    std::vector<double> texture;    // H*W*K*3, queried texture colors
    std::vector<double> final_img;  // H*W*3
    std::vector<double> residual;   // H*W terminal transmittance

    void allocate(int w, int h, int k) {
        width = w;
        height = h;
        top_k = k;
        base.assign(static_cast<std::size_t>(w) * h * 3, 0.0);
        ids.assign(static_cast<std::size_t>(w) * h * k, -1);
        depths.assign(static_cast<std::size_t>(w) * h * k, 0.0);
        weights.assign(static_cast<std::size_t>(w) * h * k, 0.0);
        texture.assign(static_cast<std::size_t>(w) * h * k * 3, 0.0);
        final_img.assign(static_cast<std::size_t>(w) * h * 3, 0.0);
        residual.assign(static_cast<std::size_t>(w) * h, 1.0);
    }

    std::size_t pixel(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    std::size_t slot(std::size_t pix, int j) const { return pix * top_k + j; }
};

} // namespace nexel
