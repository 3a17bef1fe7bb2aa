#include "nexel/renderer.hpp"

#include "nexel/error.hpp"
#include "nexel/intersect.hpp"
#include "nexel/sh.hpp"
#include "nexel/threading.hpp"

#include <algorithm>
#include <cmath>

namespace nexel {

void validate_settings(const RenderSettings& s) {
    if (s.top_k < 0 || s.top_k > kMaxTopK)
        fail("bad-settings", "top_k must be in [0, " + std::to_string(kMaxTopK) + "], got " +
                                 std::to_string(s.top_k));
    if (!(s.near_eps > 0)) fail("bad-settings", "near_eps must be positive");
    if (!(s.alpha_max > 0) || s.alpha_max >= 1) fail("bad-settings", "alpha_max must be in (0,1)");
    if (!(s.min_transmittance >= 0)) fail("bad-settings", "min_transmittance must be >= 0");
    if (s.tile < 1) fail("bad-settings", "tile must be >= 1");
}

namespace {

struct Binning {
    std::vector<ActivatedPrimitive> act;
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::vector<std::int32_t>> tile_lists; // front-to-back per tile
};

// Projects the analytic support quad of each primitive, assigns it to the
// tiles its projection may touch, and orders every tile list front to back by
// center depth (ties by id). Primitives whose entire support sits behind the
// pinhole can never be hit by a forward ray and are dropped; partially
// behind-camera supports fall back to covering every tile.
Binning build_binning(const Scene& scene, const Camera& cam) {
    Binning bin;
    bin.act = activate_all(scene.nexels, scene.settings.no_gamma);
    const int tile = scene.settings.tile;
    bin.tiles_x = (cam.width + tile - 1) / tile;
    bin.tiles_y = (cam.height + tile - 1) / tile;
    bin.tile_lists.assign(static_cast<std::size_t>(bin.tiles_x) * bin.tiles_y, {});

    struct Entry {
        double depth;
        std::int32_t id;
        int tx0, tx1, ty0, ty1; // inclusive tile range
    };
    std::vector<Entry> entries;
    entries.reserve(bin.act.size());

    for (std::size_t i = 0; i < bin.act.size(); ++i) {
        const ActivatedPrimitive& a = bin.act[i];
        const double ru = support_radius(a.opacity, a.gamma.x);
        const double rv = support_radius(a.opacity, a.gamma.y);
        if (ru <= 0.0 || rv <= 0.0) continue;

        const Vec3 du = (ru * a.sigma.x) * a.R.col(0);
        const Vec3 dv = (rv * a.sigma.y) * a.R.col(1);
        const Vec3 corners[4] = {a.mu + du + dv, a.mu + du - dv, a.mu - du + dv, a.mu - du - dv};

        bool all_behind = cam.to_camera(a.mu).z < 1e-9;
        bool all_visible = true;
        double px0 = 1e300, px1 = -1e300, py0 = 1e300, py1 = -1e300;
        for (const Vec3& c : corners) {
            auto p = cam.project(c);
            if (!p) {
                all_visible = false;
                continue;
            }
            all_behind = false;
            px0 = std::min(px0, p->x);
            px1 = std::max(px1, p->x);
            py0 = std::min(py0, p->y);
            py1 = std::max(py1, p->y);
        }
        if (all_behind && !all_visible) continue;

        Entry e;
        e.depth = cam.center_depth(a.mu);
        e.id = static_cast<std::int32_t>(i);
        if (all_visible) {
            // Pixel centers are at integer + 0.5; pad one pixel for safety.
            const int ix0 = static_cast<int>(std::floor(px0 - 1.5));
            const int ix1 = static_cast<int>(std::ceil(px1 + 0.5));
            const int iy0 = static_cast<int>(std::floor(py0 - 1.5));
            const int iy1 = static_cast<int>(std::ceil(py1 + 0.5));
            if (ix1 < 0 || iy1 < 0 || ix0 >= cam.width || iy0 >= cam.height) continue;
            e.tx0 = std::clamp(ix0, 0, cam.width - 1) / tile;
            e.tx1 = std::clamp(ix1, 0, cam.width - 1) / tile;
            e.ty0 = std::clamp(iy0, 0, cam.height - 1) / tile;
            e.ty1 = std::clamp(iy1, 0, cam.height - 1) / tile;
        } else {
            e.tx0 = 0;
            e.tx1 = bin.tiles_x - 1;
            e.ty0 = 0;
            e.ty1 = bin.tiles_y - 1;
        }
        entries.push_back(e);
    }

    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.id < b.id;
    });
    for (const Entry& e : entries)
        for (int ty = e.ty0; ty <= e.ty1; ++ty)
            for (int tx = e.tx0; tx <= e.tx1; ++tx)
                bin.tile_lists[static_cast<std::size_t>(ty) * bin.tiles_x + tx].push_back(e.id);
    return bin;
}

} // namespace

void collection_pass(const Scene& scene, const Camera& cam, RenderResult& out) {
    validate_settings(scene.settings);
    validate_camera(cam);
    const RenderSettings& st = scene.settings;
    const int K = st.top_k;
    out.fb.allocate(cam.width, cam.height, K);
    out.blended_error.assign(scene.nexels.size(), 0.0);

    const Binning bin = build_binning(scene, cam);
    FrameBuffers& fb = out.fb;
    const int tile = st.tile;
    const int degree = scene.sh_degree();
    const std::size_t n_tiles = bin.tile_lists.size();

    parallel_chunks(n_tiles, 1, [&](std::size_t, std::size_t t, std::size_t) {
        const int ty = static_cast<int>(t) / bin.tiles_x;
        const int tx = static_cast<int>(t) % bin.tiles_x;
        const auto& list = bin.tile_lists[t];
        const int x1 = std::min(cam.width, (tx + 1) * tile);
        const int y1 = std::min(cam.height, (ty + 1) * tile);
        TopKBuffer topk;

        for (int py = ty * tile; py < y1; ++py) {
            for (int px = tx * tile; px < x1; ++px) {
                const Ray ray = cam.pixel_ray(px + 0.5, py + 0.5);
                const std::size_t pix = fb.pixel(px, py);
                double T = 1.0;
                Vec3 acc;
                topk.reset(K);
                for (std::int32_t id : list) {
                    const SurfelHit h = intersect(bin.act[id], ray, st.near_eps);
                    if (!h.hit) continue;
                    const double alpha = std::min(h.alpha, st.alpha_max);
                    const double w = alpha * T;
                    acc += w * eval_sh(scene.nexels[id].sh.data(), ray.dir, degree);
                    topk.insert(id, w, h.t);
                    T *= 1.0 - alpha;
                    if (T < st.min_transmittance) break;
                }
                fb.residual[pix] = T;
                acc += T * st.background;
                topk.finalize();
                for (int j = 0; j < topk.size; ++j) {
                    const auto& s = topk.e[j];
                    const std::size_t sl = fb.slot(pix, j);
                    fb.ids[sl] = s.id;
                    fb.depths[sl] = s.depth;
                    fb.weights[sl] = s.weight;
                    acc -= s.weight * eval_sh(scene.nexels[s.id].sh.data(), ray.dir, degree);
                }
                fb.base[pix * 3 + 0] = acc.x;
                fb.base[pix * 3 + 1] = acc.y;
                fb.base[pix * 3 + 2] = acc.z;
            }
        }
    });
}

namespace {

// Texture queries are enumerated pixel major, slot minor, skipping empty
// slots; forward and backward must agree on this order.
void build_queries(const FrameBuffers& fb, const Camera& cam, std::vector<FieldQuery>& queries,
                   std::vector<std::size_t>& slot_to_query) {
    queries.clear();
    slot_to_query.assign(fb.ids.size(), static_cast<std::size_t>(-1));
    for (int py = 0; py < fb.height; ++py) {
        for (int px = 0; px < fb.width; ++px) {
            const std::size_t pix = fb.pixel(px, py);
            Ray ray;
            bool have_ray = false;
            for (int j = 0; j < fb.top_k; ++j) {
                const std::size_t sl = fb.slot(pix, j);
                if (fb.ids[sl] < 0) continue;
                if (!have_ray) {
                    ray = cam.pixel_ray(px + 0.5, py + 0.5);
                    have_ray = true;
                }
                FieldQuery q;
                q.t = fb.depths[sl];
                q.x = ray.origin + q.t * ray.dir;
                q.f = cam.fx;
                q.dir = ray.dir;
                slot_to_query[sl] = queries.size();
                queries.push_back(q);
            }
        }
    }
}

} // namespace

void texturing_pass(const Scene& scene, const Camera& cam, FrameBuffers& fb) {
    if (fb.top_k == 0) {
        fb.final_img = fb.base;
        return;
    }
    std::vector<FieldQuery> queries;
    std::vector<std::size_t> slot_to_query;
    build_queries(fb, cam, queries, slot_to_query);
    std::vector<double> colors(queries.size() * 3, 0.0);
    field_forward_batch(scene.field, queries, colors.data(), scene.settings.no_downweight);

    const std::size_t n_pix = static_cast<std::size_t>(fb.width) * fb.height;
    parallel_chunks(n_pix, 4096, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t pix = b; pix < e; ++pix) {
            Vec3 acc{fb.base[pix * 3 + 0], fb.base[pix * 3 + 1], fb.base[pix * 3 + 2]};
            for (int j = 0; j < fb.top_k; ++j) {
                const std::size_t sl = fb.slot(pix, j);
                const std::size_t q = slot_to_query[sl];
                if (q == static_cast<std::size_t>(-1)) continue;
                for (int c = 0; c < 3; ++c) fb.texture[sl * 3 + c] = colors[q * 3 + c];
                const double w = fb.weights[sl];
                acc.x += w * colors[q * 3 + 0];
                acc.y += w * colors[q * 3 + 1];
                acc.z += w * colors[q * 3 + 2];
            }
            fb.final_img[pix * 3 + 0] = acc.x;
            fb.final_img[pix * 3 + 1] = acc.y;
            fb.final_img[pix * 3 + 2] = acc.z;
        }
    });
}

RenderResult render(const Scene& scene, const Camera& cam) {
    RenderResult out;
    collection_pass(scene, cam, out);
    texturing_pass(scene, cam, out.fb);
    return out;
}

void SceneGrads::allocate(const Scene& scene) {
    prims.assign(scene.nexels.size(), PrimitiveGrad{});
    field.allocate(scene.field);
}

void render_backward(const Scene& scene, const Camera& cam, const FrameBuffers& fb,
                     const UpstreamGrads& up, SceneGrads& grads, const double* err_pixel,
                     std::vector<double>* blended_error) {
    const RenderSettings& st = scene.settings;
    const int K = fb.top_k;
    const int degree = scene.sh_degree();
    const Binning bin = build_binning(scene, cam);

    // Field branch first: it yields the positional gradients the compositing
    // branch folds into each buffered crossing's t.
    std::vector<FieldQuery> queries;
    std::vector<std::size_t> slot_to_query;
    std::vector<double> d_t_total;
    if (K > 0) {
        build_queries(fb, cam, queries, slot_to_query);
        std::vector<double> d_colors(queries.size() * 3, 0.0);
        for (std::size_t sl = 0; sl < slot_to_query.size(); ++sl) {
            const std::size_t q = slot_to_query[sl];
            if (q == static_cast<std::size_t>(-1)) continue;
            const std::size_t pix = sl / K;
            const double w = fb.weights[sl];
            for (int c = 0; c < 3; ++c) {
                double g = 0.0;
                if (up.d_final) g += w * up.d_final[pix * 3 + c];
                if (up.d_texture) g += up.d_texture[sl * 3 + c];
                d_colors[q * 3 + c] = g;
            }
        }
        std::vector<Vec3> d_x(queries.size());
        d_t_total.assign(queries.size(), 0.0);
        field_backward_batch(scene.field, queries, d_colors.data(), grads.field, d_x.data(),
                             d_t_total.data(), st.no_downweight);
        for (std::size_t q = 0; q < queries.size(); ++q)
            d_t_total[q] += dot(d_x[q], queries[q].dir);
    }

    const int tile = st.tile;
    const std::size_t n_tiles = bin.tile_lists.size();
    std::vector<std::vector<PrimitiveGrad>> tile_grads(n_tiles);
    std::vector<std::vector<double>> tile_err(n_tiles);

    parallel_chunks(n_tiles, 1, [&](std::size_t, std::size_t t, std::size_t) {
        const auto& list = bin.tile_lists[t];
        if (list.empty()) return;
        tile_grads[t].assign(list.size(), PrimitiveGrad{});
        if (err_pixel && blended_error) tile_err[t].assign(list.size(), 0.0);

        const int ty = static_cast<int>(t) / bin.tiles_x;
        const int tx = static_cast<int>(t) % bin.tiles_x;
        const int x1 = std::min(cam.width, (tx + 1) * tile);
        const int y1 = std::min(cam.height, (ty + 1) * tile);

        struct Contrib {
            int pos;              // index into the tile list
            SurfelHit hit;
            double alpha;         // clamped
            bool clamped;
            double T;             // transmittance before this hit
            int slot;             // buffered slot or -1
            Vec3 color;           // sh color (unbuffered only)
            double basis[kShCoeffs];
            std::array<bool, 3> active;
        };
        std::vector<Contrib> march;
        march.reserve(list.size());

        for (int py = ty * tile; py < y1; ++py) {
            for (int px = tx * tile; px < x1; ++px) {
                const Ray ray = cam.pixel_ray(px + 0.5, py + 0.5);
                const std::size_t pix = fb.pixel(px, py);
                const double* d_final = up.d_final ? up.d_final + pix * 3 : nullptr;

                march.clear();
                double T = 1.0;
                for (std::size_t pos = 0; pos < list.size(); ++pos) {
                    const std::int32_t id = list[pos];
                    const SurfelHit h = intersect(bin.act[id], ray, st.near_eps);
                    if (!h.hit) continue;
                    Contrib c;
                    c.pos = static_cast<int>(pos);
                    c.hit = h;
                    c.clamped = h.alpha > st.alpha_max;
                    c.alpha = c.clamped ? st.alpha_max : h.alpha;
                    c.T = T;
                    c.slot = -1;
                    for (int j = 0; j < K; ++j) {
                        const std::size_t sl = fb.slot(pix, j);
                        if (fb.ids[sl] == id) {
                            c.slot = j;
                            break;
                        }
                    }
                    if (c.slot < 0)
                        c.color = eval_sh_cached(scene.nexels[id].sh.data(), ray.dir, degree,
                                                 c.basis, c.active);
                    march.push_back(c);
                    T *= 1.0 - c.alpha;
                    if (T < st.min_transmittance) break;
                }

                Vec3 dfin = d_final ? Vec3{d_final[0], d_final[1], d_final[2]} : Vec3{};
                // Suffix accumulator of dL/dw_j * w_j, seeded by the
                // background term behind the terminal transmittance.
                double A = dot(dfin, st.background) * fb.residual[pix];

                for (std::size_t mi = march.size(); mi-- > 0;) {
                    const Contrib& c = march[mi];
                    const std::int32_t id = list[c.pos];
                    double dw;
                    double d_t = 0.0;
                    if (c.slot >= 0) {
                        const std::size_t sl = fb.slot(pix, c.slot);
                        Vec3 tex{fb.texture[sl * 3 + 0], fb.texture[sl * 3 + 1],
                                 fb.texture[sl * 3 + 2]};
                        dw = dot(dfin, tex);
                        if (up.d_weights) dw += up.d_weights[sl];
                        const std::size_t q = slot_to_query[sl];
                        if (q != static_cast<std::size_t>(-1)) d_t = d_t_total[q];
                    } else {
                        dw = dot(dfin, c.color);
                    }

                    const double w = c.alpha * c.T;
                    double d_alpha = dw * c.T - A / (1.0 - c.alpha);
                    A += dw * w;
                    if (c.clamped) d_alpha = 0.0;

                    PrimitiveGrad& pg = tile_grads[t][c.pos];
                    if (c.slot < 0) {
                        const Vec3 d_color = w * dfin;
                        eval_sh_backward(d_color, c.basis, c.active, degree, pg.sh.data());
                    }
                    ActivatedGrad ag;
                    intersect_backward(bin.act[id], ray, c.hit, d_alpha, d_t, ag);
                    activation_backward(scene.nexels[id], bin.act[id], ag, st.no_gamma, pg);

                    if (err_pixel && blended_error) tile_err[t][c.pos] += w * err_pixel[pix];
                }
            }
        }
    });

    for (std::size_t t = 0; t < n_tiles; ++t) {
        const auto& list = bin.tile_lists[t];
        if (tile_grads[t].empty()) continue;
        for (std::size_t pos = 0; pos < list.size(); ++pos) grads.prims[list[pos]] += tile_grads[t][pos];
        if (!tile_err[t].empty())
            for (std::size_t pos = 0; pos < list.size(); ++pos)
                (*blended_error)[list[pos]] += tile_err[t][pos];
    }
}

} // namespace nexel
