#include "nexel/oracle.hpp"

#include "nexel/error.hpp"
#include "nexel/intersect.hpp"
#include "nexel/sh.hpp"
#include "nexel/texture_field.hpp"

#include <algorithm>
#include <cmath>

namespace nexel {

Image naive_render(const Scene& scene, const Camera& cam) {
    validate_settings(scene.settings);
    validate_camera(cam);
    const RenderSettings& st = scene.settings;
    const int K = st.top_k;
    const int degree = scene.sh_degree();
    const std::vector<ActivatedPrimitive> act = activate_all(scene.nexels, st.no_gamma);

    struct Order {
        double depth;
        std::int32_t id;
    };
    std::vector<Order> order;
    order.reserve(act.size());
    for (std::size_t i = 0; i < act.size(); ++i)
        order.push_back({cam.center_depth(act[i].mu), static_cast<std::int32_t>(i)});
    std::sort(order.begin(), order.end(), [](const Order& a, const Order& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.id < b.id;
    });

    struct Contrib {
        std::int32_t id;
        int arrival;
        double w;
        double t;
    };
    std::vector<Contrib> contribs;

    Image img;
    img.width = cam.width;
    img.height = cam.height;
    img.px.assign(static_cast<std::size_t>(cam.width) * cam.height * 3, 0.0);

    for (int py = 0; py < cam.height; ++py) {
        for (int px = 0; px < cam.width; ++px) {
            const Ray ray = cam.pixel_ray(px + 0.5, py + 0.5);
            double T = 1.0;
            Vec3 acc;
            contribs.clear();
            for (const Order& o : order) {
                const SurfelHit h = intersect(act[o.id], ray, st.near_eps);
                if (!h.hit) continue;
                const double alpha = std::min(h.alpha, st.alpha_max);
                const double w = alpha * T;
                acc += w * eval_sh(scene.nexels[o.id].sh.data(), ray.dir, degree);
                contribs.push_back({o.id, static_cast<int>(contribs.size()), w, h.t});
                T *= 1.0 - alpha;
            }
            acc += T * st.background;

            if (K > 0 && !contribs.empty()) {
                std::sort(contribs.begin(), contribs.end(), [](const Contrib& a, const Contrib& b) {
                    if (a.w != b.w) return a.w > b.w;
                    return a.arrival < b.arrival;
                });
                const int take = std::min<int>(K, static_cast<int>(contribs.size()));
                for (int j = 0; j < take; ++j)
                    acc -= contribs[j].w *
                           eval_sh(scene.nexels[contribs[j].id].sh.data(), ray.dir, degree);
                for (int j = 0; j < take; ++j) {
                    FieldQuery q;
                    q.t = contribs[j].t;
                    q.x = ray.origin + q.t * ray.dir;
                    q.f = cam.fx;
                    q.dir = ray.dir;
                    acc += contribs[j].w * field_forward(scene.field, q, st.no_downweight);
                }
            }

            const std::size_t pix = (static_cast<std::size_t>(py) * cam.width + px) * 3;
            img.px[pix + 0] = acc.x;
            img.px[pix + 1] = acc.y;
            img.px[pix + 2] = acc.z;
        }
    }
    return img;
}

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& params, double step) {
    std::vector<double> x = params;
    std::vector<double> grad(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + step;
        const double hi = f(x);
        x[i] = saved - step;
        const double lo = f(x);
        x[i] = saved;
        if (!std::isfinite(hi) || !std::isfinite(lo))
            fail("non-finite-eval", "loss not finite near the probe point");
        grad[i] = (hi - lo) / (2.0 * step);
    }
    return grad;
}

} // namespace nexel
