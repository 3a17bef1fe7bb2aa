#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

#include "nexel/hash_grid.hpp"
#include "nexel/mlp.hpp"
#include "nexel/oracle.hpp"
#include "nexel/texture_field.hpp"

#include <cstdlib>
#include <set>

using namespace nexel;
using namespace testutil;

TEST_CASE("map_positive folds the integers without collisions") {
    CHECK(map_positive(0) == 0);
    CHECK(map_positive(1) == 1);
    CHECK(map_positive(-1) == 2);
    CHECK(map_positive(2) == 3);
    CHECK(map_positive(-2) == 4);
    std::set<std::uint64_t> seen;
    for (std::int64_t x = -4096; x <= 4096; ++x) CHECK(seen.insert(map_positive(x)).second);
}

TEST_CASE("hash_cell stays inside the table and matches its formula") {
    const std::uint32_t T = 1u << 10;
    std::mt19937_64 g(3);
    for (int i = 0; i < 200; ++i) {
        const std::int64_t x = static_cast<std::int64_t>(urand(g, -1e6, 1e6));
        const std::int64_t y = static_cast<std::int64_t>(urand(g, -1e6, 1e6));
        const std::int64_t z = static_cast<std::int64_t>(urand(g, -1e6, 1e6));
        const std::uint32_t h = hash_cell(x, y, z, T);
        CHECK(h < T);
        const std::uint32_t expect = (static_cast<std::uint32_t>(map_positive(x)) ^
                                      (static_cast<std::uint32_t>(map_positive(y)) * 2654435761u) ^
                                      (static_cast<std::uint32_t>(map_positive(z)) * 805459861u)) &
                                     (T - 1);
        CHECK(h == expect);
    }
}

TEST_CASE("downweight limits, erf consistency, and monotonicity") {
    CHECK(downweight(1.0, 1.0, 1e-6) == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(downweight(1.0, 1.0, 1e6) == doctest::Approx(1.0).epsilon(1e-12));

    // The factor is 1 - exp(-4x^2/pi), whose deviation from erf(x)^2 peaks at
    // 0.0115 near x = 1.23, so 0.012 is the tightest feasible bound.
    std::mt19937_64 g(5);
    for (int i = 0; i < 2000; ++i) {
        const double r = std::exp(urand(g, std::log(0.01), std::log(100.0)));
        const double s = std::exp(urand(g, -2, 6));
        const double t = std::exp(urand(g, -1, 2));
        const double f = r * s * t;
        const double dw = downweight(s, t, f);
        const double e = std::erf(f / (2.0 * std::sqrt(2.0) * s * t));
        CHECK(std::abs(dw - e * e) <= 0.012);
    }

    // decreasing in t and s, increasing in f
    double prev = downweight(10.0, 0.1, 5.0);
    for (double t = 0.2; t < 50.0; t *= 1.7) {
        const double cur = downweight(10.0, t, 5.0);
        CHECK(cur <= prev);
        prev = cur;
    }
    prev = downweight(0.01, 2.0, 5.0);
    for (double s = 0.02; s < 1e4; s *= 2.3) {
        const double cur = downweight(s, 2.0, 5.0);
        CHECK(cur <= prev);
        prev = cur;
    }
    prev = downweight(10.0, 2.0, 0.01);
    for (double f = 0.02; f < 1e4; f *= 2.3) {
        const double cur = downweight(10.0, 2.0, f);
        CHECK(cur >= prev);
        prev = cur;
    }
}

TEST_CASE("downweight_grad_t matches finite differences") {
    std::mt19937_64 g(7);
    for (int i = 0; i < 30; ++i) {
        const double s = std::exp(urand(g, -1, 4));
        const double t = std::exp(urand(g, -1, 2));
        const double f = std::exp(urand(g, 0, 4));
        auto fn = [&](const std::vector<double>& p) { return downweight(s, p[0], f); };
        const std::vector<double> fd = finite_diff_grad(fn, {t});
        CHECK(grad_close(downweight_grad_t(s, t, f), fd[0], 1e-5, 1e-9));
    }
}

TEST_CASE("level scales form a geometric ladder with pinned endpoints") {
    const HashGridConfig cfg = HashGridConfig::for_extent(3.0, 16, 10, 2);
    CHECK(cfg.level_scale(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(cfg.level_scale(15) == doctest::Approx(32768.0 / 3.0).epsilon(1e-12));
    for (int l = 0; l + 1 < 16; ++l)
        CHECK(cfg.level_scale(l + 1) / cfg.level_scale(l) == doctest::Approx(cfg.growth).epsilon(1e-12));

    const HashGridConfig twelve = HashGridConfig::for_extent(3.0, 12, 10, 2);
    CHECK(twelve.level_scale(11) == doctest::Approx(32768.0 / 3.0).epsilon(1e-12));

    const HashGridConfig one = HashGridConfig::for_extent(3.0, 1, 10, 2);
    CHECK(one.growth == 1.0);

    CHECK(cfg.table_size() == 1024);
    CHECK(cfg.param_count() == 16u * 1024u * 2u);
}

TEST_CASE("grid_lookup interpolates trilinearly") {
    HashGrid grid;
    grid.cfg = HashGridConfig::for_extent(1.0, 1, 6, 2); // one level, scale 1
    grid.allocate();

    // Fill the 8 corners of the cell containing p = (0.25, 0.5, 0.75).
    const std::int64_t bx = 0, by = 0, bz = 0;
    double expect0 = 0.0, expect1 = 0.0;
    const double fx = 0.25, fy = 0.5, fz = 0.75;
    std::mt19937_64 g(11);
    for (int ci = 0; ci < 8; ++ci) {
        const std::uint32_t row =
            hash_cell(bx + (ci & 1), by + ((ci >> 1) & 1), bz + ((ci >> 2) & 1), grid.cfg.table_size());
        const double f0 = urand(g, -1, 1), f1 = urand(g, -1, 1);
        grid.table[grid.entry_index(0, row, 0)] = f0;
        grid.table[grid.entry_index(0, row, 1)] = f1;
        const double w = ((ci & 1) ? fx : 1 - fx) * ((ci & 2) ? fy : 1 - fy) * ((ci & 4) ? fz : 1 - fz);
        expect0 += w * f0;
        expect1 += w * f1;
    }

    double out[2];
    LevelLookup cache[1];
    grid_lookup(grid, {0.25, 0.5, 0.75}, 2.0, 8.0, out, cache);
    const double dw = downweight(1.0, 2.0, 8.0);
    CHECK(out[0] == doctest::Approx(dw * expect0).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(dw * expect1).epsilon(1e-12));
    CHECK(cache[0].dw == dw);
    CHECK(cache[0].frac.x == doctest::Approx(0.25).epsilon(1e-15));
    double wsum = 0;
    for (int ci = 0; ci < 8; ++ci) wsum += cache[0].corner_w[ci];
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));

    double out_nd[2];
    grid_lookup(grid, {0.25, 0.5, 0.75}, 2.0, 8.0, out_nd, nullptr, true);
    CHECK(out_nd[0] == doctest::Approx(expect0).epsilon(1e-12));
}

TEST_CASE("grid_lookup_backward matches finite differences") {
    std::mt19937_64 g(13);
    HashGrid grid;
    grid.cfg = HashGridConfig::for_extent(2.0, 4, 5, 2);
    grid.allocate();
    for (double& v : grid.table) v = urand(g, -0.5, 0.5);
    const int n_out = grid.cfg.levels * grid.cfg.features;

    for (int trial = 0; trial < 6; ++trial) {
        const Vec3 x{urand(g, -0.9, 0.9), urand(g, -0.9, 0.9), urand(g, -0.9, 0.9)};
        const double t = urand(g, 1.0, 5.0), f = 32.0;
        std::vector<double> d_out(n_out);
        for (double& v : d_out) v = urand(g, -1, 1);

        auto probe = [&](const HashGrid& gr, Vec3 xx, double tt) {
            std::vector<double> out(n_out);
            grid_lookup(gr, xx, tt, f, out.data());
            double acc = 0;
            for (int i = 0; i < n_out; ++i) acc += d_out[i] * out[i];
            return acc;
        };

        std::vector<LevelLookup> cache(grid.cfg.levels);
        std::vector<double> out(n_out);
        grid_lookup(grid, x, t, f, out.data(), cache.data());

        std::vector<double> d_table(grid.table.size(), 0.0);
        Vec3 d_x;
        double d_t = 0;
        grid_lookup_backward(grid, x, t, f, cache.data(),
                             d_out.data(), [&](std::size_t idx, double v) { d_table[idx] += v; },
                             d_x, d_t);

        // position and t
        const std::vector<double> fd_x = finite_diff_grad(
            [&](const std::vector<double>& p) { return probe(grid, {p[0], p[1], p[2]}, t); },
            {x.x, x.y, x.z}, 1e-6);
        CHECK(grad_close(d_x.x, fd_x[0], 1e-4, 1e-8));
        CHECK(grad_close(d_x.y, fd_x[1], 1e-4, 1e-8));
        CHECK(grad_close(d_x.z, fd_x[2], 1e-4, 1e-8));
        const std::vector<double> fd_t = finite_diff_grad(
            [&](const std::vector<double>& p) { return probe(grid, x, p[0]); }, {t});
        CHECK(grad_close(d_t, fd_t[0], 1e-4, 1e-9));

        // a sample of touched table entries
        int checked = 0;
        for (std::size_t idx = 0; idx < d_table.size() && checked < 12; ++idx) {
            if (d_table[idx] == 0.0) continue;
            ++checked;
            HashGrid pert = grid;
            const double h = 1e-5;
            pert.table[idx] = grid.table[idx] + h;
            const double up = probe(pert, x, t);
            pert.table[idx] = grid.table[idx] - h;
            const double dn = probe(pert, x, t);
            CHECK(grad_close(d_table[idx], (up - dn) / (2 * h), 1e-4, 1e-9));
        }
        CHECK(checked > 0);
    }
}

TEST_CASE("grid position gradient respects fades when disabled") {
    std::mt19937_64 g(17);
    HashGrid grid;
    grid.cfg = HashGridConfig::for_extent(2.0, 3, 5, 2);
    grid.allocate();
    for (double& v : grid.table) v = urand(g, -0.5, 0.5);
    const int n_out = grid.cfg.levels * grid.cfg.features;
    std::vector<double> d_out(n_out, 1.0), out(n_out);
    std::vector<LevelLookup> cache(grid.cfg.levels);
    const Vec3 x{0.3, -0.2, 0.4};
    grid_lookup(grid, x, 2.0, 8.0, out.data(), cache.data(), true);
    Vec3 d_x;
    double d_t = 0.0;
    grid_lookup_backward(grid, x, 2.0, 8.0, cache.data(), d_out.data(),
                         [](std::size_t, double) {}, d_x, d_t, true);
    CHECK(d_t == 0.0); // no fade, no t dependence
    CHECK(std::abs(d_x.x) > 0.0);
}

TEST_CASE("mlp has the documented parameter count and shapes") {
    TextureMlp mlp;
    mlp.allocate();
    CHECK(mlp.param_count() == 9216);
    CHECK(mlp.w1.size() == 64u * 32u);
    CHECK(mlp.w2.size() == 64u * 64u);
    CHECK(mlp.w3.size() == 48u * 64u);
}

TEST_CASE("mlp zero input maps to exactly zero output") {
    std::mt19937_64 g(19);
    TextureMlp mlp;
    mlp.init(g);
    std::vector<double> x(mlp.n_in, 0.0), h1(mlp.n_hidden), h2(mlp.n_hidden), y(mlp.n_out);
    mlp.forward(x.data(), h1.data(), h2.data(), y.data());
    for (double v : y) CHECK(v == 0.0);

    // relu'(0) = 0: nothing flows back through dead activations
    std::vector<double> d_y(mlp.n_out, 1.0), d_x(mlp.n_in, -1.0);
    std::vector<double> g1(mlp.w1.size(), 0.0), g2(mlp.w2.size(), 0.0), g3(mlp.w3.size(), 0.0);
    mlp.backward(x.data(), h1.data(), h2.data(), d_y.data(), g1.data(), g2.data(), g3.data(),
                 d_x.data());
    for (double v : d_x) CHECK(v == 0.0);
    for (double v : g1) CHECK(v == 0.0);
    for (double v : g2) CHECK(v == 0.0);
}

TEST_CASE("mlp init variance follows the he rule") {
    std::mt19937_64 g(23);
    TextureMlp mlp;
    mlp.init(g);
    auto var = [](const std::vector<double>& w) {
        double m = 0;
        for (double v : w) m += v;
        m /= w.size();
        double s = 0;
        for (double v : w) s += (v - m) * (v - m);
        return s / w.size();
    };
    CHECK(var(mlp.w1) == doctest::Approx(2.0 / 32.0).epsilon(0.15));
    CHECK(var(mlp.w2) == doctest::Approx(2.0 / 64.0).epsilon(0.15));
    CHECK(var(mlp.w3) == doctest::Approx(2.0 / 64.0).epsilon(0.15));
}

TEST_CASE("mlp backward matches finite differences") {
    std::mt19937_64 g(29);
    TextureMlp mlp;
    mlp.n_in = 6;
    mlp.n_hidden = 10;
    mlp.n_out = 5;
    mlp.init(g);

    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> x(mlp.n_in), d_y(mlp.n_out);
        for (double& v : x) v = urand(g, -1, 1);
        for (double& v : d_y) v = urand(g, -1, 1);

        auto probe = [&](const TextureMlp& m, const std::vector<double>& in) {
            std::vector<double> h1(m.n_hidden), h2(m.n_hidden), y(m.n_out);
            m.forward(in.data(), h1.data(), h2.data(), y.data());
            double acc = 0;
            for (int i = 0; i < m.n_out; ++i) acc += d_y[i] * y[i];
            return acc;
        };

        std::vector<double> h1(mlp.n_hidden), h2(mlp.n_hidden), y(mlp.n_out);
        mlp.forward(x.data(), h1.data(), h2.data(), y.data());
        std::vector<double> g1(mlp.w1.size(), 0.0), g2(mlp.w2.size(), 0.0), g3(mlp.w3.size(), 0.0);
        std::vector<double> d_x(mlp.n_in, 0.0);
        mlp.backward(x.data(), h1.data(), h2.data(), d_y.data(), g1.data(), g2.data(), g3.data(),
                     d_x.data());

        const std::vector<double> fd_x =
            finite_diff_grad([&](const std::vector<double>& p) { return probe(mlp, p); }, x);
        CHECK(compare_grads(d_x, fd_x, 1e-4, 1e-9).failures == 0);

        auto fd_weights = [&](std::vector<double> TextureMlp::*layer, std::vector<double>& an) {
            std::vector<double> fd(an.size());
            for (std::size_t i = 0; i < an.size(); ++i) {
                TextureMlp pert = mlp;
                const double h = 1e-5;
                (pert.*layer)[i] += h;
                const double up = probe(pert, x);
                (pert.*layer)[i] -= 2 * h;
                const double dn = probe(pert, x);
                fd[i] = (up - dn) / (2 * h);
            }
            CHECK(compare_grads(an, fd, 1e-4, 1e-9).failures == 0);
        };
        fd_weights(&TextureMlp::w1, g1);
        fd_weights(&TextureMlp::w2, g2);
        fd_weights(&TextureMlp::w3, g3);
    }
}

TEST_CASE("zero grid gives exactly zero coefficients and mid-gray color") {
    std::mt19937_64 g(31);
    TextureField field;
    field.init(HashGridConfig::for_extent(2.0, 4, 6, 2), g, 1e-4);
    for (double& v : field.grid.table) v = 0.0;

    for (int i = 0; i < 10; ++i) {
        FieldQuery q;
        q.x = {urand(g, -1, 1), urand(g, -1, 1), urand(g, -1, 1)};
        q.t = urand(g, 0.5, 5.0);
        q.f = 64.0;
        q.dir = normalized(Vec3{urand(g, -1, 1), urand(g, -1, 1), urand(g, -1, 1)});
        double coeffs[kShValues];
        field_coeffs(field, q, coeffs);
        for (double c : coeffs) CHECK(c == 0.0);
        const Vec3 rgb = field_forward(field, q);
        CHECK(rgb.x == 0.5);
        CHECK(rgb.y == 0.5);
        CHECK(rgb.z == 0.5);
    }
}

TEST_CASE("field init keeps grid entries tiny but nonzero") {
    std::mt19937_64 g(37);
    TextureField field;
    field.init(HashGridConfig::for_extent(2.0, 2, 5, 2), g, 1e-4);
    int nonzero = 0;
    for (double v : field.grid.table) {
        CHECK(std::abs(v) <= 1e-4);
        if (v != 0.0) ++nonzero;
    }
    CHECK(nonzero > static_cast<int>(field.grid.table.size() / 2));
}

TEST_CASE("field_forward composes lookup, mlp, and sh") {
    std::mt19937_64 g(41);
    TextureField field;
    init_field(field, g, 3, 5, 1e-2, 8);
    FieldQuery q;
    q.x = {0.2, -0.1, 0.4};
    q.t = 2.5;
    q.f = 32.0;
    q.dir = normalized(Vec3{0.3, 0.4, 0.8});

    double coeffs[kShValues];
    field_coeffs(field, q, coeffs);

    std::vector<double> feats(field.grid.cfg.levels * field.grid.cfg.features);
    grid_lookup(field.grid, q.x, q.t, q.f, feats.data());
    std::vector<double> h1(field.mlp.n_hidden), h2(field.mlp.n_hidden), y(kShValues);
    field.mlp.forward(feats.data(), h1.data(), h2.data(), y.data());
    for (int i = 0; i < kShValues; ++i) CHECK(coeffs[i] == y[i]);

    const Vec3 direct = eval_sh(coeffs, q.dir);
    const Vec3 via = field_forward(field, q);
    CHECK(via.x == direct.x);
    CHECK(via.y == direct.y);
    CHECK(via.z == direct.z);
}

TEST_CASE("field_backward_batch matches finite differences") {
    std::mt19937_64 g(43);
    TextureField field;
    init_field(field, g, 3, 5, 2e-2, 12);
    for (double& v : field.grid.table) v = urand(g, -0.3, 0.3);

    // Positional derivatives kink at cell faces, so keep every query several
    // finite-difference steps away from a face at every level.
    auto face_safe = [&](Vec3 x) {
        double s = field.grid.cfg.base_scale;
        for (int l = 0; l < field.grid.cfg.levels; ++l, s *= field.grid.cfg.growth) {
            const double margin = std::max(1e-3, 1e-5 * s);
            for (int d = 0; d < 3; ++d) {
                const double p = x[d] * s;
                const double frac = p - std::floor(p);
                if (frac < margin || frac > 1.0 - margin) return false;
            }
        }
        return true;
    };

    const int n_q = 5;
    std::vector<FieldQuery> queries(n_q);
    std::vector<double> d_colors(n_q * 3);
    for (int i = 0; i < n_q; ++i) {
        do {
            queries[i].x = {urand(g, -0.8, 0.8), urand(g, -0.8, 0.8), urand(g, -0.8, 0.8)};
        } while (!face_safe(queries[i].x));
        queries[i].t = urand(g, 1.0, 4.0);
        queries[i].f = 32.0;
        queries[i].dir = normalized(Vec3{urand(g, -1, 1), urand(g, -1, 1), urand(g, -1, 1)});
        for (int c = 0; c < 3; ++c) d_colors[i * 3 + c] = urand(g, -1, 1);
    }

    auto probe = [&](const TextureField& fl, const std::vector<FieldQuery>& qs) {
        std::vector<double> colors(qs.size() * 3);
        field_forward_batch(fl, qs, colors.data());
        double acc = 0;
        for (std::size_t i = 0; i < colors.size(); ++i) acc += d_colors[i] * colors[i];
        return acc;
    };

    // Guard the sh clamp: every channel must be safely away from zero.
    for (const FieldQuery& q : queries) {
        double coeffs[kShValues], basis[16];
        field_coeffs(field, q, coeffs);
        sh_basis(q.dir, basis);
        for (int c = 0; c < 3; ++c) {
            double acc = 0.5;
            for (int k = 0; k < 16; ++k) acc += coeffs[k * 3 + c] * basis[k];
            REQUIRE(std::abs(acc) > 1e-3);
        }
    }

    FieldGrads grads;
    grads.allocate(field);
    std::vector<Vec3> d_x(n_q);
    std::vector<double> d_t(n_q, 0.0);
    field_backward_batch(field, queries, d_colors.data(), grads, d_x.data(), d_t.data());

    for (int i = 0; i < n_q; ++i) {
        auto fq = [&](const std::vector<double>& p) {
            std::vector<FieldQuery> qs = queries;
            qs[i].x = {p[0], p[1], p[2]};
            qs[i].t = p[3];
            return probe(field, qs);
        };
        const std::vector<double> fd =
            finite_diff_grad(fq, {queries[i].x.x, queries[i].x.y, queries[i].x.z, queries[i].t}, 1e-6);
        CHECK(grad_close(d_x[i].x, fd[0], 2e-4, 1e-8));
        CHECK(grad_close(d_x[i].y, fd[1], 2e-4, 1e-8));
        CHECK(grad_close(d_x[i].z, fd[2], 2e-4, 1e-8));
        CHECK(grad_close(d_t[i], fd[3], 2e-4, 1e-8));
    }

    auto fd_block = [&](const std::vector<double>& an, auto mutate, std::size_t count, int stride) {
        int checked = 0;
        for (std::size_t idx = 0; idx < count && checked < 10; idx += stride) {
            if (an[idx] == 0.0) continue;
            ++checked;
            const double h = 1e-5;
            TextureField pert = field;
            mutate(pert, idx, h);
            const double up = probe(pert, queries);
            mutate(pert, idx, -2 * h);
            const double dn = probe(pert, queries);
            CHECK(grad_close(an[idx], (up - dn) / (2 * h), 2e-4, 1e-9));
        }
        CHECK(checked > 0);
    };
    fd_block(grads.table, [](TextureField& f, std::size_t i, double h) { f.grid.table[i] += h; },
             grads.table.size(), 1);
    fd_block(grads.w1, [](TextureField& f, std::size_t i, double h) { f.mlp.w1[i] += h; },
             grads.w1.size(), 7);
    fd_block(grads.w2, [](TextureField& f, std::size_t i, double h) { f.mlp.w2[i] += h; },
             grads.w2.size(), 11);
    fd_block(grads.w3, [](TextureField& f, std::size_t i, double h) { f.mlp.w3[i] += h; },
             grads.w3.size(), 13);
}

TEST_CASE("field batches are bit-stable across worker counts") {
    std::mt19937_64 g(47);
    TextureField field;
    init_field(field, g, 4, 6, 1e-2, 16);
    for (double& v : field.grid.table) v = urand(g, -0.3, 0.3);

    const int n_q = 1200; // enough for several chunks
    std::vector<FieldQuery> queries(n_q);
    std::vector<double> d_colors(n_q * 3);
    for (int i = 0; i < n_q; ++i) {
        queries[i].x = {urand(g, -0.9, 0.9), urand(g, -0.9, 0.9), urand(g, -0.9, 0.9)};
        queries[i].t = urand(g, 0.5, 5.0);
        queries[i].f = 64.0;
        queries[i].dir = normalized(Vec3{urand(g, -1, 1), urand(g, -1, 1), urand(g, -1, 1)});
        for (int c = 0; c < 3; ++c) d_colors[i * 3 + c] = urand(g, -1, 1);
    }

    auto run = [&](const char* workers) {
        setenv("NEXEL_THREADS", workers, 1);
        std::vector<double> colors(n_q * 3);
        field_forward_batch(field, queries, colors.data());
        FieldGrads grads;
        grads.allocate(field);
        std::vector<Vec3> d_x(n_q);
        std::vector<double> d_t(n_q, 0.0);
        field_backward_batch(field, queries, d_colors.data(), grads, d_x.data(), d_t.data());
        unsetenv("NEXEL_THREADS");
        return std::make_tuple(colors, grads.table, grads.w1, d_t);
    };

    const auto a = run("1");
    const auto b = run("4");
    const auto c = run("3");
    CHECK(std::get<0>(a) == std::get<0>(b));
    CHECK(std::get<1>(a) == std::get<1>(b));
    CHECK(std::get<2>(a) == std::get<2>(b));
    CHECK(std::get<3>(a) == std::get<3>(b));
    CHECK(std::get<1>(a) == std::get<1>(c));
}
