#include "nexel/checkpoint.hpp"

#include "nexel/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace nexel {

namespace {

constexpr char kMagic[4] = {'N', 'E', 'X', 'L'};
constexpr std::uint32_t kVersion = 1;

constexpr std::uint32_t kFlagOptimizer = 1u << 0;
constexpr std::uint32_t kFlagNoGamma = 1u << 1;
constexpr std::uint32_t kFlagNoPrimSh = 1u << 2;
constexpr std::uint32_t kFlagNoDownweight = 1u << 3;

struct Writer {
    std::ofstream out;

    explicit Writer(const std::string& path) : out(path, std::ios::binary) {
        if (!out) fail("missing-file", "cannot write " + path);
    }
    void bytes(const void* p, std::size_t n) { out.write(static_cast<const char*>(p), n); }
    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 8);
    }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void f32_array(const double* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) f32(static_cast<float>(p[i]));
    }
    void f64_array(const double* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) f64(p[i]);
    }
};

struct Reader {
    std::ifstream in;
    std::string path;

    explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) fail("missing-file", "cannot open " + p);
    }
    void bytes(void* p, std::size_t n) {
        in.read(static_cast<char*>(p), n);
        if (static_cast<std::size_t>(in.gcount()) != n)
            fail("bad-checkpoint", path + ": truncated");
    }
    std::uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        unsigned char b[8];
        bytes(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        if (n > (1u << 20)) fail("bad-checkpoint", path + ": absurd string length");
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    void f32_array(double* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<double>(f32());
    }
    void f64_array(double* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) p[i] = f64();
    }
};

} // namespace

void save_checkpoint(const std::string& path, const Scene& scene, const CheckpointExtra& extra,
                     const std::vector<AdamState>* optimizer) {
    Writer w(path);
    w.bytes(kMagic, 4);
    w.u32(kVersion);

    std::uint32_t flags = 0;
    if (optimizer) flags |= kFlagOptimizer;
    if (scene.settings.no_gamma) flags |= kFlagNoGamma;
    if (scene.settings.no_prim_sh) flags |= kFlagNoPrimSh;
    if (scene.settings.no_downweight) flags |= kFlagNoDownweight;
    w.u32(flags);

    const RenderSettings& rs = scene.settings;
    w.u32(static_cast<std::uint32_t>(rs.top_k));
    for (int c = 0; c < 3; ++c) w.f64(rs.background[c]);
    w.f64(rs.near_eps);
    w.f64(rs.alpha_max);
    w.f64(rs.min_transmittance);
    w.u32(static_cast<std::uint32_t>(rs.tile));
    w.f64(scene.extent);
    w.u64(extra.iteration);

    const HashGridConfig& gc = scene.field.grid.cfg;
    w.u32(static_cast<std::uint32_t>(gc.levels));
    w.u32(static_cast<std::uint32_t>(gc.log2_table));
    w.u32(static_cast<std::uint32_t>(gc.features));
    w.f64(gc.base_scale);
    w.f64(gc.growth);

    const TextureMlp& mlp = scene.field.mlp;
    w.u32(static_cast<std::uint32_t>(mlp.n_in));
    w.u32(static_cast<std::uint32_t>(mlp.n_hidden));
    w.u32(static_cast<std::uint32_t>(mlp.n_out));

    w.u32(static_cast<std::uint32_t>(extra.cameras.size()));
    for (const Camera& cam : extra.cameras) {
        w.str(cam.name);
        w.u32(static_cast<std::uint32_t>(cam.width));
        w.u32(static_cast<std::uint32_t>(cam.height));
        w.f64(cam.fx);
        w.f64(cam.fy);
        w.f64(cam.cx);
        w.f64(cam.cy);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) w.f64(cam.R.m[r][c]);
        for (int i = 0; i < 3; ++i) w.f64(cam.t[i]);
    }

    w.u64(scene.nexels.size());
    for (const Nexel& n : scene.nexels) w.f32_array(&n.mu.x, 3);
    for (const Nexel& n : scene.nexels) w.f32_array(&n.quat.x, 4);
    for (const Nexel& n : scene.nexels) w.f32_array(&n.log_scale.x, 2);
    for (const Nexel& n : scene.nexels) w.f32(static_cast<float>(n.opacity_raw));
    for (const Nexel& n : scene.nexels) w.f32_array(&n.gamma_raw.x, 2);
    for (const Nexel& n : scene.nexels) w.f32_array(n.sh.data(), kShValues);

    w.f32_array(scene.field.grid.table.data(), scene.field.grid.table.size());
    w.f32_array(mlp.w1.data(), mlp.w1.size());
    w.f32_array(mlp.w2.data(), mlp.w2.size());
    w.f32_array(mlp.w3.data(), mlp.w3.size());

    if (optimizer) {
        w.u32(static_cast<std::uint32_t>(optimizer->size()));
        for (const AdamState& st : *optimizer) {
            w.i64(st.step);
            w.u64(st.m.size());
            w.f64_array(st.m.data(), st.m.size());
            w.f64_array(st.v.data(), st.v.size());
        }
    }
    if (!w.out) fail("missing-file", "write failed for " + path);
}

Scene load_checkpoint(const std::string& path, CheckpointExtra* extra,
                      std::vector<AdamState>* optimizer) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) fail("bad-checkpoint", path + ": wrong magic");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        fail("bad-checkpoint", path + ": unsupported version " + std::to_string(version));
    const std::uint32_t flags = r.u32();

    Scene scene;
    RenderSettings& rs = scene.settings;
    rs.no_gamma = flags & kFlagNoGamma;
    rs.no_prim_sh = flags & kFlagNoPrimSh;
    rs.no_downweight = flags & kFlagNoDownweight;
    rs.top_k = static_cast<int>(r.u32());
    for (int c = 0; c < 3; ++c) rs.background[c] = r.f64();
    rs.near_eps = r.f64();
    rs.alpha_max = r.f64();
    rs.min_transmittance = r.f64();
    rs.tile = static_cast<int>(r.u32());
    scene.extent = r.f64();
    const std::uint64_t iteration = r.u64();

    HashGridConfig gc;
    gc.levels = static_cast<int>(r.u32());
    gc.log2_table = static_cast<int>(r.u32());
    gc.features = static_cast<int>(r.u32());
    gc.base_scale = r.f64();
    gc.growth = r.f64();
    if (gc.levels <= 0 || gc.levels > 64 || gc.log2_table <= 0 || gc.log2_table > 26 ||
        gc.features <= 0 || gc.features > 16)
        fail("bad-checkpoint", path + ": implausible grid shape");

    TextureMlp mlp;
    mlp.n_in = static_cast<int>(r.u32());
    mlp.n_hidden = static_cast<int>(r.u32());
    mlp.n_out = static_cast<int>(r.u32());
    if (mlp.n_in != gc.levels * gc.features || mlp.n_out != kShValues || mlp.n_hidden <= 0 ||
        mlp.n_hidden > 4096)
        fail("bad-checkpoint", path + ": implausible mlp shape");

    CheckpointExtra ex;
    ex.iteration = iteration;
    const std::uint32_t n_cams = r.u32();
    if (n_cams > (1u << 20)) fail("bad-checkpoint", path + ": absurd camera count");
    ex.cameras.resize(n_cams);
    for (Camera& cam : ex.cameras) {
        cam.name = r.str();
        cam.width = static_cast<int>(r.u32());
        cam.height = static_cast<int>(r.u32());
        cam.fx = r.f64();
        cam.fy = r.f64();
        cam.cx = r.f64();
        cam.cy = r.f64();
        for (int row = 0; row < 3; ++row)
            for (int c = 0; c < 3; ++c) cam.R.m[row][c] = r.f64();
        for (int i = 0; i < 3; ++i) cam.t[i] = r.f64();
    }

    const std::uint64_t n_prims = r.u64();
    if (n_prims > (1ull << 32)) fail("bad-checkpoint", path + ": absurd primitive count");
    scene.nexels.resize(n_prims);
    for (Nexel& n : scene.nexels) r.f32_array(&n.mu.x, 3);
    for (Nexel& n : scene.nexels) r.f32_array(&n.quat.x, 4);
    for (Nexel& n : scene.nexels) r.f32_array(&n.log_scale.x, 2);
    for (Nexel& n : scene.nexels) n.opacity_raw = static_cast<double>(r.f32());
    for (Nexel& n : scene.nexels) r.f32_array(&n.gamma_raw.x, 2);
    for (Nexel& n : scene.nexels) r.f32_array(n.sh.data(), kShValues);

    scene.field.grid.cfg = gc;
    scene.field.grid.table.resize(gc.param_count());
    r.f32_array(scene.field.grid.table.data(), scene.field.grid.table.size());
    scene.field.mlp = mlp;
    scene.field.mlp.allocate();
    r.f32_array(scene.field.mlp.w1.data(), scene.field.mlp.w1.size());
    r.f32_array(scene.field.mlp.w2.data(), scene.field.mlp.w2.size());
    r.f32_array(scene.field.mlp.w3.data(), scene.field.mlp.w3.size());

    if (flags & kFlagOptimizer) {
        std::vector<AdamState> opt(r.u32());
        for (AdamState& st : opt) {
            st.step = r.i64();
            const std::uint64_t n = r.u64();
            if (n > (1ull << 34)) fail("bad-checkpoint", path + ": absurd optimizer block");
            st.m.resize(n);
            st.v.resize(n);
            r.f64_array(st.m.data(), n);
            r.f64_array(st.v.data(), n);
        }
        if (optimizer) *optimizer = std::move(opt);
    } else if (optimizer) {
        optimizer->clear();
    }

    if (extra) *extra = std::move(ex);
    return scene;
}

} // namespace nexel
