#include "nexel/bundle.hpp"

#include "nexel/error.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace nexel {

namespace {

json parse_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail("missing-file", "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail("bad-json", path.filename().string() + ": " + e.what());
    }
}

Camera camera_from_json(const json& j) {
    Camera cam;
    try {
        const std::string image = j.at("image").get<std::string>();
        cam.name = fs::path(image).stem().string();
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
        const auto& m = j.at("world_to_camera");
        if (!m.is_array() || m.size() != 16)
            fail("bad-json", "world_to_camera must hold 16 numbers");
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) cam.R.m[r][c] = m[4 * r + c].get<double>();
            cam.t[r] = m[4 * r + 3].get<double>();
        }
    } catch (const json::exception& e) {
        fail("bad-json", std::string("camera entry: ") + e.what());
    }
    validate_camera(cam);
    return cam;
}

std::string image_name(const json& j) { return j.at("image").get<std::string>(); }

} // namespace

PointCloud load_ply(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("missing-file", "cannot open " + path);

    std::string line;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0)
        fail("bad-ply", path + ": missing ply magic");

    long vertex_count = -1;
    bool in_vertex = false;
    std::vector<std::string> props;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "end_header") break;
        if (tok == "comment") continue;
        if (tok == "format") {
            std::string kind;
            ls >> kind;
            if (kind != "ascii") fail("bad-ply", path + ": only ascii supported");
        } else if (tok == "element") {
            std::string name;
            ls >> name;
            in_vertex = name == "vertex";
            if (in_vertex) ls >> vertex_count;
        } else if (tok == "property" && in_vertex) {
            std::string type, name;
            ls >> type >> name;
            props.push_back(name);
        }
    }
    if (vertex_count < 2) fail("bad-ply", path + ": needs at least 2 vertices");

    int col_x = -1, col_y = -1, col_z = -1, col_r = -1, col_g = -1, col_b = -1;
    for (std::size_t i = 0; i < props.size(); ++i) {
        if (props[i] == "x") col_x = static_cast<int>(i);
        if (props[i] == "y") col_y = static_cast<int>(i);
        if (props[i] == "z") col_z = static_cast<int>(i);
        if (props[i] == "red") col_r = static_cast<int>(i);
        if (props[i] == "green") col_g = static_cast<int>(i);
        if (props[i] == "blue") col_b = static_cast<int>(i);
    }
    if (col_x < 0 || col_y < 0 || col_z < 0) fail("bad-ply", path + ": missing x/y/z properties");
    const bool has_color = col_r >= 0 && col_g >= 0 && col_b >= 0;

    PointCloud cloud;
    cloud.xyz.reserve(vertex_count);
    if (has_color) cloud.rgb.reserve(vertex_count);
    std::vector<double> row(props.size());
    for (long v = 0; v < vertex_count; ++v) {
        if (!std::getline(in, line)) fail("bad-ply", path + ": truncated vertex list");
        std::istringstream ls(line);
        for (double& val : row)
            if (!(ls >> val)) fail("bad-ply", path + ": malformed vertex line");
        cloud.xyz.push_back({row[col_x], row[col_y], row[col_z]});
        if (has_color)
            cloud.rgb.push_back({row[col_r] / 255.0, row[col_g] / 255.0, row[col_b] / 255.0});
    }
    return cloud;
}

void save_ply(const std::string& path, const PointCloud& cloud) {
    std::ofstream out(path);
    if (!out) fail("missing-file", "cannot write " + path);
    const bool has_color = cloud.rgb.size() == cloud.xyz.size();
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << cloud.xyz.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    if (has_color) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "end_header\n";
    out.precision(17);
    for (std::size_t i = 0; i < cloud.xyz.size(); ++i) {
        out << cloud.xyz[i].x << " " << cloud.xyz[i].y << " " << cloud.xyz[i].z;
        if (has_color)
            for (int c = 0; c < 3; ++c)
                out << " " << std::lround(clamp01(cloud.rgb[i][c]) * 255.0);
        out << "\n";
    }
}

Bundle load_bundle(const std::string& root) {
    Bundle b;
    b.root = root;
    const fs::path dir(root);
    if (!fs::is_directory(dir)) fail("missing-file", root + " is not a directory");

    const json cams = parse_json_file(dir / "cameras.json");
    if (!cams.is_array() || cams.empty()) fail("bad-json", "cameras.json must be a non-empty array");

    std::unordered_map<std::string, int> by_name;
    for (const auto& entry : cams) {
        Camera cam = camera_from_json(entry);
        const fs::path img_path = dir / "images" / image_name(entry);
        if (!fs::exists(img_path))
            fail("missing-file", "view " + cam.name + " references missing image " +
                                     img_path.string());
        Image img = load_png(img_path.string());
        if (img.width != cam.width || img.height != cam.height)
            fail("dim-mismatch", "view " + cam.name + " image is " + std::to_string(img.width) +
                                     "x" + std::to_string(img.height) + ", camera expects " +
                                     std::to_string(cam.width) + "x" + std::to_string(cam.height));
        by_name[cam.name] = static_cast<int>(b.cameras.size());
        b.cameras.push_back(std::move(cam));
        b.images.push_back(std::move(img));
    }

    const json split = parse_json_file(dir / "split.json");
    auto resolve = [&](const char* key, std::vector<int>& out) {
        if (!split.contains(key)) return;
        for (const auto& name : split.at(key)) {
            const std::string n = name.get<std::string>();
            auto it = by_name.find(n);
            if (it == by_name.end())
                fail("bad-json", "split.json names unknown view " + n);
            out.push_back(it->second);
        }
    };
    resolve("train", b.train_views);
    resolve("test", b.test_views);
    if (b.train_views.empty()) fail("bad-json", "split.json has no train views");

    b.cloud = load_ply((dir / "points.ply").string());
    return b;
}

void save_bundle(const std::string& root, const std::vector<Camera>& cameras,
                 const std::vector<Image>& images, const PointCloud& cloud,
                 const std::vector<int>& train_views, const std::vector<int>& test_views) {
    if (cameras.size() != images.size())
        fail("bad-settings", "camera and image counts differ");
    const fs::path dir(root);
    fs::create_directories(dir / "images");

    ordered_json cams = ordered_json::array();
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        const Camera& cam = cameras[i];
        const std::string file = cam.name + ".png";
        save_png((dir / "images" / file).string(), images[i]);

        ordered_json j;
        j["image"] = file;
        j["width"] = cam.width;
        j["height"] = cam.height;
        j["fx"] = cam.fx;
        j["fy"] = cam.fy;
        j["cx"] = cam.cx;
        j["cy"] = cam.cy;
        ordered_json m = ordered_json::array();
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) m.push_back(cam.R.m[r][c]);
            m.push_back(cam.t[r]);
        }
        for (double v : {0.0, 0.0, 0.0, 1.0}) m.push_back(v);
        j["world_to_camera"] = m;
        cams.push_back(j);
    }
    std::ofstream(dir / "cameras.json") << cams.dump(2) << "\n";

    ordered_json split;
    split["train"] = ordered_json::array();
    split["test"] = ordered_json::array();
    for (int i : train_views) split["train"].push_back(cameras[i].name);
    for (int i : test_views) split["test"].push_back(cameras[i].name);
    std::ofstream(dir / "split.json") << split.dump(2) << "\n";

    save_ply((dir / "points.ply").string(), cloud);
}

} // namespace nexel
