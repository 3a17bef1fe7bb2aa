#pragma once

#include "nexel/camera.hpp"
#include "nexel/density.hpp"
#include "nexel/image.hpp"

#include <string>
#include <vector>

namespace nexel {

// On-disk dataset layout:
//   <root>/cameras.json   array of views: image, width, height, fx, fy, cx, cy,
//                         world_to_camera (16 numbers, row-major)
//   <root>/images/<name>.png
//   <root>/points.ply     ascii, x y z [red green blue]
//   <root>/split.json     {"train": [view names], "test": [view names]}
struct Bundle {
    std::string root;
    std::vector<Camera> cameras; // camera.name is the view name
    std::vector<Image> images;   // aligned with cameras
    std::vector<int> train_views;
    std::vector<int> test_views;
    PointCloud cloud;
};

Bundle load_bundle(const std::string& root);

void save_bundle(const std::string& root, const std::vector<Camera>& cameras,
                 const std::vector<Image>& images, const PointCloud& cloud,
                 const std::vector<int>& train_views, const std::vector<int>& test_views);

void save_ply(const std::string& path, const PointCloud& cloud);
PointCloud load_ply(const std::string& path);

} // namespace nexel
