#pragma once

#include "nexel/adam.hpp"
#include "nexel/camera.hpp"
#include "nexel/scene.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nexel {

// Sidecar data stored next to the scene: the training cameras (so render/eval
// can resolve view indices) and the iteration counter.
struct CheckpointExtra {
    std::vector<Camera> cameras;
    std::uint64_t iteration = 0;
};

// Binary, little-endian on every platform. Learnable arrays are stored as
// 32-bit floats; config and cameras as 64-bit. Optimizer state (one AdamState
// per parameter group, order fixed by the trainer) is an optional section.
void save_checkpoint(const std::string& path, const Scene& scene, const CheckpointExtra& extra,
                     const std::vector<AdamState>* optimizer = nullptr);

Scene load_checkpoint(const std::string& path, CheckpointExtra* extra = nullptr,
                      std::vector<AdamState>* optimizer = nullptr);

} // namespace nexel
