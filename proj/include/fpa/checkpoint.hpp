#pragma once

// Checkpoint container. Binary layout:
//   magic "FPA1"
//   u32 LE  config blob length, then that many UTF-8 bytes (JSON)
//   repeated tensor records until EOF:
//     u16 LE name length, name bytes
//     u8 dtype tag (0 = f32)
//     u8 ndim, then ndim u32 LE dims
//     payload, little-endian f32
// Save -> load -> save is byte-identical (record order is preserved).

#include <string>
#include <utility>
#include <vector>

#include "fpa/tensor.hpp"

namespace fpa {

struct CheckpointData {
    std::string config_json;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;

    const Tensor<float>* find(const std::string& name) const {
        for (auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

}  // namespace fpa
