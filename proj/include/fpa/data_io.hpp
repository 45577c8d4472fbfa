#pragma once

// Image encode/decode (PNG 8-bit, PPM P6 fallback) and dataset handles over
// image folders or deterministic synthetic generators. Pixel mapping:
// u8 -> float x = v/127.5 - 1; float -> u8 v = clamp(round_half_up((x+1)*127.5)).

#include <cstdint>
#include <string>
#include <vector>

#include "fpa/tensor.hpp"

namespace fpa {

uint8_t quantize_pixel(float x);
float dequantize_pixel(uint8_t v);

// img is [C,H,W] with C 1 or 3, values in [-1,1]. Format chosen by extension
// (.png or .ppm; PPM is RGB only).
void write_image(const std::string& path, const Tensor<float>& img);
Tensor<float> read_image(const std::string& path);

enum class SynthKind { Blobs, Stripes, Squares };
SynthKind synth_from_name(const std::string& name);
std::string synth_name(SynthKind k);
bool is_synth_name(const std::string& name);

Tensor<float> synth_image(SynthKind kind, int resolution, uint64_t seed, uint64_t index);

// Parameters used for a blobs image (exposed so distribution tests can check
// the centre statistics directly).
struct BlobSpec {
    float cx = 0, cy = 0, sx = 1, sy = 1;
    float col[3] = {0, 0, 0};
};
std::vector<BlobSpec> blob_specs(int resolution, uint64_t seed, uint64_t index);

class DatasetHandle {
public:
    static DatasetHandle from_folder(const std::string& path, int resolution);
    static DatasetHandle synthetic(SynthKind kind, int n, int resolution, uint64_t seed);

    size_t size() const { return synthetic_ ? static_cast<size_t>(n_) : images_.size(); }
    int resolution() const { return res_; }
    int channels() const { return channels_; }
    Tensor<float> image(size_t idx) const;

    // Uniform shuffle of [0, size); deterministic per (seed, epoch).
    std::vector<size_t> epoch_order(uint64_t seed, int epoch) const;

private:
    std::vector<Tensor<float>> images_;
    bool synthetic_ = false;
    SynthKind kind_ = SynthKind::Blobs;
    int n_ = 0;
    int res_ = 0;
    int channels_ = 3;
    uint64_t seed_ = 0;
};

// Resolve a dataset spec string: a synthetic kind name or an image folder path.
DatasetHandle open_dataset(const std::string& spec, int resolution, int synth_n, uint64_t seed);

}  // namespace fpa
