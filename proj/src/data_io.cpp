#include "fpa/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <stdexcept>

#include <png.h>

namespace fpa {

uint8_t quantize_pixel(float x) {
    // half-up rounding at the midpoints so the round trip is reproducible
    float v = std::floor((x + 1.0f) * 127.5f + 0.5f);
    return static_cast<uint8_t>(std::clamp(v, 0.0f, 255.0f));
}

float dequantize_pixel(uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

namespace {

void check_image_shape(const Tensor<float>& img) {
    if (img.ndim() != 3 || (img.dim(0) != 1 && img.dim(0) != 3))
        throw std::invalid_argument("write_image: expected [1|3,H,W], got " + shape_str(img.shape()));
}

std::vector<uint8_t> to_bytes_interleaved(const Tensor<float>& img) {
    int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    std::vector<uint8_t> bytes(static_cast<size_t>(c) * h * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int i = 0; i < c; ++i)
                bytes[(static_cast<size_t>(y) * w + x) * c + i] =
                    quantize_pixel(img.data()[(static_cast<size_t>(i) * h + y) * w + x]);
    return bytes;
}

Tensor<float> from_bytes_interleaved(const std::vector<uint8_t>& bytes, int c, int h, int w) {
    Tensor<float> img({c, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int i = 0; i < c; ++i)
                img.mutable_data()[(static_cast<size_t>(i) * h + y) * w + x] =
                    dequantize_pixel(bytes[(static_cast<size_t>(y) * w + x) * c + i]);
    return img;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::string& path, const Tensor<float>& img) {
    int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("write_image: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_image: libpng failure for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, w, h, 8, c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    auto bytes = to_bytes_interleaved(img);
    for (int y = 0; y < h; ++y) png_write_row(png, bytes.data() + static_cast<size_t>(y) * w * c);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor<float> read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("read_image: cannot open " + path);
    uint8_t header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw std::runtime_error("read_image: not a PNG file: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_image: libpng failure for " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    int w = static_cast<int>(png_get_image_width(png, info));
    int h = static_cast<int>(png_get_image_height(png, info));
    int c = static_cast<int>(png_get_channels(png, info));
    if (c != 1 && c != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_image: unsupported channel count in " + path);
    }
    std::vector<uint8_t> bytes(static_cast<size_t>(h) * w * c);
    for (int y = 0; y < h; ++y) png_read_row(png, bytes.data() + static_cast<size_t>(y) * w * c, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return from_bytes_interleaved(bytes, c, h, w);
}

void write_ppm(const std::string& path, const Tensor<float>& img) {
    if (img.dim(0) != 3) throw std::invalid_argument("write_image: PPM P6 requires 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_image: cannot open " + path);
    out << "P6\n" << img.dim(2) << " " << img.dim(1) << "\n255\n";
    auto bytes = to_bytes_interleaved(img);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor<float> read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_image: cannot open " + path);
    std::string magic;
    int w, h, maxval;
    in >> magic >> w >> h >> maxval;
    if (magic != "P6" || maxval != 255 || w < 1 || h < 1)
        throw std::runtime_error("read_image: unsupported PPM header in " + path);
    in.get();  // single whitespace after header
    std::vector<uint8_t> bytes(static_cast<size_t>(h) * w * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw std::runtime_error("read_image: truncated PPM " + path);
    return from_bytes_interleaved(bytes, 3, h, w);
}

bool has_suffix(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

uint64_t mix_seed(uint64_t seed, uint64_t index) {
    // splitmix64 step over seed ^ index
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

void write_image(const std::string& path, const Tensor<float>& img) {
    check_image_shape(img);
    if (has_suffix(path, ".ppm")) write_ppm(path, img);
    else if (has_suffix(path, ".png")) write_png(path, img);
    else throw std::invalid_argument("write_image: unsupported extension in " + path);
}

Tensor<float> read_image(const std::string& path) {
    if (has_suffix(path, ".ppm")) return read_ppm(path);
    if (has_suffix(path, ".png")) return read_png(path);
    throw std::invalid_argument("read_image: unsupported extension in " + path);
}

SynthKind synth_from_name(const std::string& name) {
    if (name == "blobs") return SynthKind::Blobs;
    if (name == "stripes") return SynthKind::Stripes;
    if (name == "squares") return SynthKind::Squares;
    throw std::invalid_argument("unknown synthetic dataset '" + name + "' (expected blobs|stripes|squares)");
}

std::string synth_name(SynthKind k) {
    switch (k) {
        case SynthKind::Blobs: return "blobs";
        case SynthKind::Stripes: return "stripes";
        case SynthKind::Squares: return "squares";
    }
    throw std::logic_error("synth_name: bad enum");
}

bool is_synth_name(const std::string& name) {
    return name == "blobs" || name == "stripes" || name == "squares";
}

std::vector<BlobSpec> blob_specs(int res, uint64_t seed, uint64_t index) {
    std::mt19937_64 rng(mix_seed(seed, index));
    std::uniform_real_distribution<float> u01(0.f, 1.f);
    int blobs = 1 + static_cast<int>(u01(rng) * 2.0f);  // 1 or 2
    std::vector<BlobSpec> out(blobs);
    for (auto& b : out) {
        // centres uniform over the interior [0.2, 0.8] of the frame
        b.cx = (0.2f + 0.6f * u01(rng)) * res;
        b.cy = (0.2f + 0.6f * u01(rng)) * res;
        b.sx = (0.08f + 0.12f * u01(rng)) * res;
        b.sy = (0.08f + 0.12f * u01(rng)) * res;
        for (float& c : b.col) c = 0.5f + 1.5f * u01(rng);
    }
    return out;
}

Tensor<float> synth_image(SynthKind kind, int res, uint64_t seed, uint64_t index) {
    std::mt19937_64 rng(mix_seed(seed, index));
    std::uniform_real_distribution<float> u01(0.f, 1.f);
    Tensor<float> img({3, res, res});
    auto px = [&](int c, int y, int x) -> float& {
        return img.mutable_data()[(static_cast<size_t>(c) * res + y) * res + x];
    };
    if (kind == SynthKind::Blobs) {
        for (size_t i = 0; i < img.numel(); ++i) img.mutable_data()[i] = -1.f;
        for (const BlobSpec& b : blob_specs(res, seed, index)) {
            for (int y = 0; y < res; ++y)
                for (int x = 0; x < res; ++x) {
                    float dx = (x - b.cx) / b.sx, dy = (y - b.cy) / b.sy;
                    float g = std::exp(-0.5f * (dx * dx + dy * dy));
                    for (int c = 0; c < 3; ++c) px(c, y, x) += b.col[c] * g;
                }
        }
    } else if (kind == SynthKind::Stripes) {
        float fx = 0.5f + 2.5f * u01(rng);
        float fy = 0.5f + 2.5f * u01(rng);
        float phase[3] = {6.2831853f * u01(rng), 6.2831853f * u01(rng), 6.2831853f * u01(rng)};
        float amp[3] = {0.4f + 0.6f * u01(rng), 0.4f + 0.6f * u01(rng), 0.4f + 0.6f * u01(rng)};
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                float arg = 6.2831853f * (fx * x + fy * y) / res;
                for (int c = 0; c < 3; ++c) px(c, y, x) = amp[c] * std::sin(arg + phase[c]);
            }
    } else {
        // gradient background
        float g0[3], g1[3];
        for (int c = 0; c < 3; ++c) {
            g0[c] = -1.f + 2.f * u01(rng);
            g1[c] = -1.f + 2.f * u01(rng);
        }
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                float t = static_cast<float>(x + y) / (2.f * (res - 1));
                for (int c = 0; c < 3; ++c) px(c, y, x) = g0[c] + (g1[c] - g0[c]) * t;
            }
        int x0 = static_cast<int>(u01(rng) * res * 0.6f);
        int y0 = static_cast<int>(u01(rng) * res * 0.6f);
        int side = std::max(2, static_cast<int>(res * (0.2f + 0.3f * u01(rng))));
        float col[3] = {-1.f + 2.f * u01(rng), -1.f + 2.f * u01(rng), -1.f + 2.f * u01(rng)};
        for (int y = y0; y < std::min(res, y0 + side); ++y)
            for (int x = x0; x < std::min(res, x0 + side); ++x)
                for (int c = 0; c < 3; ++c) px(c, y, x) = col[c];
    }
    for (auto& v : img.mutable_data()) v = std::clamp(v, -1.f, 1.f);
    return img;
}

DatasetHandle DatasetHandle::from_folder(const std::string& path, int resolution) {
    DatasetHandle h;
    h.res_ = resolution;
    namespace fs = std::filesystem;
    if (!fs::is_directory(path)) throw std::runtime_error("dataset folder not found: " + path);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(path))
        if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        Tensor<float> img;
        try {
            img = read_image(f);
        } catch (const std::exception& ex) {
            std::cerr << "warning: skipping undecodable file " << f << " (" << ex.what() << ")\n";
            continue;
        }
        if (img.dim(1) != resolution || img.dim(2) != resolution)
            throw std::runtime_error("dataset image " + f + " has resolution " +
                                     std::to_string(img.dim(2)) + "x" + std::to_string(img.dim(1)) +
                                     ", expected " + std::to_string(resolution));
        if (!h.images_.empty() && img.dim(0) != h.channels_)
            throw std::runtime_error("dataset image " + f + " has inconsistent channel count");
        h.channels_ = img.dim(0);
        h.images_.push_back(std::move(img));
    }
    if (h.images_.empty()) throw std::runtime_error("dataset folder contains no decodable images: " + path);
    return h;
}

DatasetHandle DatasetHandle::synthetic(SynthKind kind, int n, int resolution, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("synthetic dataset size must be positive");
    DatasetHandle h;
    h.synthetic_ = true;
    h.kind_ = kind;
    h.n_ = n;
    h.res_ = resolution;
    h.seed_ = seed;
    h.channels_ = 3;
    return h;
}

Tensor<float> DatasetHandle::image(size_t idx) const {
    if (idx >= size()) throw std::out_of_range("dataset index out of range");
    if (synthetic_) return synth_image(kind_, res_, seed_, idx);
    return images_[idx];
}

std::vector<size_t> DatasetHandle::epoch_order(uint64_t seed, int epoch) const {
    std::vector<size_t> order(size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(mix_seed(seed, 0x5eed0000ULL + static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

DatasetHandle open_dataset(const std::string& spec, int resolution, int synth_n, uint64_t seed) {
    if (is_synth_name(spec))
        return DatasetHandle::synthetic(synth_from_name(spec), synth_n, resolution, seed);
    return DatasetHandle::from_folder(spec, resolution);
}

}  // namespace fpa
