#include "fpa/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <fstream>
#include <stdexcept>

#include "fpa/data_io.hpp"

namespace fpa {

namespace {

std::string frame_name(int t, const char* kind, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "step_%03d_%s.%s", t, kind, ext);
    return buf;
}

void write_frame(const std::string& path, const RenderedFrame& f) {
    write_image(path, Tensor<float>({f.c, f.h, f.w}, std::vector<float>(f.pixels)));
}

}  // namespace

float frobenius_norm(const std::vector<float>& v) {
    double s = 0;
    for (float x : v) s += static_cast<double>(x) * x;
    return static_cast<float>(std::sqrt(s));
}

RenderedFrame render_frame(const std::vector<float>& values, int c, int h, int w,
                           float final_norm) {
    if (values.size() != static_cast<size_t>(c) * h * w)
        throw std::invalid_argument("render_frame: size does not match c*h*w");
    RenderedFrame out{c, h, w, {}};
    out.pixels.resize(values.size());
    float norm = final_norm > 0 ? final_norm : 1.f;
    float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
    for (size_t i = 0; i < values.size(); ++i) {
        out.pixels[i] = std::tanh(values[i] / norm);
        lo = std::min(lo, out.pixels[i]);
        hi = std::max(hi, out.pixels[i]);
    }
    if (hi > lo) {
        for (auto& p : out.pixels) p = 2.f * (p - lo) / (hi - lo) - 1.f;
    } else {
        for (auto& p : out.pixels) p = 0.f;
    }
    return out;
}

RenderedFrame render_signed_frame(const std::vector<float>& values, int h, int w,
                                  float final_norm) {
    if (values.size() != static_cast<size_t>(h) * w)
        throw std::invalid_argument("render_signed_frame: size does not match h*w");
    float norm = final_norm > 0 ? final_norm : 1.f;
    std::vector<float> t(values.size());
    float m = 0.f;
    for (size_t i = 0; i < values.size(); ++i) {
        t[i] = std::tanh(values[i] / norm);
        m = std::max(m, std::abs(t[i]));
    }
    RenderedFrame out{3, h, w, {}};
    out.pixels.resize(3u * values.size(), 1.f);
    for (size_t i = 0; i < t.size(); ++i) {
        float v = m > 0 ? t[i] / m : 0.f;  // [-1, 1], white at 0
        float r = v >= 0 ? 1.f : 1.f + v;  // fade red for negatives
        float g = 1.f - std::abs(v);
        float b = v <= 0 ? 1.f : 1.f - v;  // fade blue for positives
        out.pixels[i] = 2.f * r - 1.f;
        out.pixels[values.size() + i] = 2.f * g - 1.f;
        out.pixels[2 * values.size() + i] = 2.f * b - 1.f;
    }
    return out;
}

RenderedFrame assemble_grid(const std::vector<RenderedFrame>& frames, int rows, int cols) {
    if (frames.empty() || static_cast<int>(frames.size()) != rows * cols)
        throw std::invalid_argument("assemble_grid: need rows*cols frames");
    int c = frames[0].c, h = frames[0].h, w = frames[0].w;
    RenderedFrame grid{c, rows * h, cols * w, {}};
    grid.pixels.assign(static_cast<size_t>(c) * grid.h * grid.w, 0.f);
    for (int r = 0; r < rows; ++r) {
        for (int t = 0; t < cols; ++t) {
            const RenderedFrame& f = frames[r * cols + t];
            if (f.c != c || f.h != h || f.w != w)
                throw std::invalid_argument("assemble_grid: mixed frame shapes");
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        grid.pixels[(static_cast<size_t>(ch) * grid.h + r * h + y) * grid.w +
                                    t * w + x] =
                            f.pixels[(static_cast<size_t>(ch) * h + y) * w + x];
        }
    }
    return grid;
}

void render_trace(const PaintTrace<float>& trace, const std::string& out_dir, bool raw) {
    if (trace.steps.empty()) throw std::invalid_argument("render_trace: empty trace");
    std::filesystem::create_directories(out_dir);
    float norm = frobenius_norm(trace.final_pre_tanh);
    std::vector<RenderedFrame> updates, cumulatives;
    for (size_t t = 0; t < trace.steps.size(); ++t) {
        const auto& s = trace.steps[t];
        RenderedFrame up = render_frame(s.update, trace.c, trace.h, trace.w, norm);
        RenderedFrame cu = render_frame(s.cumulative, trace.c, trace.h, trace.w, norm);
        write_frame(out_dir + "/" + frame_name(static_cast<int>(t), "update", "png"), up);
        write_frame(out_dir + "/" + frame_name(static_cast<int>(t), "cumulative", "png"), cu);
        if (raw)
            write_f32_file(out_dir + "/" + frame_name(static_cast<int>(t), "update", "f32"),
                           s.update);
        updates.push_back(std::move(up));
        cumulatives.push_back(std::move(cu));
    }
    if (raw) write_f32_file(out_dir + "/final_pre_tanh.f32", trace.final_pre_tanh);
    std::vector<RenderedFrame> all = updates;
    all.insert(all.end(), cumulatives.begin(), cumulatives.end());
    write_frame(out_dir + "/trace_grid.png",
                assemble_grid(all, 2, static_cast<int>(trace.steps.size())));
}

void render_fastweights(const FastWeightTrace<float>& trace, int layer, int head,
                        const std::string& out_dir) {
    if (trace.steps.empty()) throw std::invalid_argument("render_fastweights: empty trace");
    if (layer < 0 || layer >= trace.layers || head < 0 || head >= trace.heads)
        throw std::invalid_argument("render_fastweights: layer/head out of range");
    std::filesystem::create_directories(out_dir);
    int idx = layer * trace.heads + head;
    float norm = frobenius_norm(trace.steps.back()[idx].cumulative);
    std::vector<RenderedFrame> updates, cumulatives;
    for (size_t t = 0; t < trace.steps.size(); ++t) {
        const auto& fr = trace.steps[t][idx];
        RenderedFrame up = render_signed_frame(fr.update, trace.d_out, trace.d_key, norm);
        RenderedFrame cu = render_signed_frame(fr.cumulative, trace.d_out, trace.d_key, norm);
        write_frame(out_dir + "/" + frame_name(static_cast<int>(t), "update", "png"), up);
        write_frame(out_dir + "/" + frame_name(static_cast<int>(t), "cumulative", "png"), cu);
        updates.push_back(std::move(up));
        cumulatives.push_back(std::move(cu));
    }
    std::vector<RenderedFrame> all = updates;
    all.insert(all.end(), cumulatives.begin(), cumulatives.end());
    write_frame(out_dir + "/trace_grid.png",
                assemble_grid(all, 2, static_cast<int>(trace.steps.size())));
}

void write_f32_file(const std::string& path, const std::vector<float>& v) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    for (float x : v) {
        uint32_t bits;
        std::memcpy(&bits, &x, 4);
        unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                              static_cast<unsigned char>((bits >> 8) & 0xff),
                              static_cast<unsigned char>((bits >> 16) & 0xff),
                              static_cast<unsigned char>((bits >> 24) & 0xff)};
        f.write(reinterpret_cast<char*>(b), 4);
    }
}

std::vector<float> read_f32_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() % 4 != 0) throw std::runtime_error("truncated f32 file " + path);
    std::vector<float> out(bytes.size() / 4);
    for (size_t i = 0; i < out.size(); ++i) {
        uint32_t bits = static_cast<uint32_t>(bytes[4 * i]) |
                        (static_cast<uint32_t>(bytes[4 * i + 1]) << 8) |
                        (static_cast<uint32_t>(bytes[4 * i + 2]) << 16) |
                        (static_cast<uint32_t>(bytes[4 * i + 3]) << 24);
        std::memcpy(&out[i], &bits, 4);
    }
    return out;
}

}  // namespace fpa
