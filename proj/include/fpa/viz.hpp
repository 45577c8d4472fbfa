#pragma once

// Trace rendering: every frame is divided by the Frobenius norm of the final
// pre-activation image, passed through tanh, then min-max scaled per frame.
// Painting traces render as image frames; fast weight matrices render through
// a signed blue-white-red map (white at zero, scaled by the frame's max
// magnitude so the palette stays symmetric).

#include <string>
#include <vector>

#include "fpa/deltanet.hpp"
#include "fpa/painter.hpp"
#include "fpa/tensor.hpp"

namespace fpa {

// Pixels in [-1, 1], ready for write_image.
struct RenderedFrame {
    int c = 0, h = 0, w = 0;
    std::vector<float> pixels;
};

float frobenius_norm(const std::vector<float>& v);

// Shared pipeline for image frames: divide by final_norm, tanh, min-max to
// [-1, 1] (constant frames map to 0, mid-gray).
RenderedFrame render_frame(const std::vector<float>& values, int c, int h, int w, float final_norm);

// Signed map for a single-channel matrix: after normalisation and tanh,
// scale by max |v| and colour negative blue, positive red, zero white.
RenderedFrame render_signed_frame(const std::vector<float>& values, int h, int w, float final_norm);

// 2 rows (update, cumulative) x T columns contact sheet; frame (r, t)
// occupies pixel rows [r*h, (r+1)*h) and cols [t*w, (t+1)*w).
RenderedFrame assemble_grid(const std::vector<RenderedFrame>& frames, int rows, int cols);

// Writes step_{t:03}_update.png / step_{t:03}_cumulative.png plus
// trace_grid.png. With raw=true additionally dumps the pre-normalisation
// update frames and the final pre-activation image as little-endian f32
// files (step_{t:03}_update.f32, final_pre_tanh.f32).
void render_trace(const PaintTrace<float>& trace, const std::string& out_dir, bool raw = false);

// Same layout for one (layer, head) of a fast-weight evolution.
void render_fastweights(const FastWeightTrace<float>& trace, int layer, int head,
                        const std::string& out_dir);

void write_f32_file(const std::string& path, const std::vector<float>& v);
std::vector<float> read_f32_file(const std::string& path);

}  // namespace fpa
