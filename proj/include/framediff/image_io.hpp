#pragma once

// Lossless PNG stills (via zlib) and animated GIF89a clips (LZW, fixed
// 256-color palette) for inspecting generated videos.

#include <string>

#include "framediff/tensor.hpp"

namespace fd {

// [3,H,W] floats in [0,1] -> 8-bit RGB PNG
void write_png(const std::string& path, const Tensor<float>& image);

// [F,3,H,W] -> one PNG laying frames out on a grid with `cols` columns
void write_png_grid(const std::string& path, const Tensor<float>& video, int cols);

// [F,3,H,W] -> looping animated GIF, delay in hundredths of a second
void write_gif(const std::string& path, const Tensor<float>& video, int delay_cs = 12);

}  // namespace fd
