#pragma once

#include <string>

#include "ppap/tensor.hpp"

namespace ppap {

/// Binary PPM (P6) with 8-bit channels. Images are (3, H, W) tensors with
/// values in [0, 1]; writes clamp and round deterministically.
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

// drawing helpers (all operate in place on a (3, H, W) tensor)
void draw_line(Tensor& img, double x0, double y0, double x1, double y1, const double rgb[3],
               double thickness);
void splat_gaussian(Tensor& img, double cx, double cy, double sigma, const double rgb[3]);
/// map a (H, W) scalar field onto a color image through a fixed heat ramp
Tensor colorize_heatmap(const Tensor& field2d);

}  // namespace ppap
