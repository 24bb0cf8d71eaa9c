#pragma once

#include <string>

#include "hexburst/tensor.hpp"

namespace hexburst {

// Loads a PNG or binary PPM (P6), 8 or 16 bit, as linear RGB in [0,1] with
// shape (3,H,W). Inputs are treated as sRGB-encoded.
Tensor load_image_linear(const std::string& path);

// Writes linear RGB (3,H,W) as 16-bit PNG, sRGB-encoded and clamped to [0,1].
void save_png16(const std::string& path, const Tensor& rgb_linear);

// Writes linear RGB (3,H,W) as binary PPM, sRGB-encoded. bits is 8 or 16.
void save_ppm(const std::string& path, const Tensor& rgb_linear, int bits = 8);

double srgb_decode(double encoded);
double srgb_encode(double linear);

}  // namespace hexburst
