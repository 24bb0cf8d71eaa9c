#pragma once

#include <string>

#include "hexburst/tensor.hpp"

namespace hexburst {

// "FTR1" float raster: magic, u32 LE rank, rank x u32 LE dims, f32 LE
// row-major payload. The on-disk payload is always f32.

void write_ftr(const std::string& path, const Tensor& t);
Tensor read_ftr(const std::string& path);

// Writes via a temp file in the same directory, then renames.
void atomic_write_bytes(const std::string& path, const void* data, size_t size);
void atomic_write_text(const std::string& path, const std::string& text);

}  // namespace hexburst
