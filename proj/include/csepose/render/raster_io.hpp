#pragma once

#include <string>

#include "csepose/render/raster.hpp"

namespace csepose::render {

// Binary PPM (P6, maxval 255) for RGB rasters in [0,1]; [h,w,3].
void write_ppm(const diff::NdArray& rgb, const std::string& path);
diff::NdArray read_ppm(const std::string& path);

// Binary PGM (P5, maxval 255) for single-channel rasters in [0,1]; [h,w].
void write_pgm(const diff::NdArray& gray, const std::string& path);
diff::NdArray read_pgm(const std::string& path);

// Depth blob: 8-byte header (height, width as little-endian uint32) followed
// by row-major little-endian float32 values.
void write_depth(const diff::NdArray& depth, const std::string& path);
diff::NdArray read_depth(const std::string& path);

}  // namespace csepose::render
