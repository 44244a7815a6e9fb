#pragma once

#include <filesystem>

#include "semtrack/regions.hpp"

namespace semtrack {

// Binary PPM (P6, maxval <= 255).
FrameImage read_ppm(const std::filesystem::path& path);
void write_ppm(const FrameImage& image, const std::filesystem::path& path);

// PNG of any bit depth / colour type, converted to 8-bit RGB.
FrameImage read_png(const std::filesystem::path& path);

// Dispatches on the file extension (.ppm or .png).
FrameImage read_image(const std::filesystem::path& path);

}  // namespace semtrack
