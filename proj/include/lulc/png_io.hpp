#pragma once

#include <filesystem>

#include "lulc/data.hpp"

namespace lulc::data {

/// 8-bit RGB (c=3) or grayscale (c=1) PNG. Lossless; round trips bit-exactly.
void write_png(const std::filesystem::path& path, const ImageU8& img);
ImageU8 read_png(const std::filesystem::path& path);

}  // namespace lulc::data
