#pragma once

#include "phaseseg/core/raster.hpp"

#include <filesystem>
#include <utility>

namespace phaseseg {

/// Reads a PNG or JPEG as 8-bit RGB (grayscale inputs are expanded).
Image read_image(const std::filesystem::path& path);

/// Writes an RGB or grayscale raster; the format follows the extension.
void write_image(const std::filesystem::path& path, const Image& image);

/// Label maps are 8-bit single-channel PNGs whose pixel value is the class id.
LabelMap read_label_map(const std::filesystem::path& path);
void write_label_map(const std::filesystem::path& path, const LabelMap& labels);

/// Width and height from a PNG IHDR chunk without decoding pixel data.
std::pair<int, int> png_dimensions(const std::filesystem::path& path);

}  // namespace phaseseg
