#pragma once

#include <string>
#include <vector>

#include "lulc/data.hpp"

namespace lulc::ingest {

/// Satellite bundle: band specs (paper tables), RGB selection order, default
/// tile size, sensor bit depth.
struct SatellitePreset {
    std::string name;
    std::vector<data::BandSpec> bands;
    std::vector<std::string> rgb_order;  // red, green, blue band ids
    int tile_size = 224;
    int bit_depth = 12;
};

const SatellitePreset& satellite_preset(const std::string& name);
std::vector<std::string> satellite_preset_names();

/// Load one single-channel integer raster (GeoTIFF/PNG, 8- or 16-bit) as a
/// band plane. Fails on multi-channel input.
std::vector<uint16_t> read_band_plane(const std::string& path, int& height, int& width);

/// Load a single-channel integer raster of CLC identifiers (8/16/32-bit).
data::IntGrid read_clc_raster(const std::string& path);

/// Load a 3-channel 8-bit image as three band planes in R,G,B order
/// (DeepGlobe-style inputs that need no quantization).
std::vector<std::vector<uint16_t>> read_rgb_planes(const std::string& path, int& height,
                                                   int& width);

}  // namespace lulc::ingest
