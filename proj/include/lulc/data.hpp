#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lulc/common.hpp"

namespace lulc::data {

struct BandSpec {
    std::string band_id;
    double central_wavelength_nm = 0.0;
    double bandwidth_nm = 0.0;
    double resolution_m = 0.0;

    void validate() const {
        LULC_CHECK_T(central_wavelength_nm > 0 && bandwidth_nm > 0 && resolution_m > 0, DataError,
                     "band " << band_id << ": wavelength/bandwidth/resolution must be positive");
    }
};

/// Co-registered multiband raster with integer samples (planar band storage).
struct RasterScene {
    int height = 0, width = 0;
    int bit_depth = 12;
    std::vector<BandSpec> bands;
    std::vector<std::vector<uint16_t>> planes;  // one h*w plane per band
    double pixel_size_m = 0.0;
    std::string origin_id;

    int band_count() const { return static_cast<int>(bands.size()); }
    int band_index(const std::string& id) const;

    uint16_t at(int band, int y, int x) const {
        return planes[band][static_cast<size_t>(y) * width + x];
    }
    void validate() const;
};

struct LabelClass {
    int code = 0;
    std::string name;
    std::array<uint8_t, 3> color{0, 0, 0};
    std::set<int> clc_source_codes;
};

/// The 7-class LULC taxonomy with its CLC source-code mapping.
struct LabelSchema {
    std::vector<LabelClass> classes;

    static constexpr int kNumClasses = 7;
    static LabelSchema clc_default();

    void validate() const;
    /// -1 when the identifier is not claimed by any class
    int map_clc(int clc_code) const;
    const LabelClass& cls(int code) const { return classes[static_cast<size_t>(code)]; }
};

/// Interleaved 8-bit image, HWC order.
struct ImageU8 {
    int h = 0, w = 0, c = 0;
    std::vector<uint8_t> data;

    ImageU8() = default;
    ImageU8(int h_, int w_, int c_) : h(h_), w(w_), c(c_), data(static_cast<size_t>(h_) * w_ * c_, 0) {}
    uint8_t& at(int y, int x, int ch) { return data[(static_cast<size_t>(y) * w + x) * c + ch]; }
    uint8_t at(int y, int x, int ch) const { return data[(static_cast<size_t>(y) * w + x) * c + ch]; }
    bool operator==(const ImageU8&) const = default;
};

struct LabelMap {
    int h = 0, w = 0;
    std::vector<uint8_t> data;

    LabelMap() = default;
    LabelMap(int h_, int w_) : h(h_), w(w_), data(static_cast<size_t>(h_) * w_, 0) {}
    uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
    bool operator==(const LabelMap&) const = default;
};

/// Integer grid of raw CLC identifiers (pre-remap).
struct IntGrid {
    int h = 0, w = 0;
    std::vector<int32_t> data;

    IntGrid() = default;
    IntGrid(int h_, int w_) : h(h_), w(w_), data(static_cast<size_t>(h_) * w_, 0) {}
    int32_t& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
    int32_t at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
};

struct TilePair {
    ImageU8 image;                  // tile_size x tile_size x 3
    std::optional<LabelMap> label;  // codes 0..6, absent for unlabeled sets
    std::string tile_id;
    std::string domain_id;

    bool operator==(const TilePair&) const = default;
    void validate() const;
};

struct DomainDataset {
    std::string name;
    std::vector<TilePair> tiles;
    int tile_size = 0;
    std::string split = "train";  // train | val | test
    bool labeled = true;

    void validate() const;
    bool operator==(const DomainDataset&) const = default;
};

// ---------------------------------------------------------------------------
// raster preprocessing
// ---------------------------------------------------------------------------

/// Per-band affine percentile stretch onto [0,255], round half-to-even.
RasterScene quantize_to_8bit(const RasterScene& scene, std::pair<double, double> clip_percentiles);

struct BandStats {
    double mean = 0.0, stddev = 0.0;
};

std::vector<BandStats> band_stats(const RasterScene& scene);

/// Shift/scale each band so its mean/std match the reference, clip to [0,255].
RasterScene normalize_illumination(const RasterScene& scene, const std::vector<BandStats>& reference);

RasterScene select_bands(const RasterScene& scene, const std::vector<std::string>& band_ids);

/// Non-overlapping grid tiling, partial edge tiles discarded.
std::vector<TilePair> tile_raster(const RasterScene& image8, const LabelMap* labels, int tile_size,
                                  const std::string& domain_id);

struct RemapResult {
    LabelMap grid;
    uint64_t unknown_cells = 0;  // identifiers not claimed by the schema
};

RemapResult remap_clc_labels(const IntGrid& clc, const LabelSchema& schema);

/// Nearest-neighbor label upsampling; factor >= 1.
LabelMap upsample_labels(const LabelMap& grid, double factor);

/// Deterministic right-angle rotation + axis-aligned crop. rot_quarter counts
/// clockwise 90-degree turns.
TilePair augment_with(const TilePair& pair, int rot_quarter, int off_y, int off_x, int out_size);

/// Seeded augmentation: same (pair, seed, out_size) always yields the same tile.
TilePair augment(const TilePair& pair, uint64_t seed, int out_size);

// ---------------------------------------------------------------------------
// synthetic two-domain benchmark
// ---------------------------------------------------------------------------

/// Appearance shift applied to the target domain relative to the source.
struct ShiftSpec {
    std::array<std::array<double, 3>, LabelSchema::kNumClasses> class_shift{};  // per-class RGB delta
    double brightness = 0.0;
    double noise_sigma = 0.0;

    static ShiftSpec identity() { return {}; }
    static ShiftSpec preset(const std::string& name);  // identity | default | strong
    bool is_identity() const;
};

std::pair<DomainDataset, DomainDataset> generate_synthetic_domains(uint64_t seed, int n_tiles,
                                                                   int tile_size,
                                                                   const ShiftSpec& shift);

// ---------------------------------------------------------------------------
// dataset persistence
// ---------------------------------------------------------------------------

/// Writes manifest.json + images/ + labels/ under root; returns the manifest.
nlohmann::json write_dataset(const DomainDataset& dataset, const std::filesystem::path& root);

DomainDataset read_dataset(const std::filesystem::path& root);

}  // namespace lulc::data
