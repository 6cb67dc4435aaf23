#include "lulc/data.hpp"

#include <algorithm>
#include <map>

namespace lulc::data {

int RasterScene::band_index(const std::string& id) const {
    for (size_t i = 0; i < bands.size(); ++i)
        if (bands[i].band_id == id) return static_cast<int>(i);
    return -1;
}

void RasterScene::validate() const {
    LULC_CHECK_T(height >= 1 && width >= 1, DataError, "raster dimensions must be >= 1");
    LULC_CHECK_T(bands.size() >= 3, DataError,
                 "raster must carry at least 3 bands, got " << bands.size());
    LULC_CHECK_T(planes.size() == bands.size(), DataError, "plane/band count mismatch");
    const uint32_t limit = 1u << bit_depth;
    for (size_t b = 0; b < planes.size(); ++b) {
        LULC_CHECK_T(planes[b].size() == static_cast<size_t>(height) * width, DataError,
                     "band " << bands[b].band_id << " has wrong plane size");
        for (uint16_t v : planes[b])
            LULC_CHECK_T(v < limit, DataError, "band " << bands[b].band_id << " sample " << v
                                                       << " exceeds bit depth " << bit_depth);
    }
}

// ---------------------------------------------------------------------------
// label schema
// ---------------------------------------------------------------------------

LabelSchema LabelSchema::clc_default() {
    // CLC level-3 identifiers grouped to the 7 training classes. Green urban
    // areas (1.4.x) carry no training class and fall to Unknown.
    LabelSchema s;
    s.classes = {
        {0, "Unknown", {0, 0, 0}, {141, 142}},
        {1, "Urban", {0, 255, 255}, {111, 112, 121, 122, 123, 124, 131, 132, 133}},
        {2, "Agriculture", {255, 255, 0}, {211, 212, 213, 221, 222, 223, 231, 241, 242, 243, 244}},
        {3, "Rangeland", {255, 0, 255}, {321, 322, 323, 324, 411, 412, 421, 422, 423}},
        {4, "Forestry", {0, 255, 0}, {311, 312, 313}},
        {5, "Water", {0, 0, 255}, {511, 512, 521, 522, 523}},
        {6, "Barren", {255, 255, 255}, {331, 332, 333, 334, 335}},
    };
    return s;
}

void LabelSchema::validate() const {
    LULC_CHECK_T(classes.size() == kNumClasses, DataError,
                 "schema must define exactly " << kNumClasses << " classes");
    std::set<int> seen_clc;
    for (size_t i = 0; i < classes.size(); ++i) {
        LULC_CHECK_T(classes[i].code == static_cast<int>(i), DataError,
                     "class codes must be contiguous 0..6, got " << classes[i].code << " at " << i);
        for (int clc : classes[i].clc_source_codes) {
            LULC_CHECK_T(!seen_clc.count(clc), DataError,
                         "CLC identifier " << clc << " is claimed by more than one class");
            seen_clc.insert(clc);
        }
    }
    LULC_CHECK_T(classes[0].name == "Unknown", DataError, "class 0 must be Unknown");
}

int LabelSchema::map_clc(int clc_code) const {
    for (const LabelClass& c : classes)
        if (c.clc_source_codes.count(clc_code)) return c.code;
    return -1;
}

void TilePair::validate() const {
    LULC_CHECK_T(image.h == image.w && image.h > 0, DataError,
                 "tile " << tile_id << ": image must be square and non-empty");
    LULC_CHECK_T(image.c == 3, DataError, "tile " << tile_id << ": image must have 3 channels");
    if (label) {
        LULC_CHECK_T(label->h == image.h && label->w == image.w, DataError,
                     "tile " << tile_id << ": image " << image.h << "x" << image.w << " vs label "
                             << label->h << "x" << label->w << " size mismatch");
        for (uint8_t v : label->data)
            LULC_CHECK_T(v < LabelSchema::kNumClasses, DataError,
                         "tile " << tile_id << ": label value " << int(v) << " out of range 0..6");
    }
}

void DomainDataset::validate() const {
    for (const TilePair& t : tiles) {
        t.validate();
        LULC_CHECK_T(t.image.h == tile_size, DataError,
                     "tile " << t.tile_id << " size " << t.image.h << " != dataset tile_size "
                             << tile_size);
        if (labeled)
            LULC_CHECK_T(t.label.has_value(), DataError,
                         "labeled dataset but tile " << t.tile_id << " has no label plane");
    }
    LULC_CHECK_T(split == "train" || split == "val" || split == "test", DataError,
                 "split must be train/val/test, got " << split);
}

// ---------------------------------------------------------------------------
// quantization / normalization / band selection
// ---------------------------------------------------------------------------

namespace {

/// Linear-interpolated percentile of a sorted sample vector, q in [0,1].
double sorted_percentile(const std::vector<uint16_t>& sorted, double q) {
    const size_t n = sorted.size();
    const double pos = q * static_cast<double>(n - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return static_cast<double>(sorted[lo]) * (1.0 - frac) + static_cast<double>(sorted[hi]) * frac;
}

}  // namespace

RasterScene quantize_to_8bit(const RasterScene& scene, std::pair<double, double> clip_percentiles) {
    const auto [lo_q, hi_q] = clip_percentiles;
    LULC_CHECK_T(scene.bit_depth > 8, DataError,
                 "quantize_to_8bit: scene is already " << scene.bit_depth << "-bit");
    LULC_CHECK_T(0.0 <= lo_q && lo_q < hi_q && hi_q <= 1.0, DataError,
                 "quantize_to_8bit: clip percentiles must satisfy 0 <= low < high <= 1, got ("
                     << lo_q << ", " << hi_q << ")");

    RasterScene out = scene;
    out.bit_depth = 8;
    for (int b = 0; b < scene.band_count(); ++b) {
        std::vector<uint16_t> sorted = scene.planes[b];
        std::sort(sorted.begin(), sorted.end());
        const double p_lo = sorted_percentile(sorted, lo_q);
        const double p_hi = sorted_percentile(sorted, hi_q);
        LULC_CHECK_T(p_hi > p_lo, DataError,
                     "quantize_to_8bit: constant band " << scene.bands[b].band_id
                                                        << " (p_low == p_high == " << p_lo << ")");
        const double scale = 255.0 / (p_hi - p_lo);
        for (size_t i = 0; i < out.planes[b].size(); ++i) {
            const double v = (static_cast<double>(scene.planes[b][i]) - p_lo) * scale;
            out.planes[b][i] = static_cast<uint16_t>(std::clamp(round_half_even(v), 0, 255));
        }
    }
    return out;
}

std::vector<BandStats> band_stats(const RasterScene& scene) {
    std::vector<BandStats> out(scene.band_count());
    for (int b = 0; b < scene.band_count(); ++b) {
        const auto& p = scene.planes[b];
        double m = 0.0;
        for (uint16_t v : p) m += v;
        m /= static_cast<double>(p.size());
        double var = 0.0;
        for (uint16_t v : p) {
            const double d = v - m;
            var += d * d;
        }
        var /= static_cast<double>(p.size());
        out[b] = {m, std::sqrt(var)};
    }
    return out;
}

RasterScene normalize_illumination(const RasterScene& scene, const std::vector<BandStats>& reference) {
    LULC_CHECK_T(scene.bit_depth == 8, DataError, "normalize_illumination expects an 8-bit scene");
    LULC_CHECK_T(reference.size() == scene.planes.size(), DataError,
                 "normalize_illumination: reference stats count " << reference.size()
                                                                  << " != band count "
                                                                  << scene.planes.size());
    for (const BandStats& r : reference)
        LULC_CHECK_T(std::isfinite(r.mean) && std::isfinite(r.stddev) && r.stddev > 0, DataError,
                     "normalize_illumination: reference stats must be finite with std > 0");

    const std::vector<BandStats> own = band_stats(scene);
    RasterScene out = scene;
    for (int b = 0; b < scene.band_count(); ++b) {
        LULC_CHECK_T(own[b].stddev > 0, DataError,
                     "normalize_illumination: zero-variance band " << scene.bands[b].band_id);
        const double gain = reference[b].stddev / own[b].stddev;
        for (size_t i = 0; i < out.planes[b].size(); ++i) {
            const double v =
                (static_cast<double>(scene.planes[b][i]) - own[b].mean) * gain + reference[b].mean;
            out.planes[b][i] = static_cast<uint16_t>(std::clamp(round_half_even(v), 0, 255));
        }
    }
    return out;
}

RasterScene select_bands(const RasterScene& scene, const std::vector<std::string>& band_ids) {
    RasterScene out = scene;
    out.bands.clear();
    out.planes.clear();
    for (const std::string& id : band_ids) {
        const int idx = scene.band_index(id);
        LULC_CHECK_T(idx >= 0, DataError, "select_bands: band \"" << id << "\" not present");
        out.bands.push_back(scene.bands[idx]);
        out.planes.push_back(scene.planes[idx]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// tiling
// ---------------------------------------------------------------------------

std::vector<TilePair> tile_raster(const RasterScene& image8, const LabelMap* labels, int tile_size,
                                  const std::string& domain_id) {
    LULC_CHECK_T(image8.bit_depth == 8, DataError, "tile_raster expects an 8-bit scene");
    LULC_CHECK_T(image8.band_count() == 3, DataError,
                 "tile_raster expects a 3-band scene, got " << image8.band_count());
    LULC_CHECK_T(tile_size >= 1, DataError, "tile_size must be >= 1");
    LULC_CHECK_T(tile_size <= image8.height && tile_size <= image8.width, DataError,
                 "tile_size " << tile_size << " exceeds raster " << image8.height << "x"
                              << image8.width);
    if (labels)
        LULC_CHECK_T(labels->h == image8.height && labels->w == image8.width, DataError,
                     "tile_raster: image " << image8.height << "x" << image8.width << " vs label "
                                           << labels->h << "x" << labels->w << " size mismatch");

    const int rows = image8.height / tile_size;
    const int cols = image8.width / tile_size;
    std::vector<TilePair> out;
    out.reserve(static_cast<size_t>(rows) * cols);
    for (int tr = 0; tr < rows; ++tr) {
        for (int tc = 0; tc < cols; ++tc) {
            TilePair t;
            t.domain_id = domain_id;
            {
                std::ostringstream oss;
                oss << domain_id << "_r" << tr << "_c" << tc;
                t.tile_id = oss.str();
            }
            t.image = ImageU8(tile_size, tile_size, 3);
            for (int y = 0; y < tile_size; ++y)
                for (int x = 0; x < tile_size; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        t.image.at(y, x, ch) = static_cast<uint8_t>(
                            image8.at(ch, tr * tile_size + y, tc * tile_size + x));
            if (labels) {
                LabelMap lm(tile_size, tile_size);
                for (int y = 0; y < tile_size; ++y)
                    for (int x = 0; x < tile_size; ++x)
                        lm.at(y, x) = labels->at(tr * tile_size + y, tc * tile_size + x);
                t.label = std::move(lm);
            }
            out.push_back(std::move(t));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// label remap / upsample
// ---------------------------------------------------------------------------

RemapResult remap_clc_labels(const IntGrid& clc, const LabelSchema& schema) {
    schema.validate();
    RemapResult res;
    res.grid = LabelMap(clc.h, clc.w);
    std::map<int, int> cache;
    for (size_t i = 0; i < clc.data.size(); ++i) {
        const int id = clc.data[i];
        auto it = cache.find(id);
        int code;
        if (it != cache.end()) {
            code = it->second;
        } else {
            code = schema.map_clc(id);
            cache.emplace(id, code);
        }
        if (code < 0) {
            res.grid.data[i] = 0;
            ++res.unknown_cells;
        } else {
            res.grid.data[i] = static_cast<uint8_t>(code);
        }
    }
    return res;
}

LabelMap upsample_labels(const LabelMap& grid, double factor) {
    LULC_CHECK_T(factor >= 1.0, DataError, "upsample_labels: factor must be >= 1, got " << factor);
    if (factor == 1.0) return grid;
    const int oh = static_cast<int>(std::floor(grid.h * factor));
    const int ow = static_cast<int>(std::floor(grid.w * factor));
    LabelMap out(oh, ow);
    for (int y = 0; y < oh; ++y) {
        const int sy = std::min(static_cast<int>(std::floor(y / factor)), grid.h - 1);
        for (int x = 0; x < ow; ++x) {
            const int sx = std::min(static_cast<int>(std::floor(x / factor)), grid.w - 1);
            out.at(y, x) = grid.at(sy, sx);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

namespace {

/// Source coordinates of destination pixel (r, c) after k clockwise quarter
/// turns of an n x n grid. Source (r, c) lands at (c, n-1-r) for k = 1.
std::pair<int, int> rot_preimage(int k, int n, int r, int c) {
    switch (k & 3) {
        case 0: return {r, c};
        case 1: return {n - 1 - c, r};
        case 2: return {n - 1 - r, n - 1 - c};
        default: return {c, n - 1 - r};
    }
}

}  // namespace

TilePair augment_with(const TilePair& pair, int rot_quarter, int off_y, int off_x, int out_size) {
    const int n = pair.image.h;
    LULC_CHECK_T(out_size >= 1 && out_size <= n, DataError,
                 "augment: out_size " << out_size << " exceeds tile size " << n);
    LULC_CHECK_T(off_y >= 0 && off_x >= 0 && off_y + out_size <= n && off_x + out_size <= n,
                 DataError, "augment: crop window out of bounds");

    TilePair out;
    out.tile_id = pair.tile_id;
    out.domain_id = pair.domain_id;
    out.image = ImageU8(out_size, out_size, 3);
    if (pair.label) out.label = LabelMap(out_size, out_size);
    for (int y = 0; y < out_size; ++y) {
        for (int x = 0; x < out_size; ++x) {
            const auto [sy, sx] = rot_preimage(rot_quarter, n, off_y + y, off_x + x);
            for (int ch = 0; ch < 3; ++ch) out.image.at(y, x, ch) = pair.image.at(sy, sx, ch);
            if (pair.label) out.label->at(y, x) = pair.label->at(sy, sx);
        }
    }
    return out;
}

TilePair augment(const TilePair& pair, uint64_t seed, int out_size) {
    const int n = pair.image.h;
    LULC_CHECK_T(out_size >= 1 && out_size <= n, DataError,
                 "augment: out_size " << out_size << " exceeds tile size " << n);
    Rng rng(seed);
    const int rot = rng.uniform_int(0, 3);
    const int max_off = n - out_size;
    const int off_y = max_off > 0 ? rng.uniform_int(0, max_off) : 0;
    const int off_x = max_off > 0 ? rng.uniform_int(0, max_off) : 0;
    return augment_with(pair, rot, off_y, off_x, out_size);
}

}  // namespace lulc::data
