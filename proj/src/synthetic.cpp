#include <algorithm>
#include <set>

#include "lulc/data.hpp"

namespace lulc::data {

namespace {

// Muted per-class base colors; leaves headroom for target-domain shifts.
constexpr std::array<std::array<double, 3>, LabelSchema::kNumClasses> kPalette = {{
    {40, 40, 40},     // Unknown
    {70, 180, 190},   // Urban
    {190, 180, 60},   // Agriculture
    {170, 80, 170},   // Rangeland
    {50, 150, 60},    // Forestry
    {40, 60, 180},    // Water
    {200, 200, 190},  // Barren
}};

constexpr double kTextureSigma = 7.0;

uint8_t quantize_px(double v) {
    return static_cast<uint8_t>(std::clamp(round_half_even(v), 0, 255));
}

/// Background plus occluding random ellipses/rectangles of classes 1..6.
LabelMap draw_label_plane(int tile_size, Rng& rng) {
    LabelMap lm(tile_size, tile_size);
    const int background = rng.uniform_int(0, 6);
    std::fill(lm.data.begin(), lm.data.end(), static_cast<uint8_t>(background));
    const int n_blobs = rng.uniform_int(3, 6);
    for (int b = 0; b < n_blobs; ++b) {
        const int cls = rng.uniform_int(1, 6);
        const bool ellipse = rng.uniform() < 0.5;
        const double cy = rng.uniform(0.0, tile_size);
        const double cx = rng.uniform(0.0, tile_size);
        const double ry = rng.uniform(tile_size / 8.0, tile_size / 2.5);
        const double rx = rng.uniform(tile_size / 8.0, tile_size / 2.5);
        for (int y = 0; y < tile_size; ++y)
            for (int x = 0; x < tile_size; ++x) {
                const double dy = (y + 0.5 - cy) / ry;
                const double dx = (x + 0.5 - cx) / rx;
                const bool inside = ellipse ? (dy * dy + dx * dx <= 1.0)
                                            : (std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0);
                if (inside) lm.at(y, x) = static_cast<uint8_t>(cls);
            }
    }
    return lm;
}

int distinct_classes(const LabelMap& lm) {
    std::set<uint8_t> s(lm.data.begin(), lm.data.end());
    return static_cast<int>(s.size());
}

}  // namespace

bool ShiftSpec::is_identity() const {
    if (brightness != 0.0 || noise_sigma != 0.0) return false;
    for (const auto& c : class_shift)
        for (double v : c)
            if (v != 0.0) return false;
    return true;
}

ShiftSpec ShiftSpec::preset(const std::string& name) {
    if (name == "identity") return identity();
    if (name == "default") {
        // One global color transform expressed per class: channel rotation
        // (R,G,B) -> 0.9*(B,R,G) plus a brightness lift. Wrecks a model keyed
        // to source colors while staying learnable as a single mapping.
        ShiftSpec s;
        s.brightness = 30.0;
        s.noise_sigma = 1.0;
        for (int c = 0; c < LabelSchema::kNumClasses; ++c) {
            const auto& p = kPalette[c];
            s.class_shift[c] = {0.9 * p[2] - p[0], 0.9 * p[0] - p[1], 0.9 * p[1] - p[2]};
        }
        return s;
    }
    if (name == "strong") {
        // Independent per-class palette replacement; no single global color
        // map reproduces it, so translation must disentangle classes.
        static constexpr std::array<std::array<double, 3>, LabelSchema::kNumClasses> target = {{
            {90, 70, 120},
            {180, 100, 60},
            {80, 190, 170},
            {60, 140, 90},
            {160, 60, 140},
            {150, 170, 60},
            {60, 80, 200},
        }};
        ShiftSpec s;
        s.brightness = 15.0;
        s.noise_sigma = 2.0;
        for (int c = 0; c < LabelSchema::kNumClasses; ++c)
            s.class_shift[c] = {target[c][0] - kPalette[c][0], target[c][1] - kPalette[c][1],
                                target[c][2] - kPalette[c][2]};
        return s;
    }
    throw ConfigError("unknown shift preset \"" + name + "\" (identity|default|strong)");
}

std::pair<DomainDataset, DomainDataset> generate_synthetic_domains(uint64_t seed, int n_tiles,
                                                                   int tile_size,
                                                                   const ShiftSpec& shift) {
    LULC_CHECK_T(n_tiles >= 1, DataError, "generate_synthetic_domains: n_tiles must be >= 1");
    LULC_CHECK_T(tile_size >= 8, DataError, "generate_synthetic_domains: tile_size must be >= 8");

    DomainDataset source, target;
    source.name = "synth_source";
    target.name = "synth_target";
    source.tile_size = target.tile_size = tile_size;
    source.labeled = target.labeled = true;

    for (int t = 0; t < n_tiles; ++t) {
        LabelMap lm;
        for (uint64_t attempt = 0;; ++attempt) {
            Rng rng = derive_rng(seed, {0x1abe1ULL, static_cast<uint64_t>(t), attempt});
            lm = draw_label_plane(tile_size, rng);
            if (distinct_classes(lm) >= 3 || attempt > 64) break;
        }

        Rng tex_rng = derive_rng(seed, {0x7e47ULL, static_cast<uint64_t>(t)});
        Rng tgt_rng = derive_rng(seed, {0x5417ULL, static_cast<uint64_t>(t)});

        TilePair src_tile, tgt_tile;
        {
            std::ostringstream oss;
            oss << "tile_" << t;
            src_tile.tile_id = tgt_tile.tile_id = oss.str();
        }
        src_tile.domain_id = source.name;
        tgt_tile.domain_id = target.name;
        src_tile.image = ImageU8(tile_size, tile_size, 3);
        tgt_tile.image = ImageU8(tile_size, tile_size, 3);
        for (int y = 0; y < tile_size; ++y)
            for (int x = 0; x < tile_size; ++x) {
                const int cls = lm.at(y, x);
                for (int ch = 0; ch < 3; ++ch) {
                    const double base = kPalette[cls][ch] + tex_rng.normal(0.0, kTextureSigma);
                    src_tile.image.at(y, x, ch) = quantize_px(base);
                    double shifted = base + shift.class_shift[cls][ch] + shift.brightness;
                    if (shift.noise_sigma > 0.0) shifted += tgt_rng.normal(0.0, shift.noise_sigma);
                    tgt_tile.image.at(y, x, ch) = quantize_px(shifted);
                }
            }
        src_tile.label = lm;
        tgt_tile.label = lm;
        source.tiles.push_back(std::move(src_tile));
        target.tiles.push_back(std::move(tgt_tile));
    }
    return {std::move(source), std::move(target)};
}

}  // namespace lulc::data
