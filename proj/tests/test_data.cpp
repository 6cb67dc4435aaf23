#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "lulc/data.hpp"
#include "lulc/png_io.hpp"

using namespace lulc;
using namespace lulc::data;
namespace fs = std::filesystem;

namespace {

RasterScene make_scene(int h, int w, int bands, int bit_depth = 12) {
    RasterScene s;
    s.height = h;
    s.width = w;
    s.bit_depth = bit_depth;
    s.pixel_size_m = 10.0;
    s.origin_id = "test";
    for (int b = 0; b < bands; ++b) {
        s.bands.push_back({"B" + std::to_string(b + 2), 500.0 + 50 * b, 50.0, 10.0});
        s.planes.emplace_back(static_cast<size_t>(h) * w, 0);
    }
    return s;
}

fs::path temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("lulc_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("quantize maps percentile range onto [0,255]") {
    RasterScene s = make_scene(2, 2, 3);
    // band 0 spans the full 12-bit range
    s.planes[0] = {0, 1000, 2000, 4095};
    s.planes[1] = {10, 20, 30, 40};
    s.planes[2] = {0, 0, 1, 4095};
    RasterScene q = quantize_to_8bit(s, {0.0, 1.0});
    CHECK(q.bit_depth == 8);

    // endpoints of the affine map
    CHECK(q.planes[0][0] == 0);
    CHECK(q.planes[0][3] == 255);
    // frozen from the round(v*255/4095) hand oracle
    CHECK(q.planes[0][1] == 62);
    CHECK(q.planes[0][2] == 125);
}

TEST_CASE("quantize rejects constant bands naming them") {
    RasterScene s = make_scene(2, 2, 3);
    s.planes[0] = {5, 6, 7, 8};
    s.planes[1] = {0, 0, 0, 0};  // all-zero band
    s.planes[2] = {1, 2, 3, 4};
    try {
        quantize_to_8bit(s, {0.0, 1.0});
        FAIL("expected a constant-band error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("constant band") != std::string::npos);
        CHECK(std::string(e.what()).find("B3") != std::string::npos);
    }
}

TEST_CASE("quantize preconditions") {
    RasterScene s = make_scene(2, 2, 3);
    s.bit_depth = 8;
    CHECK_THROWS_AS(quantize_to_8bit(s, {0.0, 1.0}), DataError);
    s.bit_depth = 12;
    s.planes[0] = {0, 1, 2, 3};
    s.planes[1] = {0, 1, 2, 3};
    s.planes[2] = {0, 1, 2, 3};
    CHECK_THROWS_AS(quantize_to_8bit(s, {0.9, 0.1}), DataError);
    CHECK_THROWS_AS(quantize_to_8bit(s, {0.0, 1.5}), DataError);
}

TEST_CASE("quantization is monotone per band (property)") {
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        RasterScene s = make_scene(4, 4, 3);
        for (int b = 0; b < 3; ++b)
            for (auto& v : s.planes[b]) v = static_cast<uint16_t>(rng.uniform_int(0, 4095));
        s.planes[0][0] = 0;  // avoid accidental constant bands
        s.planes[0][1] = 4095;
        s.planes[1][0] = 1;
        s.planes[1][1] = 4000;
        s.planes[2][0] = 7;
        s.planes[2][1] = 3000;
        const double lo = rng.uniform(0.0, 0.3);
        const double hi = rng.uniform(0.7, 1.0);
        RasterScene q = quantize_to_8bit(s, {lo, hi});
        for (int b = 0; b < 3; ++b) {
            // sort sample/output pairs by input and verify order is kept
            std::vector<std::pair<uint16_t, uint16_t>> pairs;
            for (size_t i = 0; i < s.planes[b].size(); ++i)
                pairs.emplace_back(s.planes[b][i], q.planes[b][i]);
            std::sort(pairs.begin(), pairs.end());
            for (size_t i = 1; i < pairs.size(); ++i)
                CHECK(pairs[i].second >= pairs[i - 1].second);
        }
    }
}

TEST_CASE("illumination normalization") {
    RasterScene s = make_scene(2, 2, 3);
    s.bit_depth = 8;
    s.planes[0] = {40, 50, 50, 60};  // mean 50
    s.planes[1] = {10, 20, 30, 40};
    s.planes[2] = {100, 110, 120, 130};

    SUBCASE("own stats act as identity") {
        RasterScene out = normalize_illumination(s, band_stats(s));
        CHECK(out.planes == s.planes);
    }

    SUBCASE("mean/std matching against the hand oracle") {
        // band 0 has mean 50, std sqrt(50); ask for mean 100, std 2*std
        const auto own = band_stats(s);
        std::vector<BandStats> ref = own;
        ref[0] = {100.0, 2.0 * own[0].stddev};
        RasterScene out = normalize_illumination(s, ref);
        // sample 60 -> (60-50)/std * 2std + 100 = 120
        CHECK(out.planes[0][3] == 120);
        CHECK(out.planes[0][0] == 80);
    }

    SUBCASE("values clip at 255") {
        const auto own = band_stats(s);
        std::vector<BandStats> ref = own;
        ref[2] = {250.0, own[2].stddev * 4.0};
        RasterScene out = normalize_illumination(s, ref);
        CHECK(out.planes[2][3] == 255);
    }

    SUBCASE("zero-variance band is an error") {
        RasterScene flat = s;
        flat.planes[1] = {7, 7, 7, 7};
        CHECK_THROWS_AS(normalize_illumination(flat, band_stats(s)), DataError);
    }
}

TEST_CASE("band selection") {
    RasterScene s = make_scene(2, 2, 4);  // B2,B3,B4,B5
    for (int b = 0; b < 4; ++b) s.planes[b] = {static_cast<uint16_t>(b), 0, 0, 0};

    SUBCASE("RGB pick reorders bands") {
        RasterScene rgb = select_bands(s, {"B4", "B3", "B2"});
        REQUIRE(rgb.band_count() == 3);
        CHECK(rgb.bands[0].band_id == "B4");
        CHECK(rgb.planes[0][0] == 2);
        CHECK(rgb.planes[2][0] == 0);
    }

    SUBCASE("identity order") {
        RasterScene same = select_bands(s, {"B2", "B3", "B4", "B5"});
        CHECK(same.planes == s.planes);
    }

    SUBCASE("missing band names the offender") {
        try {
            select_bands(s, {"B99"});
            FAIL("expected missing-band error");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("B99") != std::string::npos);
        }
    }
}

TEST_CASE("tiling counts and partition") {
    auto filled_scene = [](int h, int w) {
        RasterScene s = make_scene(h, w, 3);
        s.bit_depth = 8;
        Rng rng(11);
        for (int b = 0; b < 3; ++b)
            for (auto& v : s.planes[b]) v = static_cast<uint16_t>(rng.uniform_int(0, 255));
        return s;
    };

    SUBCASE("exact division") {
        CHECK(tile_raster(filled_scene(448, 448), nullptr, 224, "d").size() == 4);
    }
    SUBCASE("edges dropped") {
        CHECK(tile_raster(filled_scene(500, 500), nullptr, 224, "d").size() == 4);
    }
    SUBCASE("full-size scene to 612 patches") {
        CHECK(tile_raster(filled_scene(2000, 2000), nullptr, 612, "d").size() == 9);
    }
    SUBCASE("oversized tile is an error") {
        CHECK_THROWS_AS(tile_raster(filled_scene(100, 100), nullptr, 101, "d"), DataError);
    }
    SUBCASE("label crops come from identical coordinates") {
        RasterScene s = filled_scene(96, 64);
        LabelMap lm(96, 64);
        for (int y = 0; y < 96; ++y)
            for (int x = 0; x < 64; ++x) lm.at(y, x) = static_cast<uint8_t>((y / 32 + x / 32) % 7);
        auto tiles = tile_raster(s, &lm, 32, "d");
        REQUIRE(tiles.size() == 6);
        for (int tr = 0; tr < 3; ++tr)
            for (int tc = 0; tc < 2; ++tc) {
                const TilePair& t = tiles[static_cast<size_t>(tr) * 2 + tc];
                REQUIRE(t.label.has_value());
                for (int y = 0; y < 32; ++y)
                    for (int x = 0; x < 32; ++x) {
                        CHECK(t.label->at(y, x) == lm.at(tr * 32 + y, tc * 32 + x));
                        for (int c = 0; c < 3; ++c)
                            CHECK(t.image.at(y, x, c) == s.at(c, tr * 32 + y, tc * 32 + x));
                    }
            }
    }
    SUBCASE("partition covers the cropped sub-grid exactly once") {
        RasterScene s = filled_scene(70, 50);
        auto tiles = tile_raster(s, nullptr, 32, "d");
        REQUIRE(tiles.size() == 2);
        // multiset equality against the top-left 64x32 sub-grid, per channel
        std::multiset<int> from_tiles, from_grid;
        for (const TilePair& t : tiles)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x)
                    for (int c = 0; c < 3; ++c) from_tiles.insert(t.image.at(y, x, c) * 4 + c);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 32; ++x)
                for (int c = 0; c < 3; ++c) from_grid.insert(s.at(c, y, x) * 4 + c);
        CHECK(from_tiles == from_grid);
    }
}

TEST_CASE("CLC remap") {
    const LabelSchema schema = LabelSchema::clc_default();
    schema.validate();

    SUBCASE("table rows") {
        IntGrid g(1, 4);
        g.at(0, 0) = 511;  // water body
        g.at(0, 1) = 311;  // broad-leaved forest
        g.at(0, 2) = 212;  // irrigated arable land
        g.at(0, 3) = 999;  // unknown identifier
        RemapResult r = remap_clc_labels(g, schema);
        CHECK(r.grid.at(0, 0) == 5);
        CHECK(r.grid.at(0, 1) == 4);
        CHECK(r.grid.at(0, 2) == 2);
        CHECK(r.grid.at(0, 3) == 0);
        CHECK(r.unknown_cells == 1);
    }

    SUBCASE("totality and disjointness over the whole CLC code set") {
        std::set<int> all_codes;
        for (const LabelClass& c : schema.classes)
            for (int code : c.clc_source_codes) all_codes.insert(code);
        CHECK(all_codes.size() == 44);  // the full level-3 nomenclature
        for (int code : all_codes) {
            int claims = 0;
            for (const LabelClass& c : schema.classes) claims += c.clc_source_codes.count(code);
            CHECK(claims == 1);
        }
    }

    SUBCASE("remap output stays inside 0..6 for arbitrary input") {
        Rng rng(5);
        IntGrid g(16, 16);
        for (auto& v : g.data) v = rng.uniform_int(-50, 600);
        RemapResult r = remap_clc_labels(g, schema);
        for (uint8_t v : r.grid.data) CHECK(v < 7);
    }
}

TEST_CASE("label upsampling") {
    LabelMap g(2, 2);
    g.at(0, 0) = 1;
    g.at(0, 1) = 2;
    g.at(1, 0) = 3;
    g.at(1, 1) = 4;

    SUBCASE("factor 1 is identity") { CHECK(upsample_labels(g, 1.0) == g); }

    SUBCASE("factor 2 block-replicates") {
        LabelMap up = upsample_labels(g, 2.0);
        REQUIRE(up.h == 4);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) CHECK(up.at(y, x) == g.at(y / 2, x / 2));
    }

    SUBCASE("factor below 1 is an error") { CHECK_THROWS_AS(upsample_labels(g, 0.5), DataError); }

    SUBCASE("histogram proportions survive integer upsampling") {
        Rng rng(17);
        for (int trial = 0; trial < 20; ++trial) {
            LabelMap m(5, 7);
            for (auto& v : m.data) v = static_cast<uint8_t>(rng.uniform_int(0, 6));
            const int f = rng.uniform_int(2, 4);
            LabelMap up = upsample_labels(m, static_cast<double>(f));
            // brute-force histogram oracle
            std::array<uint64_t, 7> before{}, after{};
            for (uint8_t v : m.data) ++before[v];
            for (uint8_t v : up.data) ++after[v];
            for (int c = 0; c < 7; ++c)
                CHECK(after[c] == before[c] * static_cast<uint64_t>(f) * f);
        }
    }

    SUBCASE("no new codes appear") {
        LabelMap up = upsample_labels(g, 1.7);
        std::set<uint8_t> in(g.data.begin(), g.data.end());
        for (uint8_t v : up.data) CHECK(in.count(v) == 1);
    }
}

namespace {

TilePair checker_tile(int n) {
    TilePair t;
    t.tile_id = "t";
    t.domain_id = "d";
    t.image = ImageU8(n, n, 3);
    LabelMap lm(n, n);
    Rng rng(99);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            for (int c = 0; c < 3; ++c)
                t.image.at(y, x, c) = static_cast<uint8_t>(rng.uniform_int(0, 255));
            lm.at(y, x) = static_cast<uint8_t>(rng.uniform_int(0, 6));
        }
    t.label = lm;
    return t;
}

}  // namespace

TEST_CASE("augmentation geometry") {
    TilePair t = checker_tile(8);

    SUBCASE("rotation 0 with full crop is identity") {
        CHECK(augment_with(t, 0, 0, 0, 8) == t);
    }

    SUBCASE("180 degrees twice is identity") {
        CHECK(augment_with(augment_with(t, 2, 0, 0, 8), 2, 0, 0, 8) == t);
    }

    SUBCASE("90-degree index mapping oracle on a 3x3 grid") {
        TilePair s = checker_tile(3);
        TilePair r = augment_with(s, 1, 0, 0, 3);
        // source (r,c) must land at (c, N-1-r)
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x)
                for (int c = 0; c < 3; ++c)
                    CHECK(r.image.at(x, 3 - 1 - y, c) == s.image.at(y, x, c));
    }

    SUBCASE("seeded augmentation is deterministic") {
        TilePair a = augment(t, 1234, 6);
        TilePair b = augment(t, 1234, 6);
        CHECK(a == b);
        TilePair c = augment(t, 1235, 6);
        // different seed virtually always gives a different crop
        CHECK((c.image == a.image) == false);
    }

    SUBCASE("oversized crop is an error") { CHECK_THROWS_AS(augment(t, 1, 9), DataError); }

    SUBCASE("image/label alignment holds for every transform on 8x8 tiles") {
        // paint the label with the pixel's own coordinates via the red channel
        TilePair s = checker_tile(8);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                s.image.at(y, x, 0) = static_cast<uint8_t>(y * 8 + x);
                s.label->at(y, x) = static_cast<uint8_t>((y * 8 + x) % 7);
            }
        for (int rot = 0; rot < 4; ++rot)
            for (int oy = 0; oy <= 3; ++oy)
                for (int ox = 0; ox <= 3; ++ox) {
                    TilePair out = augment_with(s, rot, oy, ox, 5);
                    for (int y = 0; y < 5; ++y)
                        for (int x = 0; x < 5; ++x) {
                            // label must describe the same source pixel the image came from
                            const int src = out.image.at(y, x, 0);
                            CHECK(out.label->at(y, x) == static_cast<uint8_t>(src % 7));
                        }
                }
    }
}

TEST_CASE("synthetic two-domain generation") {
    SUBCASE("identity shift gives bit-identical paired images") {
        auto [src, tgt] = generate_synthetic_domains(7, 6, 16, ShiftSpec::identity());
        REQUIRE(src.tiles.size() == 6);
        REQUIRE(tgt.tiles.size() == 6);
        for (size_t i = 0; i < src.tiles.size(); ++i) {
            CHECK(src.tiles[i].image == tgt.tiles[i].image);
            CHECK(src.tiles[i].label == tgt.tiles[i].label);
        }
    }

    SUBCASE("same seed twice is bit-identical") {
        auto a = generate_synthetic_domains(42, 5, 16, ShiftSpec::preset("default"));
        auto b = generate_synthetic_domains(42, 5, 16, ShiftSpec::preset("default"));
        CHECK(a.first == b.first);
        CHECK(a.second == b.second);
    }

    SUBCASE("label planes carry at least 3 distinct classes") {
        auto [src, tgt] = generate_synthetic_domains(3, 12, 24, ShiftSpec::preset("default"));
        for (const TilePair& t : src.tiles) {
            std::set<uint8_t> classes(t.label->data.begin(), t.label->data.end());
            CHECK(classes.size() >= 3);
        }
    }

    SUBCASE("non-identity shift changes the images but not the labels") {
        auto [src, tgt] = generate_synthetic_domains(9, 4, 16, ShiftSpec::preset("default"));
        for (size_t i = 0; i < src.tiles.size(); ++i) {
            CHECK(src.tiles[i].label == tgt.tiles[i].label);
            CHECK_FALSE(src.tiles[i].image == tgt.tiles[i].image);
        }
    }
}

TEST_CASE("dataset round trip") {
    auto [src, tgt] = generate_synthetic_domains(21, 5, 16, ShiftSpec::preset("default"));

    SUBCASE("write/read is bit-exact") {
        const fs::path dir = temp_dir("roundtrip");
        write_dataset(src, dir);
        DomainDataset back = read_dataset(dir);
        CHECK(back == src);
        fs::remove_all(dir);
    }

    SUBCASE("label value above 6 is rejected naming the tile") {
        const fs::path dir = temp_dir("badlabel");
        DomainDataset bad = src;
        bad.tiles[2].label->at(0, 0) = 7;
        // bypass write-side validation by writing the corrupt plane directly
        CHECK_THROWS_AS(write_dataset(bad, dir), DataError);
        write_dataset(src, dir);
        ImageU8 corrupt(16, 16, 1);
        corrupt.data.assign(corrupt.data.size(), 7);
        write_png(dir / "labels" / (src.tiles[2].tile_id + ".png"), corrupt);
        try {
            read_dataset(dir);
            FAIL("expected label-range error");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find(src.tiles[2].tile_id) != std::string::npos);
        }
        fs::remove_all(dir);
    }

    SUBCASE("size mismatch is rejected") {
        const fs::path dir = temp_dir("badsize");
        write_dataset(src, dir);
        ImageU8 wrong(8, 8, 1);
        write_png(dir / "labels" / (src.tiles[0].tile_id + ".png"), wrong);
        CHECK_THROWS_AS(read_dataset(dir), DataError);
        fs::remove_all(dir);
    }

    SUBCASE("malformed manifest is rejected") {
        const fs::path dir = temp_dir("badmanifest");
        write_dataset(src, dir);
        std::ofstream(dir / "manifest.json") << "{ not json";
        CHECK_THROWS_AS(read_dataset(dir), DataError);
        fs::remove_all(dir);
    }

    SUBCASE("empty dataset round-trips") {
        const fs::path dir = temp_dir("empty");
        DomainDataset empty;
        empty.name = "none";
        empty.tile_size = 16;
        write_dataset(empty, dir);
        DomainDataset back = read_dataset(dir);
        CHECK(back.tiles.empty());
        CHECK(back.name == "none");
        fs::remove_all(dir);
    }

    SUBCASE("unlabeled dataset omits label planes") {
        const fs::path dir = temp_dir("unlabeled");
        DomainDataset ul = src;
        ul.labeled = false;
        for (TilePair& t : ul.tiles) t.label.reset();
        write_dataset(ul, dir);
        DomainDataset back = read_dataset(dir);
        CHECK_FALSE(back.labeled);
        CHECK_FALSE(back.tiles[0].label.has_value());
        fs::remove_all(dir);
    }
}

TEST_CASE("png io handles gray and rgb") {
    const fs::path dir = temp_dir("png");
    Rng rng(1);
    ImageU8 rgb(9, 7, 3);
    for (auto& v : rgb.data) v = static_cast<uint8_t>(rng.uniform_int(0, 255));
    write_png(dir / "a.png", rgb);
    CHECK(read_png(dir / "a.png") == rgb);

    ImageU8 gray(5, 6, 1);
    for (auto& v : gray.data) v = static_cast<uint8_t>(rng.uniform_int(0, 255));
    write_png(dir / "b.png", gray);
    CHECK(read_png(dir / "b.png") == gray);
    fs::remove_all(dir);
}
