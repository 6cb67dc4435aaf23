// End-to-end checks of the lulcda binary: dataset preparation from raster
// files, command determinism, and exit-code contracts.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "lulc/data.hpp"

using namespace lulc;
namespace fs = std::filesystem;
using nlohmann::json;

#ifndef LULCDA_BIN
#error "LULCDA_BIN must point at the CLI binary"
#endif

namespace {

struct RunResult {
    int exit_code;
    std::string output;
};

RunResult run_cli(const std::string& args, const fs::path& cwd) {
    const fs::path out_file = cwd / "cli_output.txt";
    const std::string cmd = "cd " + cwd.string() + " && " + LULCDA_BIN + " " + args + " > " +
                            out_file.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream in(out_file);
    std::string output((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return {WEXITSTATUS(status), output};
}

fs::path fresh_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("lulc_cli_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

/// 12-bit band raster with a smooth gradient plus per-band offset.
void write_band(const fs::path& path, int h, int w, int band_offset) {
    cv::Mat m(h, w, CV_16UC1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            m.at<uint16_t>(y, x) = static_cast<uint16_t>(
                std::min(4095, (y * 3 + x * 2 + band_offset * 300) % 4096));
    REQUIRE(cv::imwrite(path.string(), m));
}

/// CLC identifier raster in quadrants: urban / agriculture / forest / water.
void write_clc(const fs::path& path, int h, int w) {
    cv::Mat m(h, w, CV_16UC1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int code = 111;
            if (y >= h / 2 && x < w / 2) code = 211;
            if (y < h / 2 && x >= w / 2) code = 311;
            if (y >= h / 2 && x >= w / 2) code = 511;
            m.at<uint16_t>(y, x) = static_cast<uint16_t>(code);
        }
    REQUIRE(cv::imwrite(path.string(), m));
}

std::string band_args(const fs::path& dir) {
    return "--band B4=" + (dir / "B4.png").string() + " --band B3=" + (dir / "B3.png").string() +
           " --band B2=" + (dir / "B2.png").string();
}

}  // namespace

TEST_CASE("prepare builds a labeled dataset from rasters") {
    const fs::path dir = fresh_dir("prepare");
    for (int b = 0; b < 3; ++b)
        write_band(dir / ("B" + std::to_string(b + 2) + ".png"), 448, 448, b);
    write_clc(dir / "clc.png", 448, 448);

    RunResult r = run_cli("prepare " + band_args(dir) + " --clc clc.png --satellite sentinel2 "
                          "--out ds --name scene --clip 0.0 1.0",
                          dir);
    REQUIRE(r.exit_code == 0);

    // sentinel2 preset: tile 224 -> 448x448 gives 4 tiles
    data::DomainDataset ds = data::read_dataset(dir / "ds");
    CHECK(ds.tiles.size() == 4);
    CHECK(ds.tile_size == 224);
    CHECK(ds.labeled);

    // quadrant labels survive the remap: forest quadrant is code 4
    const data::TilePair* tr_tile = nullptr;
    for (const auto& t : ds.tiles)
        if (t.tile_id.find("_r0_c1") != std::string::npos) tr_tile = &t;
    REQUIRE(tr_tile != nullptr);
    CHECK(tr_tile->label->at(10, 10) == 4);

    json summary = json::parse(std::ifstream(dir / "ds" / "summary.json"));
    CHECK(summary.at("tiles") == 4);
    CHECK(summary.at("class_histogram").at("Urban") == 224 * 224);
    fs::remove_all(dir);
}

TEST_CASE("prepare upsamples coarse labels to the image grid") {
    const fs::path dir = fresh_dir("upsample");
    for (int b = 0; b < 3; ++b)
        write_band(dir / ("B" + std::to_string(b + 2) + ".png"), 448, 448, b);
    write_clc(dir / "clc.png", 224, 224);  // half-resolution labels

    RunResult r = run_cli("prepare " + band_args(dir) +
                              " --clc clc.png --satellite sentinel2 --out ds",
                          dir);
    REQUIRE(r.exit_code == 0);
    data::DomainDataset ds = data::read_dataset(dir / "ds");
    CHECK(ds.tiles.size() == 4);
    fs::remove_all(dir);
}

TEST_CASE("prepare without labels yields an image-only dataset") {
    const fs::path dir = fresh_dir("unlabeled");
    for (int b = 0; b < 3; ++b)
        write_band(dir / ("B" + std::to_string(b + 2) + ".png"), 256, 256, b);
    RunResult r = run_cli("prepare " + band_args(dir) +
                              " --satellite sentinel2 --tile-size 128 --unlabeled --out ds",
                          dir);
    REQUIRE(r.exit_code == 0);
    data::DomainDataset ds = data::read_dataset(dir / "ds");
    CHECK(ds.tiles.size() == 4);
    CHECK_FALSE(ds.labeled);
    CHECK_FALSE(fs::exists(dir / "ds" / "labels"));
    fs::remove_all(dir);
}

TEST_CASE("prepare reports mismatched raster shapes with both sizes") {
    const fs::path dir = fresh_dir("mismatch");
    for (int b = 0; b < 3; ++b)
        write_band(dir / ("B" + std::to_string(b + 2) + ".png"), 448, 448, b);
    write_clc(dir / "clc.png", 300, 448);  // not an integer ratio

    RunResult r = run_cli("prepare " + band_args(dir) +
                              " --clc clc.png --satellite sentinel2 --out ds",
                          dir);
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("300x448") != std::string::npos);
    CHECK(r.output.find("448x448") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("synth is deterministic per seed and sizes both domains") {
    const fs::path dir = fresh_dir("synth");
    RunResult r1 = run_cli("synth --seed 5 --n-tiles 12 --tile-size 16 --shift identity "
                           "--out-source a/src --out-target a/tgt",
                           dir);
    REQUIRE(r1.exit_code == 0);
    RunResult r2 = run_cli("synth --seed 5 --n-tiles 12 --tile-size 16 --shift identity "
                           "--out-source b/src --out-target b/tgt",
                           dir);
    REQUIRE(r2.exit_code == 0);

    data::DomainDataset a_src = data::read_dataset(dir / "a" / "src");
    data::DomainDataset b_src = data::read_dataset(dir / "b" / "src");
    data::DomainDataset a_tgt = data::read_dataset(dir / "a" / "tgt");
    CHECK(a_src == b_src);
    CHECK(a_src.tiles.size() == 12);
    CHECK(a_tgt.tiles.size() == 12);
    // identity shift: paired tiles identical across domains
    for (size_t i = 0; i < a_src.tiles.size(); ++i)
        CHECK(a_src.tiles[i].image == a_tgt.tiles[i].image);
    fs::remove_all(dir);
}

TEST_CASE("train rejects unknown config keys before any compute") {
    const fs::path dir = fresh_dir("badcfg");
    RunResult synth = run_cli("synth --seed 2 --n-tiles 4 --tile-size 16 "
                              "--out-source src --out-target tgt",
                              dir);
    REQUIRE(synth.exit_code == 0);
    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << R"({"source":"src","target":"tgt","out":"run","trian":{}})";
    }
    RunResult r = run_cli("train --mode bdl --config cfg.json", dir);
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("trian") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "run"));
    fs::remove_all(dir);
}

TEST_CASE("train echoes preset weights into run metadata") {
    const fs::path dir = fresh_dir("preset");
    RunResult synth = run_cli("synth --seed 3 --n-tiles 6 --tile-size 16 "
                              "--out-source src --out-target tgt",
                              dir);
    REQUIRE(synth.exit_code == 0);
    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << R"({"source":"src","target":"tgt","out":"run","train":{
          "total_iterations":2,"batch_size":2,"seed":4,"preset":"wv2_to_dg",
          "translation":{"residual_blocks":1,"discriminator_layers":2,"base_width":4},
          "segmentation":{"backbone_depth":"tiny"}}})";
    }
    RunResult r = run_cli("train --mode bdl --config cfg.json", dir);
    REQUIRE(r.exit_code == 0);
    json meta = json::parse(std::ifstream(dir / "run" / "run_config.json"));
    CHECK(meta.at("config").at("preset") == "wv2_to_dg");
    CHECK(meta.at("config").at("weights").at("lambda_D") == 1.5);
    CHECK(meta.at("config").at("weights").at("lambda_perA") == 0.5);
    CHECK(meta.at("config").at("weights").at("lambda_perB") == 0.1);
    fs::remove_all(dir);
}

TEST_CASE("baseline smoke run exits 0 and leaves a checkpoint") {
    const fs::path dir = fresh_dir("baseline");
    RunResult synth = run_cli("synth --seed 6 --n-tiles 8 --tile-size 16 "
                              "--out-source src --out-target tgt",
                              dir);
    REQUIRE(synth.exit_code == 0);
    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << R"({"source":"src","target":"tgt","out":"run","train":{
          "total_iterations":5,"batch_size":2,"seed":4,
          "segmentation":{"backbone_depth":"tiny"}}})";
    }
    RunResult r = run_cli("train --mode baseline --config cfg.json", dir);
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(dir / "run" / "ckpt_5" / "segmenter.bin"));
    CHECK(fs::exists(dir / "run" / "loss_log.jsonl"));

    SUBCASE("rerun with the same seed reproduces the loss log") {
        RunResult again = run_cli("train --mode baseline --config cfg.json --out run2", dir);
        REQUIRE(again.exit_code == 0);
        std::ifstream a(dir / "run" / "loss_log.jsonl"), b(dir / "run2" / "loss_log.jsonl");
        std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        CHECK(sa == sb);
    }
    fs::remove_all(dir);
}

TEST_CASE("unknown flags and subcommands are fatal") {
    const fs::path dir = fresh_dir("flags");
    CHECK(run_cli("synth --bogus 1 --out-source a --out-target b", dir).exit_code == 2);
    CHECK(run_cli("frobnicate", dir).exit_code == 2);
    SUBCASE("--help succeeds for every command") {
        for (const char* cmd : {"prepare", "synth", "train", "translate", "eval", "report"}) {
            RunResult r = run_cli(std::string(cmd) + " --help", dir);
            CHECK(r.exit_code == 0);
            CHECK(r.output.find("--help") != std::string::npos);
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("eval rejects a translation checkpoint") {
    const fs::path dir = fresh_dir("wrongkind");
    RunResult synth = run_cli("synth --seed 8 --n-tiles 6 --tile-size 16 "
                              "--out-source src --out-target tgt",
                              dir);
    REQUIRE(synth.exit_code == 0);
    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << R"({"source":"src","target":"tgt","out":"run","train":{
          "total_iterations":2,"batch_size":2,"seed":4,
          "translation":{"residual_blocks":1,"discriminator_layers":2,"base_width":4},
          "segmentation":{"backbone_depth":"tiny"}}})";
    }
    REQUIRE(run_cli("train --mode bdl --config cfg.json", dir).exit_code == 0);
    RunResult r = run_cli("eval --checkpoint run/round_1/translation/ckpt_2/translation.bin "
                          "--dataset tgt --out evalout",
                          dir);
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("not a segmenter checkpoint") != std::string::npos);
    fs::remove_all(dir);
}
