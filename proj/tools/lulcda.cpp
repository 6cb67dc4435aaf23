// lulcda - land-cover domain adaptation toolkit.
// Subcommands: prepare, synth, train, translate, eval, report.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "lulc/png_io.hpp"
#include "lulc/trainer.hpp"
#include "raster_ingest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lulc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    LULC_CHECK_T(in.good(), ConfigError, "cannot open " << path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const std::exception& e) {
        throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json_file(const fs::path& path, const json& j) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    LULC_CHECK_T(out.good(), DataError, "cannot write " << path);
    out << j.dump(2) << "\n";
}

void require_dataset_dir(const fs::path& root, const char* role) {
    LULC_CHECK_T(fs::exists(root / "manifest.json"), ConfigError,
                 role << " dataset path " << root << " has no manifest.json");
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

struct PrepareArgs {
    std::vector<std::string> band_args;  // id=path
    std::string rgb_path;                // alternative: one 3-channel 8-bit image
    std::string clc_path;
    std::string satellite = "sentinel2";
    int tile_size = 0;  // 0 = preset default
    std::pair<double, double> clip{0.02, 0.98};
    std::string ref_stats_path;
    bool unlabeled = false;
    std::string name;
    std::string split = "train";
    std::string out;
};

int cmd_prepare(const PrepareArgs& a) {
    const ingest::SatellitePreset& preset = ingest::satellite_preset(a.satellite);
    LULC_CHECK_T(!a.out.empty(), ConfigError, "prepare: --out is required");
    LULC_CHECK_T(!a.band_args.empty() || !a.rgb_path.empty(), ConfigError,
                 "prepare: provide --band id=path entries or --rgb image");
    LULC_CHECK_T(a.unlabeled || !a.clc_path.empty(), ConfigError,
                 "prepare: provide --clc labels or pass --unlabeled");

    // assemble the scene
    data::RasterScene scene;
    scene.origin_id = preset.name;
    scene.bit_depth = preset.bit_depth;
    if (!a.rgb_path.empty()) {
        int h = 0, w = 0;
        scene.planes = ingest::read_rgb_planes(a.rgb_path, h, w);
        scene.height = h;
        scene.width = w;
        scene.bit_depth = 8;
        for (const std::string& id : {"R", "G", "B"}) {
            const ingest::SatellitePreset& dg = ingest::satellite_preset("deepglobe");
            for (const data::BandSpec& b : dg.bands)
                if (b.band_id == id) scene.bands.push_back(b);
        }
    } else {
        for (const std::string& arg : a.band_args) {
            const size_t eq = arg.find('=');
            LULC_CHECK_T(eq != std::string::npos, ConfigError,
                         "prepare: --band expects id=path, got \"" << arg << "\"");
            const std::string id = arg.substr(0, eq);
            const std::string path = arg.substr(eq + 1);
            int h = 0, w = 0;
            std::vector<uint16_t> plane = ingest::read_band_plane(path, h, w);
            if (scene.height == 0) {
                scene.height = h;
                scene.width = w;
            }
            LULC_CHECK_T(h == scene.height && w == scene.width, DataError,
                         "band " << id << " is " << h << "x" << w << " but earlier bands are "
                                 << scene.height << "x" << scene.width);
            bool known = false;
            for (const data::BandSpec& b : preset.bands)
                if (b.band_id == id) {
                    scene.bands.push_back(b);
                    known = true;
                }
            LULC_CHECK_T(known, ConfigError,
                         "band id \"" << id << "\" is not part of preset " << preset.name);
            scene.planes.push_back(std::move(plane));
        }
    }
    scene.pixel_size_m = preset.bands.front().resolution_m;
    scene.validate();

    // quantize -> normalize -> select RGB
    if (scene.bit_depth > 8) scene = data::quantize_to_8bit(scene, a.clip);
    if (!a.ref_stats_path.empty()) {
        const json js = read_json_file(a.ref_stats_path);
        std::vector<data::BandStats> ref;
        for (const json& b : js.at("bands"))
            ref.push_back({b.at("mean").get<double>(), b.at("std").get<double>()});
        scene = data::normalize_illumination(scene, ref);
    }
    std::vector<std::string> order = preset.rgb_order;
    if (!a.rgb_path.empty()) order = {"R", "G", "B"};
    scene = data::select_bands(scene, order);

    // labels
    std::optional<data::LabelMap> labels;
    uint64_t unknown_cells = 0;
    if (!a.clc_path.empty()) {
        data::IntGrid clc = ingest::read_clc_raster(a.clc_path);
        data::RemapResult remap = data::remap_clc_labels(clc, data::LabelSchema::clc_default());
        unknown_cells = remap.unknown_cells;
        data::LabelMap lm = std::move(remap.grid);
        if (lm.h != scene.height || lm.w != scene.width) {
            const bool integral = lm.h > 0 && lm.w > 0 && scene.height % lm.h == 0 &&
                                  scene.width % lm.w == 0 &&
                                  scene.height / lm.h == scene.width / lm.w;
            LULC_CHECK_T(integral, DataError,
                         "label raster " << lm.h << "x" << lm.w
                                         << " cannot be upsampled to match image raster "
                                         << scene.height << "x" << scene.width);
            lm = data::upsample_labels(lm, static_cast<double>(scene.height / lm.h));
        }
        labels = std::move(lm);
    }

    const int tile_size = a.tile_size > 0 ? a.tile_size : preset.tile_size;
    data::DomainDataset ds;
    ds.name = a.name.empty() ? preset.name + "_" + a.split : a.name;
    ds.split = a.split;
    ds.labeled = labels.has_value();
    ds.tile_size = tile_size;
    ds.tiles = data::tile_raster(scene, labels ? &*labels : nullptr, tile_size, ds.name);
    data::write_dataset(ds, a.out);

    // summary with class histogram
    std::array<uint64_t, 7> histogram{};
    for (const data::TilePair& t : ds.tiles)
        if (t.label)
            for (uint8_t v : t.label->data) ++histogram[v];
    json stats = json::array();
    for (const data::BandStats& b : data::band_stats(scene))
        stats.push_back({{"mean", b.mean}, {"std", b.stddev}});
    json summary = {{"dataset", ds.name},
                    {"tiles", ds.tiles.size()},
                    {"tile_size", tile_size},
                    {"labeled", ds.labeled},
                    {"unknown_clc_cells", unknown_cells},
                    {"band_stats", stats}};
    if (ds.labeled) {
        json hist;
        for (int c = 0; c < 7; ++c) hist[eval::kClassColumns[c]] = histogram[c];
        summary["class_histogram"] = hist;
    }
    write_json_file(fs::path(a.out) / "summary.json", summary);
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(uint64_t seed, int n_tiles, int tile_size, const std::string& shift,
              const std::string& out_source, const std::string& out_target,
              const std::string& split) {
    auto [source, target] =
        data::generate_synthetic_domains(seed, n_tiles, tile_size, data::ShiftSpec::preset(shift));
    source.split = target.split = split;
    data::write_dataset(source, out_source);
    data::write_dataset(target, out_target);
    std::cout << "wrote " << source.tiles.size() << " tiles per domain to " << out_source
              << " and " << out_target << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const std::string& mode, const fs::path& config_path, const std::string& out_override,
              uint64_t seed_override, bool has_seed_override) {
    LULC_CHECK_T(mode == "baseline" || mode == "bdl", ConfigError,
                 "train: --mode must be baseline or bdl, got " << mode);
    json j = read_json_file(config_path);
    for (const auto& [key, value] : j.items())
        LULC_CHECK_T(key == "source" || key == "target" || key == "out" || key == "train",
                     ConfigError, "unknown config key \"" << key << "\" in run config");

    LULC_CHECK_T(j.contains("source"), ConfigError, "run config needs a \"source\" dataset path");
    const fs::path source_path = j.at("source").get<std::string>();
    std::optional<fs::path> target_path;
    if (j.contains("target")) target_path = fs::path(j.at("target").get<std::string>());

    train::TrainConfig cfg =
        j.contains("train") ? train::TrainConfig::from_json(j.at("train")) : train::TrainConfig{};
    if (has_seed_override) cfg.seed = seed_override;

    fs::path run_dir = out_override.empty()
                           ? fs::path(j.value("out", std::string("runs/run")))
                           : fs::path(out_override);

    // fail on bad paths before any compute
    require_dataset_dir(source_path, "source");
    if (target_path) require_dataset_dir(*target_path, "target");
    LULC_CHECK_T(mode == "baseline" || target_path.has_value(), ConfigError,
                 "bdl mode requires a target dataset");

    const data::DomainDataset source = data::read_dataset(source_path);
    std::optional<data::DomainDataset> target;
    if (target_path) target = data::read_dataset(*target_path);

    fs::create_directories(run_dir);
    json run_meta = {{"mode", mode},
                     {"source", source_path.string()},
                     {"target", target_path ? target_path->string() : ""},
                     {"config", cfg.to_json()},
                     {"config_hash", cfg.config_hash()}};
    write_json_file(run_dir / "run_config.json", run_meta);

    train::RunLogger logger(run_dir / "loss_log.jsonl");
    std::vector<eval::EvalReport> reports;

    if (mode == "baseline") {
        models::SegmenterNets nets =
            models::build_segmenter(cfg.segmentation, hash_combine(cfg.seed, 0x5E6));
        train::PhaseRun run;
        run.ckpt_dir = run_dir;
        run.logger = &logger;
        train::train_segmenter_baseline(cfg, source, target ? &*target : nullptr, nets, run);
        if (target && target->labeled)
            reports.push_back(
                train::evaluate_segmenter(*nets.M, *target, cfg.batch_size, "baseline"));
    } else {
        train::BdlResult res = train::run_bdl(cfg, source, *target, run_dir, &logger);
        reports = res.round_reports;
    }

    if (!reports.empty()) {
        const std::string tag = target ? target->name : source.name;
        write_json_file(run_dir / ("eval_" + tag + ".json"), eval::render_json(reports));
        std::ofstream csv(run_dir / ("eval_" + tag + ".csv"));
        csv << eval::render_csv(reports);
        std::cout << eval::render_table(reports);
    }
    std::cout << "run artifacts in " << run_dir << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// translate / eval / report
// ---------------------------------------------------------------------------

int cmd_translate(const fs::path& ckpt_path, const fs::path& dataset_path, const fs::path& out) {
    require_dataset_dir(dataset_path, "input");
    train::Checkpoint ck = train::read_checkpoint(ckpt_path);
    models::TranslationNets nets = train::load_translation_checkpoint(ck);
    data::DomainDataset ds = data::read_dataset(dataset_path);
    data::DomainDataset translated = train::translate_dataset(*nets.F, ds);
    data::write_dataset(translated, out);
    std::cout << "translated " << translated.tiles.size() << " tiles into " << out << "\n";
    return kExitOk;
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& dataset_path, const fs::path& out) {
    require_dataset_dir(dataset_path, "input");
    train::Checkpoint ck = train::read_checkpoint(ckpt_path);
    models::SegmenterNets nets = train::load_segmenter_checkpoint(ck);
    data::DomainDataset ds = data::read_dataset(dataset_path);
    eval::EvalReport report = train::evaluate_segmenter(*nets.M, ds, 4, ds.name);
    fs::create_directories(out);
    write_json_file(out / ("eval_" + ds.name + ".json"), report.to_json());
    std::ofstream csv(out / ("eval_" + ds.name + ".csv"));
    csv << eval::render_csv({report});
    std::cout << eval::render_table({report});
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& format) {
    std::vector<eval::EvalReport> reports;
    for (const std::string& p : inputs) {
        const json j = read_json_file(p);
        if (j.is_array())
            for (const json& r : j) reports.push_back(eval::EvalReport::from_json(r));
        else
            reports.push_back(eval::EvalReport::from_json(j));
    }
    LULC_CHECK_T(!reports.empty(), ConfigError, "report: no evaluation files given");
    if (format == "table")
        std::cout << eval::render_table(reports);
    else if (format == "csv")
        std::cout << eval::render_csv(reports);
    else if (format == "json")
        std::cout << eval::render_json(reports).dump(2) << "\n";
    else
        throw ConfigError("report: unknown format \"" + format + "\" (table|csv|json)");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lulcda - cross-satellite land-cover segmentation with domain adaptation"};
    app.require_subcommand(1);

    // prepare ---------------------------------------------------------------
    PrepareArgs pa;
    CLI::App* prepare = app.add_subcommand("prepare", "build a tiled dataset from rasters");
    prepare->add_option("--band", pa.band_args, "band as id=path (repeatable)");
    prepare->add_option("--rgb", pa.rgb_path, "single 3-channel 8-bit image instead of bands");
    prepare->add_option("--clc", pa.clc_path, "CLC label raster (single-channel integer)");
    prepare->add_option("--satellite", pa.satellite, "sentinel2|worldview2|pleiades1|deepglobe")
        ->default_val("sentinel2");
    prepare->add_option("--tile-size", pa.tile_size, "tile edge in pixels (preset default if 0)");
    prepare->add_option("--clip", pa.clip, "quantization clip percentiles (low high)");
    prepare->add_option("--ref-stats", pa.ref_stats_path, "per-band mean/std JSON for illumination");
    prepare->add_flag("--unlabeled", pa.unlabeled, "build an image-only dataset");
    prepare->add_option("--name", pa.name, "dataset name");
    prepare->add_option("--split", pa.split, "train|val|test")->default_val("train");
    prepare->add_option("--out", pa.out, "output dataset directory")->required();

    // synth -----------------------------------------------------------------
    uint64_t synth_seed = 1;
    int synth_tiles = 200, synth_tile_size = 24;
    std::string synth_shift = "default", synth_out_src, synth_out_tgt, synth_split = "train";
    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic two-domain benchmark");
    synth->add_option("--seed", synth_seed, "generator seed")->default_val(1);
    synth->add_option("--n-tiles", synth_tiles, "tiles per domain")->default_val(200);
    synth->add_option("--tile-size", synth_tile_size, "tile edge in pixels")->default_val(24);
    synth->add_option("--shift", synth_shift, "identity|default|strong")->default_val("default");
    synth->add_option("--out-source", synth_out_src, "source dataset directory")->required();
    synth->add_option("--out-target", synth_out_tgt, "target dataset directory")->required();
    synth->add_option("--split", synth_split, "train|val|test")->default_val("train");

    // train -----------------------------------------------------------------
    std::string train_mode = "bdl", train_out;
    std::string train_config;
    uint64_t train_seed = 0;
    CLI::App* train_cmd = app.add_subcommand("train", "run baseline or bidirectional training");
    train_cmd->add_option("--mode", train_mode, "baseline|bdl")->default_val("bdl");
    train_cmd->add_option("--config", train_config, "run config JSON")->required();
    train_cmd->add_option("--out", train_out, "run directory (overrides config)");
    CLI::Option* seed_opt = train_cmd->add_option("--seed", train_seed, "seed override");

    // translate ---------------------------------------------------------------
    std::string tr_ckpt, tr_dataset, tr_out;
    CLI::App* translate = app.add_subcommand("translate", "apply a trained translator to a dataset");
    translate->add_option("--checkpoint", tr_ckpt, "translation checkpoint")->required();
    translate->add_option("--dataset", tr_dataset, "input dataset directory")->required();
    translate->add_option("--out", tr_out, "output dataset directory")->required();

    // eval ------------------------------------------------------------------
    std::string ev_ckpt, ev_dataset, ev_out = ".";
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a segmenter checkpoint");
    eval_cmd->add_option("--checkpoint", ev_ckpt, "segmenter checkpoint")->required();
    eval_cmd->add_option("--dataset", ev_dataset, "labeled dataset directory")->required();
    eval_cmd->add_option("--out", ev_out, "report output directory")->default_val(".");

    // report ----------------------------------------------------------------
    std::vector<std::string> rp_inputs;
    std::string rp_format = "table";
    CLI::App* report = app.add_subcommand("report", "render stored evaluation reports");
    report->add_option("--in", rp_inputs, "evaluation JSON files")->required();
    report->add_option("--format", rp_format, "table|csv|json")->default_val("table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (prepare->parsed()) return cmd_prepare(pa);
        if (synth->parsed())
            return cmd_synth(synth_seed, synth_tiles, synth_tile_size, synth_shift, synth_out_src,
                             synth_out_tgt, synth_split);
        if (train_cmd->parsed())
            return cmd_train(train_mode, train_config, train_out, train_seed, !seed_opt->empty());
        if (translate->parsed()) return cmd_translate(tr_ckpt, tr_dataset, tr_out);
        if (eval_cmd->parsed()) return cmd_eval(ev_ckpt, ev_dataset, ev_out);
        if (report->parsed()) return cmd_report(rp_inputs, rp_format);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}
