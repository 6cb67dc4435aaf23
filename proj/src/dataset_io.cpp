#include <fstream>

#include <nlohmann/json.hpp>

#include "lulc/data.hpp"
#include "lulc/png_io.hpp"

namespace lulc::data {

using nlohmann::json;

json write_dataset(const DomainDataset& dataset, const std::filesystem::path& root) {
    dataset.validate();
    namespace fs = std::filesystem;
    fs::create_directories(root / "images");
    const bool any_labels = [&] {
        for (const TilePair& t : dataset.tiles)
            if (t.label) return true;
        return false;
    }();
    if (any_labels) fs::create_directories(root / "labels");

    json manifest;
    manifest["name"] = dataset.name;
    manifest["tile_size"] = dataset.tile_size;
    manifest["split"] = dataset.split;
    manifest["labeled"] = dataset.labeled;
    json tiles = json::array();
    for (const TilePair& t : dataset.tiles) {
        write_png(root / "images" / (t.tile_id + ".png"), t.image);
        if (t.label) {
            ImageU8 lbl(t.label->h, t.label->w, 1);
            lbl.data = t.label->data;
            write_png(root / "labels" / (t.tile_id + ".png"), lbl);
        }
        tiles.push_back({{"id", t.tile_id}});
    }
    manifest["tiles"] = std::move(tiles);

    // tiles first, manifest last: a readable manifest implies a complete set
    const fs::path tmp = root / "manifest.json.tmp";
    {
        std::ofstream out(tmp);
        LULC_CHECK_T(out.good(), DataError, "write_dataset: cannot write manifest under " << root);
        out << manifest.dump(2) << "\n";
    }
    fs::rename(tmp, root / "manifest.json");
    return manifest;
}

DomainDataset read_dataset(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = root / "manifest.json";
    LULC_CHECK_T(fs::exists(manifest_path), DataError,
                 "read_dataset: no manifest.json under " << root);

    json manifest;
    try {
        std::ifstream in(manifest_path);
        in >> manifest;
    } catch (const std::exception& e) {
        throw DataError("read_dataset: malformed manifest " + manifest_path.string() + ": " +
                        e.what());
    }

    DomainDataset ds;
    try {
        ds.name = manifest.at("name").get<std::string>();
        ds.tile_size = manifest.at("tile_size").get<int>();
        ds.split = manifest.at("split").get<std::string>();
        ds.labeled = manifest.at("labeled").get<bool>();
    } catch (const json::exception& e) {
        throw DataError("read_dataset: manifest missing required field: " + std::string(e.what()));
    }

    for (const json& entry : manifest.at("tiles")) {
        TilePair t;
        t.tile_id = entry.at("id").get<std::string>();
        t.domain_id = ds.name;
        t.image = read_png(root / "images" / (t.tile_id + ".png"));
        LULC_CHECK_T(t.image.c == 3, DataError,
                     "read_dataset: tile " << t.tile_id << " image is not 3-channel");
        const fs::path label_path = root / "labels" / (t.tile_id + ".png");
        if (ds.labeled || fs::exists(label_path)) {
            LULC_CHECK_T(fs::exists(label_path), DataError,
                         "read_dataset: tile " << t.tile_id << " is missing its label file");
            ImageU8 lbl = read_png(label_path);
            LULC_CHECK_T(lbl.c == 1, DataError,
                         "read_dataset: tile " << t.tile_id << " label is not single-channel");
            LULC_CHECK_T(lbl.h == t.image.h && lbl.w == t.image.w, DataError,
                         "read_dataset: tile " << t.tile_id << " image " << t.image.h << "x"
                                               << t.image.w << " vs label " << lbl.h << "x" << lbl.w
                                               << " size mismatch");
            LabelMap lm(lbl.h, lbl.w);
            lm.data = std::move(lbl.data);
            for (uint8_t v : lm.data)
                LULC_CHECK_T(v < LabelSchema::kNumClasses, DataError,
                             "read_dataset: tile " << t.tile_id << " has label value " << int(v)
                                                   << " > 6");
            t.label = std::move(lm);
        }
        ds.tiles.push_back(std::move(t));
    }
    ds.validate();
    return ds;
}

}  // namespace lulc::data
