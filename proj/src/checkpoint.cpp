#include "lulc/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace lulc::train {

namespace {

constexpr char kMagic[8] = {'L', 'U', 'L', 'C', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    LULC_CHECK_T(in.good(), DataError, "checkpoint: unexpected end of file");
    return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                      const std::vector<std::pair<std::string, nn::Tensor>>& tensors) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    LULC_CHECK_T(out.good(), DataError, "checkpoint: cannot open " << path << " for writing");

    out.write(kMagic, sizeof(kMagic));
    const std::string header = meta.dump();
    write_pod<uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    write_pod<uint64_t>(out, tensors.size());
    for (const auto& [name, t] : tensors) {
        write_pod<uint64_t>(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<uint32_t>(out, static_cast<uint32_t>(t.ndim()));
        for (int d : t.shape()) write_pod<int32_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(sizeof(double) * t.numel()));
    }
    LULC_CHECK_T(out.good(), DataError, "checkpoint: write failure at " << path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    LULC_CHECK_T(in.good(), DataError, "checkpoint: cannot open " << path);

    char magic[8];
    in.read(magic, sizeof(magic));
    LULC_CHECK_T(in.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, DataError,
                 "checkpoint: " << path << " is not a recognized checkpoint file");

    Checkpoint ck;
    const uint64_t header_len = read_pod<uint64_t>(in);
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    LULC_CHECK_T(in.good(), DataError, "checkpoint: truncated header in " << path);
    try {
        ck.meta = nlohmann::json::parse(header);
    } catch (const std::exception& e) {
        throw DataError("checkpoint: corrupt header in " + path.string() + ": " + e.what());
    }

    const uint64_t count = read_pod<uint64_t>(in);
    for (uint64_t i = 0; i < count; ++i) {
        const uint64_t name_len = read_pod<uint64_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        const uint32_t ndim = read_pod<uint32_t>(in);
        std::vector<int> shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = read_pod<int32_t>(in);
        nn::Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(sizeof(double) * t.numel()));
        LULC_CHECK_T(in.good(), DataError, "checkpoint: truncated tensor " << name << " in " << path);
        ck.tensors.emplace(std::move(name), std::move(t));
    }
    return ck;
}

}  // namespace lulc::train
