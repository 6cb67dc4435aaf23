#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lulc/tensor.hpp"

namespace lulc::train {

/// Versioned binary container: JSON header (spec descriptor, iteration,
/// config hash, metric history) followed by named raw-double tensors.
/// Round-trips are bit-exact.
void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                      const std::vector<std::pair<std::string, nn::Tensor>>& tensors);

struct Checkpoint {
    nlohmann::json meta;
    std::map<std::string, nn::Tensor> tensors;
};

Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace lulc::train
