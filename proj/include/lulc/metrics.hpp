#pragma once

#include <array>
#include <cstdint>

#include <nlohmann/json.hpp>

#include "lulc/data.hpp"
#include "lulc/tensor.hpp"

namespace lulc::eval {

/// 7x7 pixel-count grid, rows = ground truth, columns = prediction.
/// Accumulation is in-place; merging is element-wise addition, so per-tile
/// matrices may be computed independently and combined in any order.
class ConfusionMatrix {
public:
    static constexpr int kN = data::LabelSchema::kNumClasses;

    void accumulate(const data::LabelMap& pred, const data::LabelMap& gt);
    void merge(const ConfusionMatrix& other);

    uint64_t at(int gt, int pred) const { return counts_[static_cast<size_t>(gt) * kN + pred]; }
    uint64_t& at(int gt, int pred) { return counts_[static_cast<size_t>(gt) * kN + pred]; }
    uint64_t total() const;
    uint64_t gt_count(int cls) const;

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::array<uint64_t, kN * kN> counts_{};
};

/// Functional accumulate: returns an updated copy, leaving cm untouched.
ConfusionMatrix accumulated(const ConfusionMatrix& cm, const data::LabelMap& pred,
                            const data::LabelMap& gt);

/// Per-pixel argmax over channels of sample n in an [N,C,H,W] logit tensor;
/// ties break toward the lowest class code.
data::LabelMap argmax_predict(const nn::Tensor& logits, int sample = 0);

/// IoU_i = TP_i / (TP_i + FP_i + FN_i) as fractions; zero-union classes get 0.
std::array<double, ConfusionMatrix::kN> iou_per_class(const ConfusionMatrix& cm);

/// Arithmetic mean over all 7 classes (zero-union classes stay in the divisor).
double miou(const ConfusionMatrix& cm);

struct EvalReport {
    std::string name;
    std::array<double, ConfusionMatrix::kN> per_class_iou_pct{};
    double miou_pct = 0.0;
    std::array<uint64_t, ConfusionMatrix::kN> gt_pixels{};
    uint64_t total_pixels = 0;
    nlohmann::json metadata;

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
};

EvalReport make_report(const std::string& name, const ConfusionMatrix& cm,
                       nlohmann::json metadata = {});

/// Class-column order used by every rendering.
extern const std::array<const char*, ConfusionMatrix::kN> kClassColumns;

std::string render_table(const std::vector<EvalReport>& reports);
std::string render_csv(const std::vector<EvalReport>& reports);
nlohmann::json render_json(const std::vector<EvalReport>& reports);

}  // namespace lulc::eval
