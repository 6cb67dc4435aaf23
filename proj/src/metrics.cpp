#include "lulc/metrics.hpp"

#include <iomanip>
#include <sstream>

namespace lulc::eval {

const std::array<const char*, ConfusionMatrix::kN> kClassColumns = {
    "Unknown", "Urban", "Agriculture", "Rangeland", "Forest", "Water", "Barren"};

void ConfusionMatrix::accumulate(const data::LabelMap& pred, const data::LabelMap& gt) {
    LULC_CHECK_T(pred.h == gt.h && pred.w == gt.w, DataError,
                 "confusion accumulate: prediction " << pred.h << "x" << pred.w
                                                     << " vs ground truth " << gt.h << "x" << gt.w);
    for (size_t i = 0; i < gt.data.size(); ++i) {
        const int g = gt.data[i], p = pred.data[i];
        LULC_CHECK_T(g < kN && p < kN, DataError,
                     "confusion accumulate: class code out of range (gt " << g << ", pred " << p
                                                                          << ")");
        ++counts_[static_cast<size_t>(g) * kN + p];
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

uint64_t ConfusionMatrix::total() const {
    uint64_t t = 0;
    for (uint64_t c : counts_) t += c;
    return t;
}

uint64_t ConfusionMatrix::gt_count(int cls) const {
    uint64_t t = 0;
    for (int p = 0; p < kN; ++p) t += at(cls, p);
    return t;
}

ConfusionMatrix accumulated(const ConfusionMatrix& cm, const data::LabelMap& pred,
                            const data::LabelMap& gt) {
    ConfusionMatrix out = cm;
    out.accumulate(pred, gt);
    return out;
}

data::LabelMap argmax_predict(const nn::Tensor& logits, int sample) {
    LULC_CHECK(logits.ndim() == 4, "argmax_predict expects [N,C,H,W] logits");
    const int N = logits.dim(0), C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
    LULC_CHECK(sample >= 0 && sample < N, "argmax_predict: sample index out of range");
    data::LabelMap out(H, W);
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            int best = 0;
            double best_v = logits.at4(sample, 0, h, w);
            LULC_CHECK(std::isfinite(best_v), "argmax_predict: non-finite logit");
            for (int c = 1; c < C; ++c) {
                const double v = logits.at4(sample, c, h, w);
                LULC_CHECK(std::isfinite(v), "argmax_predict: non-finite logit");
                if (v > best_v) {  // strict: ties keep the lowest code
                    best_v = v;
                    best = c;
                }
            }
            out.at(h, w) = static_cast<uint8_t>(best);
        }
    return out;
}

std::array<double, ConfusionMatrix::kN> iou_per_class(const ConfusionMatrix& cm) {
    LULC_CHECK_T(cm.total() > 0, DataError, "iou_per_class: empty confusion matrix");
    std::array<double, ConfusionMatrix::kN> out{};
    for (int c = 0; c < ConfusionMatrix::kN; ++c) {
        const uint64_t tp = cm.at(c, c);
        uint64_t fp = 0, fn = 0;
        for (int k = 0; k < ConfusionMatrix::kN; ++k) {
            if (k == c) continue;
            fp += cm.at(k, c);
            fn += cm.at(c, k);
        }
        const uint64_t uni = tp + fp + fn;
        out[c] = uni == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(uni);
    }
    return out;
}

double miou(const ConfusionMatrix& cm) {
    const auto ious = iou_per_class(cm);
    double s = 0.0;
    for (double v : ious) s += v;
    return s / ConfusionMatrix::kN;
}

EvalReport make_report(const std::string& name, const ConfusionMatrix& cm,
                       nlohmann::json metadata) {
    EvalReport r;
    r.name = name;
    const auto ious = iou_per_class(cm);
    for (int c = 0; c < ConfusionMatrix::kN; ++c) {
        r.per_class_iou_pct[c] = 100.0 * ious[c];
        r.gt_pixels[c] = cm.gt_count(c);
    }
    r.miou_pct = 100.0 * miou(cm);
    r.total_pixels = cm.total();
    r.metadata = std::move(metadata);
    return r;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json per_class;
    for (int c = 0; c < ConfusionMatrix::kN; ++c) per_class[kClassColumns[c]] = per_class_iou_pct[c];
    nlohmann::json gt;
    for (int c = 0; c < ConfusionMatrix::kN; ++c) gt[kClassColumns[c]] = gt_pixels[c];
    return {{"name", name},
            {"per_class_iou_pct", per_class},
            {"miou_pct", miou_pct},
            {"gt_pixels", gt},
            {"total_pixels", total_pixels},
            {"metadata", metadata}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport r;
    r.name = j.at("name").get<std::string>();
    for (int c = 0; c < ConfusionMatrix::kN; ++c) {
        r.per_class_iou_pct[c] = j.at("per_class_iou_pct").at(kClassColumns[c]).get<double>();
        r.gt_pixels[c] = j.at("gt_pixels").at(kClassColumns[c]).get<uint64_t>();
    }
    r.miou_pct = j.at("miou_pct").get<double>();
    r.total_pixels = j.at("total_pixels").get<uint64_t>();
    if (j.contains("metadata")) r.metadata = j.at("metadata");
    return r;
}

namespace {

std::string fmt2(double v) {
    std::ostringstream oss;
    oss << std::fixed << std::setprecision(2) << v;
    return oss.str();
}

}  // namespace

std::string render_table(const std::vector<EvalReport>& reports) {
    LULC_CHECK(!reports.empty(), "render_table: no reports");
    std::ostringstream oss;
    size_t name_w = 12;
    for (const EvalReport& r : reports) name_w = std::max(name_w, r.name.size() + 2);
    oss << std::left << std::setw(static_cast<int>(name_w)) << "Network";
    for (const char* col : kClassColumns) oss << std::right << std::setw(13) << col;
    oss << std::right << std::setw(13) << "MIoU" << "\n";
    for (const EvalReport& r : reports) {
        oss << std::left << std::setw(static_cast<int>(name_w)) << r.name;
        for (int c = 0; c < ConfusionMatrix::kN; ++c)
            oss << std::right << std::setw(13) << fmt2(r.per_class_iou_pct[c]);
        oss << std::right << std::setw(13) << fmt2(r.miou_pct) << "\n";
    }
    return oss.str();
}

std::string render_csv(const std::vector<EvalReport>& reports) {
    LULC_CHECK(!reports.empty(), "render_csv: no reports");
    std::ostringstream oss;
    oss << "Network";
    for (const char* col : kClassColumns) oss << "," << col;
    oss << ",MIoU\n";
    for (const EvalReport& r : reports) {
        oss << r.name;
        for (int c = 0; c < ConfusionMatrix::kN; ++c) oss << "," << fmt2(r.per_class_iou_pct[c]);
        oss << "," << fmt2(r.miou_pct) << "\n";
    }
    return oss.str();
}

nlohmann::json render_json(const std::vector<EvalReport>& reports) {
    LULC_CHECK(!reports.empty(), "render_json: no reports");
    nlohmann::json arr = nlohmann::json::array();
    for (const EvalReport& r : reports) arr.push_back(r.to_json());
    return arr;
}

}  // namespace lulc::eval
