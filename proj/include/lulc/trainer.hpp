#pragma once

#include <filesystem>
#include <fstream>
#include <optional>

#include "lulc/checkpoint.hpp"
#include "lulc/data.hpp"
#include "lulc/losses.hpp"
#include "lulc/metrics.hpp"
#include "lulc/models.hpp"

namespace lulc::train {

struct TrainConfig {
    // schedule
    int total_iterations = 250000;  // paper-scale default
    int batch_size = 4;
    uint64_t seed = 1;
    int bdl_rounds = 2;
    int snapshot_every = 0;  // 0 = final checkpoint only
    // per-phase overrides; -1 falls back to total_iterations
    int baseline_iterations = -1;
    int translation_iterations = -1;
    int adapted_iterations = -1;
    // batch assembly
    bool augment = false;
    int crop_size = 0;  // 0 = full tile; must be divisible by 4 for translation
    // segmentation optimizer: momentum SGD with polynomial decay
    double seg_lr = 2.5e-4;
    double seg_momentum = 0.9;
    double seg_poly_power = 0.9;
    // adversarial optimizer: Adam with a low first-moment coefficient
    double gan_lr = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;

    losses::LossWeights weights;
    std::string preset_name;  // loss-weight preset the config was seeded from
    models::TranslationModelSpec translation;
    models::SegmentationModelSpec segmentation;

    int baseline_iters() const { return baseline_iterations > 0 ? baseline_iterations : total_iterations; }
    int translation_iters() const { return translation_iterations > 0 ? translation_iterations : total_iterations; }
    int adapted_iters() const { return adapted_iterations > 0 ? adapted_iterations : total_iterations; }

    void validate() const;
    nlohmann::json to_json() const;
    /// Strict parser: unknown keys are rejected before any compute.
    static TrainConfig from_json(const nlohmann::json& j);
    uint64_t config_hash() const;
};

/// Deterministic epoch-reshuffling sampler over tile indices.
class TileSampler {
public:
    TileSampler(size_t n_tiles, uint64_t seed, uint64_t phase_tag);
    int next();
    nlohmann::json state() const;
    void restore(const nlohmann::json& j);

private:
    void reshuffle();
    size_t n_;
    uint64_t seed_, tag_;
    std::vector<int> order_;
    uint64_t epoch_ = 0;
    size_t pos_ = 0;
};

struct Batch {
    nn::Tensor images;  // [N,3,H,W] in [-1,1]
    nn::LabelBatch labels;
    bool has_labels = false;
};

/// Pull batch_size tiles, optionally augmented, normalized to [-1,1].
Batch assemble_batch(const data::DomainDataset& ds, TileSampler& sampler, const TrainConfig& cfg,
                     uint64_t phase_tag, int iteration, bool with_labels);

/// JSON-lines loss log; one line per step, no wall-clock content.
class RunLogger {
public:
    RunLogger() = default;
    explicit RunLogger(const std::filesystem::path& file);
    void log(const std::string& phase, int step, const losses::LossBreakdown& bd,
             const nlohmann::json& extra_terms = {});

private:
    std::ofstream out_;
};

struct PhaseOutcome {
    std::vector<double> loss_trace;  // objective total per iteration
    int iterations = 0;
    std::filesystem::path final_checkpoint;
};

struct PhaseRun {
    std::filesystem::path ckpt_dir;  // empty = no checkpoints
    RunLogger* logger = nullptr;
    const Checkpoint* resume = nullptr;
};

/// Source-only supervised training of M (the no-adaptation reference).
/// A target dataset may be passed for interface parity; it is ignored.
PhaseOutcome train_segmenter_baseline(const TrainConfig& cfg, const data::DomainDataset& source,
                                      const data::DomainDataset* target,
                                      models::SegmenterNets& nets, const PhaseRun& run = {});

/// Adversarial translator training guided by a frozen segmenter. M_frozen may
/// be null only when every perceptual weight is zero.
PhaseOutcome train_translation(const TrainConfig& cfg, const data::DomainDataset& source,
                               const data::DomainDataset& target, models::TranslationNets& nets,
                               models::Segmenter* M_frozen, const PhaseRun& run = {},
                               uint64_t round_tag = 0);

/// Segmentation re-training on translated source with output-space alignment.
PhaseOutcome train_segmenter_adapted(const TrainConfig& cfg,
                                     const data::DomainDataset& translated_source,
                                     const data::DomainDataset& target,
                                     models::SegmenterNets& nets, const PhaseRun& run = {},
                                     uint64_t round_tag = 0);

/// Per-tile forward of F; labels carried over byte-identical.
data::DomainDataset translate_dataset(const models::ResnetGenerator& F,
                                      const data::DomainDataset& dataset, int batch_size = 4);

/// Pooled-confusion-matrix evaluation over a labeled dataset.
eval::EvalReport evaluate_segmenter(const models::Segmenter& M, const data::DomainDataset& dataset,
                                    int batch_size = 4, const std::string& report_name = "eval");

struct BdlResult {
    std::vector<eval::EvalReport> round_reports;  // baseline first, then per round
    int translation_phases = 0;
    int segmentation_phases = 0;
    std::filesystem::path final_segmenter_ckpt;
    std::filesystem::path final_translation_ckpt;
};

/// Full bidirectional schedule: baseline, then per round translation ->
/// translate source -> adapted segmentation. Emits per-round evaluation when
/// the target carries labels.
BdlResult run_bdl(const TrainConfig& cfg, const data::DomainDataset& source,
                  const data::DomainDataset& target, const std::filesystem::path& run_dir,
                  RunLogger* logger = nullptr);

// checkpoint helpers ---------------------------------------------------------

void save_segmenter_checkpoint(const std::filesystem::path& file, const models::SegmenterNets& nets,
                               int iteration, uint64_t config_hash, const nlohmann::json& extra,
                               const std::vector<std::pair<std::string, nn::Tensor>>& opt_state = {});

void save_translation_checkpoint(const std::filesystem::path& file,
                                 const models::TranslationNets& nets, int iteration,
                                 uint64_t config_hash, const nlohmann::json& extra,
                                 const std::vector<std::pair<std::string, nn::Tensor>>& opt_state = {});

/// Rebuild nets from a checkpoint. When expect_spec is given, a differing
/// stored spec is an error.
models::SegmenterNets load_segmenter_checkpoint(const Checkpoint& ck,
                                                const models::SegmentationModelSpec* expect_spec = nullptr);
models::TranslationNets load_translation_checkpoint(const Checkpoint& ck,
                                                    const models::TranslationModelSpec* expect_spec = nullptr);

}  // namespace lulc::train
