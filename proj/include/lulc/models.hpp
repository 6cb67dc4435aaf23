#pragma once

#include <memory>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "lulc/nn.hpp"

namespace lulc::models {

struct TranslationModelSpec {
    int residual_blocks = 9;
    int discriminator_layers = 3;
    int base_width = 64;

    static TranslationModelSpec preset(const std::string& name);  // paper | tiny
    void validate() const;
    nlohmann::json to_json() const;
    static TranslationModelSpec from_json(const nlohmann::json& j);
    bool operator==(const TranslationModelSpec&) const = default;
};

struct SegmentationModelSpec {
    std::string variant = "v2_like";  // v2_like | v3plus_like
    int n_classes = 7;
    std::string backbone_depth = "paper";  // tiny | small | paper
    bool pretrained_init = false;
    std::string pretrained_path;  // checkpoint supplying initial backbone weights

    static SegmentationModelSpec preset(const std::string& name);
    void validate() const;
    nlohmann::json to_json() const;
    static SegmentationModelSpec from_json(const nlohmann::json& j);
    bool operator==(const SegmentationModelSpec&) const = default;
};

/// CycleGAN-style image translator: 7x7 stem, two stride-2 downsamplings,
/// residual trunk, two nearest+conv upsamplings, tanh output in [-1,1].
class ResnetGenerator {
public:
    ResnetGenerator(const TranslationModelSpec& spec, uint64_t seed);
    nn::Var forward(const nn::Var& x) const;
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    const TranslationModelSpec& spec() const { return spec_; }

private:
    TranslationModelSpec spec_;
    nn::ParamStore params_;
    struct Block {
        nn::Conv2dLayer c1, c2;
    };
    nn::Conv2dLayer stem_, down1_, down2_, up1_, up2_, head_, color_;
    std::vector<Block> blocks_;
};

/// PatchGAN discriminator: stacked stride-2 4x4 convolutions ending in a
/// realness grid strictly smaller than the input.
class PatchDiscriminator {
public:
    PatchDiscriminator(int in_channels, int layers, int base_width, uint64_t seed);
    nn::Var forward(const nn::Var& x) const;
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    int layers() const { return layers_; }

private:
    int in_channels_, layers_;
    nn::ParamStore params_;
    std::vector<nn::Conv2dLayer> convs_;
    nn::Conv2dLayer head_;
};

/// Dilated-residual segmentation network with an atrous pyramid head; the
/// v3plus_like variant adds an encoder-decoder refinement path. Logits are
/// returned at input resolution.
class Segmenter {
public:
    Segmenter(const SegmentationModelSpec& spec, uint64_t seed);
    nn::Var forward(const nn::Var& x) const;  // [N,3,H,W] -> [N,n_classes,H,W]
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    const SegmentationModelSpec& spec() const { return spec_; }

private:
    struct Block {
        nn::Conv2dLayer c1, c2;
        nn::InstanceNorm2dLayer n1, n2;
        nn::Conv2dLayer proj;  // undefined weights when identity skip
        nn::InstanceNorm2dLayer proj_n;
        bool has_proj = false;
    };
    nn::Var run_block(const Block& b, const nn::Var& x) const;

    SegmentationModelSpec spec_;
    nn::ParamStore params_;

    nn::Conv2dLayer stem_;
    nn::InstanceNorm2dLayer stem_n_;
    std::vector<Block> stage1_, stage2_;

    // v2 head: per-rate class convolutions, summed
    std::vector<nn::Conv2dLayer> aspp_class_;

    // v3+ head: pyramid -> fuse -> decoder with low-level skip
    std::vector<nn::Conv2dLayer> aspp_branch_;
    std::vector<nn::InstanceNorm2dLayer> aspp_branch_n_;
    nn::Conv2dLayer aspp_pool_conv_, aspp_fuse_, low_reduce_, dec_conv_, classifier_;
    nn::InstanceNorm2dLayer aspp_pool_n_, aspp_fuse_n_, low_reduce_n_, dec_n_;

    std::vector<int> aspp_rates_;
};

struct TranslationNets {
    std::shared_ptr<ResnetGenerator> F;      // source -> target
    std::shared_ptr<ResnetGenerator> F_inv;  // target -> source (independent weights)
    std::shared_ptr<PatchDiscriminator> D_T; // judges target-space images
    std::shared_ptr<PatchDiscriminator> D_S; // judges source-space images
    TranslationModelSpec spec;
};

struct SegmenterNets {
    std::shared_ptr<Segmenter> M;
    std::shared_ptr<PatchDiscriminator> D_out;  // judges segmentation probability maps
    SegmentationModelSpec spec;
};

struct ModelHandles {
    TranslationNets translation;
    SegmenterNets segmentation;
};

TranslationNets build_translation(const TranslationModelSpec& spec, uint64_t seed);
SegmenterNets build_segmenter(const SegmentationModelSpec& spec, uint64_t seed);

// Forward evaluation with input-range and shape contracts enforced.
nn::Var translate(const ResnetGenerator& F, const nn::Var& batch);
nn::Var segment(const Segmenter& M, const nn::Var& batch);
nn::Var discriminate(const PatchDiscriminator& D, const nn::Var& batch);

/// Width/depth bundle selected by SegmentationModelSpec::backbone_depth.
struct BackbonePreset {
    int stem_width;
    int stage1_blocks, stage2_blocks;
    std::vector<int> aspp_rates;
    int aspp_width;
    int d_out_layers;
    int d_out_width;
};
BackbonePreset backbone_preset(const std::string& depth);

}  // namespace lulc::models
