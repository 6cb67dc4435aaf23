#include "lulc/models.hpp"

#include <nlohmann/json.hpp>

namespace lulc::models {

using nn::Conv2dLayer;
using nn::Init;
using nn::InstanceNorm2dLayer;
using nn::Var;

namespace {

void check_image_range(const nn::Tensor& t, const char* who) {
    for (int i = 0; i < t.numel(); ++i)
        LULC_CHECK(t[i] >= -1.0 - 1e-9 && t[i] <= 1.0 + 1e-9,
                   who << ": input value " << t[i] << " outside [-1,1]");
}

Rng seeded(uint64_t seed, uint64_t tag) { return derive_rng(seed, {tag}); }

}  // namespace

// ---------------------------------------------------------------------------
// specs
// ---------------------------------------------------------------------------

TranslationModelSpec TranslationModelSpec::preset(const std::string& name) {
    if (name == "paper") return {9, 3, 64};
    if (name == "tiny") return {2, 2, 8};
    throw ConfigError("unknown translation preset \"" + name + "\" (paper|tiny)");
}

void TranslationModelSpec::validate() const {
    LULC_CHECK_T(residual_blocks >= 1, ConfigError, "residual_blocks must be >= 1");
    LULC_CHECK_T(discriminator_layers >= 1, ConfigError, "discriminator_layers must be >= 1");
    LULC_CHECK_T(base_width >= 1, ConfigError, "base_width must be >= 1");
}

nlohmann::json TranslationModelSpec::to_json() const {
    return {{"residual_blocks", residual_blocks},
            {"discriminator_layers", discriminator_layers},
            {"base_width", base_width}};
}

TranslationModelSpec TranslationModelSpec::from_json(const nlohmann::json& j) {
    TranslationModelSpec s;
    s.residual_blocks = j.value("residual_blocks", s.residual_blocks);
    s.discriminator_layers = j.value("discriminator_layers", s.discriminator_layers);
    s.base_width = j.value("base_width", s.base_width);
    s.validate();
    return s;
}

SegmentationModelSpec SegmentationModelSpec::preset(const std::string& name) {
    SegmentationModelSpec s;
    if (name == "paper") {
        s.backbone_depth = "paper";
        return s;
    }
    if (name == "tiny") {
        s.backbone_depth = "tiny";
        return s;
    }
    throw ConfigError("unknown segmenter preset \"" + name + "\" (paper|tiny)");
}

void SegmentationModelSpec::validate() const {
    LULC_CHECK_T(variant == "v2_like" || variant == "v3plus_like", ConfigError,
                 "segmenter variant must be v2_like or v3plus_like, got " << variant);
    LULC_CHECK_T(n_classes >= 2, ConfigError, "n_classes must be >= 2");
    backbone_preset(backbone_depth);
    LULC_CHECK_T(!pretrained_init || !pretrained_path.empty(), ConfigError,
                 "pretrained_init requires pretrained_path; this build bundles no weights");
}

nlohmann::json SegmentationModelSpec::to_json() const {
    return {{"variant", variant},
            {"n_classes", n_classes},
            {"backbone_depth", backbone_depth},
            {"pretrained_init", pretrained_init},
            {"pretrained_path", pretrained_path}};
}

SegmentationModelSpec SegmentationModelSpec::from_json(const nlohmann::json& j) {
    SegmentationModelSpec s;
    s.variant = j.value("variant", s.variant);
    s.n_classes = j.value("n_classes", s.n_classes);
    s.backbone_depth = j.value("backbone_depth", s.backbone_depth);
    s.pretrained_init = j.value("pretrained_init", s.pretrained_init);
    s.pretrained_path = j.value("pretrained_path", s.pretrained_path);
    s.validate();
    return s;
}

BackbonePreset backbone_preset(const std::string& depth) {
    if (depth == "tiny") return {8, 1, 1, {1, 2, 4}, 16, 2, 8};
    if (depth == "small") return {16, 2, 2, {1, 2, 4}, 32, 2, 16};
    if (depth == "paper") return {64, 4, 8, {6, 12, 18, 24}, 256, 3, 64};
    throw ConfigError("unknown backbone_depth \"" + depth + "\" (tiny|small|paper)");
}

// ---------------------------------------------------------------------------
// generator
// ---------------------------------------------------------------------------

// Per-instance normalization is deliberately absent here: it would subtract
// each tile's mean color, the very quantity a cross-sensor color transport
// has to carry, and it degenerates on the near-flat tiles this pipeline
// feeds. A learned 1x1 color path bypasses the trunk so global palette maps
// train fast; the residual trunk adds the spatial corrections.
ResnetGenerator::ResnetGenerator(const TranslationModelSpec& spec, uint64_t seed) : spec_(spec) {
    spec.validate();
    Rng rng = seeded(seed, 0xF00D);
    const int w = spec.base_width;
    stem_ = Conv2dLayer::create(params_, "stem", 3, w, 7, 1, 3, 1, Init::gaussian_002, rng);
    down1_ = Conv2dLayer::create(params_, "down1", w, 2 * w, 3, 2, 1, 1, Init::gaussian_002, rng);
    down2_ = Conv2dLayer::create(params_, "down2", 2 * w, 4 * w, 3, 2, 1, 1, Init::gaussian_002, rng);
    for (int b = 0; b < spec.residual_blocks; ++b) {
        const std::string base = "res" + std::to_string(b);
        Block blk;
        blk.c1 = Conv2dLayer::create(params_, base + ".c1", 4 * w, 4 * w, 3, 1, 1, 1,
                                     Init::gaussian_002, rng);
        blk.c2 = Conv2dLayer::create(params_, base + ".c2", 4 * w, 4 * w, 3, 1, 1, 1,
                                     Init::gaussian_002, rng);
        blocks_.push_back(std::move(blk));
    }
    up1_ = Conv2dLayer::create(params_, "up1", 4 * w, 2 * w, 3, 1, 1, 1, Init::gaussian_002, rng);
    up2_ = Conv2dLayer::create(params_, "up2", 2 * w, w, 3, 1, 1, 1, Init::gaussian_002, rng);
    head_ = Conv2dLayer::create(params_, "head", w, 3, 7, 1, 3, 1, Init::gaussian_002, rng);
    color_ = Conv2dLayer::create(params_, "color", 3, 3, 1, 1, 0, 1, Init::gaussian_002, rng);
    // start the color path near identity so the initial map is benign
    for (int c = 0; c < 3; ++c) color_.w.mutable_value().at4(c, c, 0, 0) += 1.0;
}

Var ResnetGenerator::forward(const Var& x) const {
    const nn::Tensor& t = x.value();
    LULC_CHECK(t.ndim() == 4 && t.dim(1) == 3,
               "generator: expected [N,3,H,W], got " << nn::shape_str(t.shape()));
    const int h = t.dim(2), w = t.dim(3);
    LULC_CHECK(h % 4 == 0 && w % 4 == 0 && h >= 8 && w >= 8,
               "generator: input " << h << "x" << w
                                   << " below minimum for 2 downsampling stages "
                                      "(needs H, W >= 8 and divisible by 4)");
    check_image_range(t, "generator");

    Var y = nn::relu(stem_(x));
    y = nn::relu(down1_(y));
    y = nn::relu(down2_(y));
    for (const Block& b : blocks_) {
        Var r = nn::relu(b.c1(y));
        r = b.c2(r);
        y = nn::add(y, r);
    }
    y = nn::relu(up1_(nn::upsample_nearest(y, 2)));
    y = nn::relu(up2_(nn::upsample_nearest(y, 2)));
    return nn::tanh_act(nn::add(head_(y), color_(x)));
}

// ---------------------------------------------------------------------------
// discriminator
// ---------------------------------------------------------------------------

// No per-instance normalization anywhere in the stack: the judgment these
// discriminators make is largely about absolute palette, which normalization
// would cancel.
PatchDiscriminator::PatchDiscriminator(int in_channels, int layers, int base_width, uint64_t seed)
    : in_channels_(in_channels), layers_(layers) {
    LULC_CHECK(layers >= 1 && base_width >= 1 && in_channels >= 1,
               "discriminator: invalid spec (layers " << layers << ", width " << base_width << ")");
    Rng rng = seeded(seed, 0xD15C);
    int prev = in_channels;
    int width = base_width;
    for (int l = 0; l < layers; ++l) {
        convs_.push_back(Conv2dLayer::create(params_, "conv" + std::to_string(l), prev, width, 4, 2,
                                             1, 1, Init::gaussian_002, rng));
        prev = width;
        width = std::min(width * 2, base_width * 8);
    }
    convs_.push_back(Conv2dLayer::create(params_, "conv" + std::to_string(layers), prev, width, 4,
                                         1, 1, 1, Init::gaussian_002, rng));
    head_ = Conv2dLayer::create(params_, "head", width, 1, 4, 1, 1, 1, Init::gaussian_002, rng);
}

Var PatchDiscriminator::forward(const Var& x) const {
    const nn::Tensor& t = x.value();
    LULC_CHECK(t.ndim() == 4 && t.dim(1) == in_channels_,
               "discriminator: expected [N," << in_channels_ << ",H,W], got "
                                             << nn::shape_str(t.shape()));
    const int min_side = (4 << layers_) / 2;  // enough for the stride-1 tail to stay >= 1
    LULC_CHECK(t.dim(2) >= min_side && t.dim(3) >= min_side,
               "discriminator: input " << t.dim(2) << "x" << t.dim(3) << " below minimum "
                                       << min_side << " for " << layers_ << " layers");
    check_image_range(t, "discriminator");

    Var y = nn::leaky_relu(convs_[0](x), 0.2);
    for (int l = 1; l <= layers_; ++l) y = nn::leaky_relu(convs_[l](y), 0.2);
    return head_(y);
}

// ---------------------------------------------------------------------------
// segmenter
// ---------------------------------------------------------------------------

Segmenter::Segmenter(const SegmentationModelSpec& spec, uint64_t seed) : spec_(spec) {
    spec.validate();
    const BackbonePreset bp = backbone_preset(spec.backbone_depth);
    aspp_rates_ = bp.aspp_rates;
    Rng rng = seeded(seed, 0x5E6);

    const int w0 = bp.stem_width;
    const int w1 = 2 * w0;
    const int w2 = 4 * w0;
    stem_ = Conv2dLayer::create(params_, "stem", 3, w0, 3, 2, 1, 1, Init::he_normal, rng);
    stem_n_ = InstanceNorm2dLayer::create(params_, "stem_n", w0);

    auto make_block = [&](const std::string& base, int in_c, int out_c, int stride, int dil) {
        Block b;
        b.c1 = Conv2dLayer::create(params_, base + ".c1", in_c, out_c, 3, stride, dil, dil,
                                   Init::he_normal, rng);
        b.n1 = InstanceNorm2dLayer::create(params_, base + ".n1", out_c);
        b.c2 = Conv2dLayer::create(params_, base + ".c2", out_c, out_c, 3, 1, dil, dil,
                                   Init::he_normal, rng);
        b.n2 = InstanceNorm2dLayer::create(params_, base + ".n2", out_c);
        if (stride != 1 || in_c != out_c) {
            b.proj = Conv2dLayer::create(params_, base + ".proj", in_c, out_c, 1, stride, 0, 1,
                                         Init::he_normal, rng);
            b.proj_n = InstanceNorm2dLayer::create(params_, base + ".proj_n", out_c);
            b.has_proj = true;
        }
        return b;
    };

    for (int i = 0; i < bp.stage1_blocks; ++i)
        stage1_.push_back(make_block("s1b" + std::to_string(i), i == 0 ? w0 : w1, w1,
                                     i == 0 ? 2 : 1, 1));
    for (int i = 0; i < bp.stage2_blocks; ++i)
        stage2_.push_back(make_block("s2b" + std::to_string(i), i == 0 ? w1 : w2, w2, 1, 2));

    if (spec.variant == "v2_like") {
        for (size_t r = 0; r < aspp_rates_.size(); ++r)
            aspp_class_.push_back(Conv2dLayer::create(params_, "aspp" + std::to_string(r), w2,
                                                      spec.n_classes, 3, 1, aspp_rates_[r],
                                                      aspp_rates_[r], Init::he_normal, rng));
    } else {
        const int aw = bp.aspp_width;
        aspp_branch_.push_back(
            Conv2dLayer::create(params_, "aspp_1x1", w2, aw, 1, 1, 0, 1, Init::he_normal, rng));
        aspp_branch_n_.push_back(InstanceNorm2dLayer::create(params_, "aspp_1x1_n", aw));
        for (size_t r = 1; r < aspp_rates_.size(); ++r) {
            aspp_branch_.push_back(Conv2dLayer::create(params_, "aspp_r" + std::to_string(r), w2,
                                                       aw, 3, 1, aspp_rates_[r], aspp_rates_[r],
                                                       Init::he_normal, rng));
            aspp_branch_n_.push_back(
                InstanceNorm2dLayer::create(params_, "aspp_r" + std::to_string(r) + "_n", aw));
        }
        aspp_pool_conv_ =
            Conv2dLayer::create(params_, "aspp_pool", w2, aw, 1, 1, 0, 1, Init::he_normal, rng);
        aspp_pool_n_ = InstanceNorm2dLayer::create(params_, "aspp_pool_n", aw);
        const int n_branch = static_cast<int>(aspp_branch_.size()) + 1;
        aspp_fuse_ = Conv2dLayer::create(params_, "aspp_fuse", n_branch * aw, aw, 1, 1, 0, 1,
                                         Init::he_normal, rng);
        aspp_fuse_n_ = InstanceNorm2dLayer::create(params_, "aspp_fuse_n", aw);
        low_reduce_ = Conv2dLayer::create(params_, "low_reduce", w0, std::max(4, aw / 2), 1, 1, 0,
                                          1, Init::he_normal, rng);
        low_reduce_n_ = InstanceNorm2dLayer::create(params_, "low_reduce_n", std::max(4, aw / 2));
        dec_conv_ = Conv2dLayer::create(params_, "dec_conv", aw + std::max(4, aw / 2), aw, 3, 1, 1,
                                        1, Init::he_normal, rng);
        dec_n_ = InstanceNorm2dLayer::create(params_, "dec_n", aw);
        classifier_ = Conv2dLayer::create(params_, "classifier", aw, spec.n_classes, 1, 1, 0, 1,
                                          Init::he_normal, rng);
    }
}

Var Segmenter::run_block(const Block& b, const Var& x) const {
    Var r = nn::relu(b.n1(b.c1(x)));
    r = b.n2(b.c2(r));
    Var skip = b.has_proj ? b.proj_n(b.proj(x)) : x;
    return nn::relu(nn::add(skip, r));
}

Var Segmenter::forward(const Var& x) const {
    const nn::Tensor& t = x.value();
    LULC_CHECK(t.ndim() == 4 && t.dim(1) == 3,
               "segmenter: expected [N,3,H,W], got " << nn::shape_str(t.shape()));
    const int H = t.dim(2), W = t.dim(3);
    LULC_CHECK(H >= 8 && W >= 8,
               "segmenter: input " << H << "x" << W << " below backbone minimum 8x8");
    check_image_range(t, "segmenter");

    Var low = nn::relu(stem_n_(stem_(x)));  // stride 2
    Var y = low;
    for (const Block& b : stage1_) y = run_block(b, y);  // stride 4
    for (const Block& b : stage2_) y = run_block(b, y);  // stride 4, dilated

    if (spec_.variant == "v2_like") {
        // parallel atrous class predictions, summed
        std::vector<Var> heads;
        heads.reserve(aspp_class_.size());
        for (const Conv2dLayer& c : aspp_class_) heads.push_back(c(y));
        Var logits = nn::sum_vars(heads);
        return nn::upsample_bilinear(logits, H, W);
    }

    // v3plus_like: pyramid + image-level pooling, then decoder with the
    // stride-2 skip
    std::vector<Var> branches;
    for (size_t i = 0; i < aspp_branch_.size(); ++i)
        branches.push_back(nn::relu(aspp_branch_n_[i](aspp_branch_[i](y))));
    Var pooled = nn::relu(aspp_pool_n_(aspp_pool_conv_(nn::global_avg_pool(y))));
    branches.push_back(nn::broadcast_hw(pooled, y.value().dim(2), y.value().dim(3)));
    Var enc = nn::relu(aspp_fuse_n_(aspp_fuse_(nn::concat_channels(branches))));

    Var low_r = nn::relu(low_reduce_n_(low_reduce_(low)));
    enc = nn::upsample_bilinear(enc, low_r.value().dim(2), low_r.value().dim(3));
    Var dec = nn::relu(dec_n_(dec_conv_(nn::concat_channels({enc, low_r}))));
    return nn::upsample_bilinear(classifier_(dec), H, W);
}

// ---------------------------------------------------------------------------
// builders & forward contracts
// ---------------------------------------------------------------------------

TranslationNets build_translation(const TranslationModelSpec& spec, uint64_t seed) {
    spec.validate();
    TranslationNets nets;
    nets.spec = spec;
    nets.F = std::make_shared<ResnetGenerator>(spec, hash_combine(seed, 1));
    nets.F_inv = std::make_shared<ResnetGenerator>(spec, hash_combine(seed, 2));
    nets.D_T = std::make_shared<PatchDiscriminator>(3, spec.discriminator_layers, spec.base_width,
                                                    hash_combine(seed, 3));
    nets.D_S = std::make_shared<PatchDiscriminator>(3, spec.discriminator_layers, spec.base_width,
                                                    hash_combine(seed, 4));
    return nets;
}

SegmenterNets build_segmenter(const SegmentationModelSpec& spec, uint64_t seed) {
    spec.validate();
    const BackbonePreset bp = backbone_preset(spec.backbone_depth);
    SegmenterNets nets;
    nets.spec = spec;
    nets.M = std::make_shared<Segmenter>(spec, hash_combine(seed, 1));
    nets.D_out = std::make_shared<PatchDiscriminator>(spec.n_classes, bp.d_out_layers,
                                                      bp.d_out_width, hash_combine(seed, 2));
    return nets;
}

Var translate(const ResnetGenerator& F, const Var& batch) { return F.forward(batch); }

Var segment(const Segmenter& M, const Var& batch) { return M.forward(batch); }

Var discriminate(const PatchDiscriminator& D, const Var& batch) { return D.forward(batch); }

}  // namespace lulc::models
