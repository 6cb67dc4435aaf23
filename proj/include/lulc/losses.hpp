#pragma once

#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "lulc/models.hpp"

namespace lulc::losses {

/// Every loss coefficient of the training objectives, with per-experiment
/// presets. lambda_per is the legacy single perceptual weight that perA/perB
/// split apart.
struct LossWeights {
    double lambda_adv = 0.001;
    double lambda_GAN = 1.0;
    double lambda_recon = 10.0;
    double lambda_per = 0.1;
    double lambda_perA = 0.1;
    double lambda_perB = 0.1;
    double lambda_per_recon = 0.1;
    double lambda_D = 1.0;

    static LossWeights preset(const std::string& name);
    static const std::vector<std::string>& preset_names();
    void validate() const;
    nlohmann::json to_json() const;
    static LossWeights from_json(const nlohmann::json& j);
    bool operator==(const LossWeights&) const = default;
};

/// Per-term scalars of one objective evaluation. Components are raw values;
/// total is their weighted sum. Terms whose weight is zero are skipped and
/// reported as zero.
struct LossBreakdown {
    double gan = 0.0;
    double recon = 0.0;
    double perA = 0.0;
    double perB = 0.0;
    double per_recon = 0.0;
    double seg = 0.0;
    double adv = 0.0;
    double total = 0.0;

    nlohmann::json to_json() const;
};

enum class GanSide { generator, discriminator };

/// Forward evaluation seam: the loss formulas only need a callable network,
/// which also lets tests drive them with hand-set surrogate outputs.
using NetFn = std::function<nn::Var(const nn::Var&)>;

/// Mean per-pixel cross-entropy of softmaxed logits against labels.
nn::Var seg_loss(const nn::Var& logits, const nn::LabelBatch& labels);

/// Generator-side least-squares adversarial term pushing D_out(softmax(logits))
/// toward the source-like label 1. D_out parameters receive no gradient.
nn::Var adv_out_loss(models::PatchDiscriminator& D_out, const nn::Var& logits_target);
nn::Var adv_out_loss_fn(const NetFn& d_out, const nn::Var& logits_target);

/// Discriminator-side objective: translated-source outputs -> 1, target -> 0.
/// Callers pass detached logits.
nn::Var d_out_loss(models::PatchDiscriminator& D_out, const nn::Var& logits_translated_source,
                   const nn::Var& logits_target);
nn::Var d_out_loss_fn(const NetFn& d_out, const nn::Var& logits_translated_source,
                      const nn::Var& logits_target);

/// Least-squares GAN objective scaled by lambda_D. The generator side ignores
/// real_batch and blocks gradients into D; the discriminator side expects a
/// detached fake batch.
nn::Var gan_loss(models::PatchDiscriminator& D, const std::optional<nn::Var>& real_batch,
                 const nn::Var& fake_batch, GanSide side, double lambda_D);
nn::Var gan_loss_fn(const NetFn& d, const std::optional<nn::Var>& real_batch,
                    const nn::Var& fake_batch, GanSide side, double lambda_D);

/// Mean absolute difference.
nn::Var recon_loss(const nn::Var& original, const nn::Var& reconstructed);

/// Mean absolute difference between M's class-probability outputs on the two
/// batches. M's parameters are frozen for the evaluation; gradients flow only
/// to the batch inputs.
nn::Var perceptual_loss(models::Segmenter& M_frozen, const nn::Var& batch_a, const nn::Var& batch_b);
nn::Var perceptual_loss_fn(const NetFn& m_frozen, const nn::Var& batch_a, const nn::Var& batch_b);

/// Segmentation objective: lambda_adv * adv + seg.
std::pair<nn::Var, LossBreakdown> total_M_loss(const LossWeights& w,
                                               models::PatchDiscriminator& D_out,
                                               const nn::Var& logits_translated_source,
                                               const nn::LabelBatch& labels_source,
                                               const nn::Var& logits_target);

/// Detached forward products of one total_F_loss evaluation, reusable by the
/// discriminator updates without a second generator pass.
struct TranslationForwards {
    nn::Tensor S_translated;  // F(S)
    nn::Tensor T_translated;  // F_inv(T)
};

/// Translation objective over both directions: GAN + reconstruction +
/// perceptual terms. M may be null when every perceptual weight is zero.
std::pair<nn::Var, LossBreakdown> total_F_loss(const LossWeights& w, models::ResnetGenerator& F,
                                               models::ResnetGenerator& F_inv,
                                               models::PatchDiscriminator& D_T,
                                               models::PatchDiscriminator& D_S,
                                               models::Segmenter* M_frozen, const nn::Var& S,
                                               const nn::Var& T,
                                               TranslationForwards* forwards = nullptr);
std::pair<nn::Var, LossBreakdown> total_F_loss_fn(const LossWeights& w, const NetFn& F,
                                                  const NetFn& F_inv, const NetFn& D_T,
                                                  const NetFn& D_S, const NetFn& M_frozen,
                                                  const nn::Var& S, const nn::Var& T,
                                                  TranslationForwards* forwards = nullptr);

}  // namespace lulc::losses
