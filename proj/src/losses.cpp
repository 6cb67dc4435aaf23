#include "lulc/losses.hpp"

#include <nlohmann/json.hpp>

namespace lulc::losses {

using nn::Var;

LossWeights LossWeights::preset(const std::string& name) {
    LossWeights w;  // defaults follow the cited bidirectional-learning lineage
    if (name == "wv2_to_dg") {
        w.lambda_D = 1.5;
        w.lambda_perA = 0.5;
        w.lambda_perB = 0.1;
        return w;
    }
    if (name == "sen_to_dg") {
        w.lambda_D = 100.0;
        w.lambda_perA = 2.0;
        w.lambda_perB = 0.5;
        return w;
    }
    // remaining experiments have no published coefficients; they run with the
    // defaults (lambda_D 1, perceptual weights at the base value 0.1)
    if (name == "sen_to_wv2" || name == "wv2fi_to_plfi" || name == "wv2gr_to_wv2fi") return w;
    if (name == "synthetic") {
        w.lambda_D = 1.0;
        w.lambda_perA = 0.5;
        w.lambda_perB = 0.5;
        return w;
    }
    throw ConfigError("unknown loss-weight preset \"" + name + "\"");
}

const std::vector<std::string>& LossWeights::preset_names() {
    static const std::vector<std::string> names = {"wv2_to_dg",     "sen_to_dg",
                                                   "sen_to_wv2",    "wv2fi_to_plfi",
                                                   "wv2gr_to_wv2fi", "synthetic"};
    return names;
}

void LossWeights::validate() const {
    LULC_CHECK_T(lambda_adv >= 0 && lambda_GAN >= 0 && lambda_recon >= 0 && lambda_per >= 0 &&
                     lambda_perA >= 0 && lambda_perB >= 0 && lambda_per_recon >= 0 && lambda_D >= 0,
                 ConfigError, "loss weights must be non-negative");
}

nlohmann::json LossWeights::to_json() const {
    return {{"lambda_adv", lambda_adv},       {"lambda_GAN", lambda_GAN},
            {"lambda_recon", lambda_recon},   {"lambda_per", lambda_per},
            {"lambda_perA", lambda_perA},     {"lambda_perB", lambda_perB},
            {"lambda_per_recon", lambda_per_recon}, {"lambda_D", lambda_D}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
    LossWeights w;
    w.lambda_adv = j.value("lambda_adv", w.lambda_adv);
    w.lambda_GAN = j.value("lambda_GAN", w.lambda_GAN);
    w.lambda_recon = j.value("lambda_recon", w.lambda_recon);
    w.lambda_per = j.value("lambda_per", w.lambda_per);
    w.lambda_perA = j.value("lambda_perA", w.lambda_perA);
    w.lambda_perB = j.value("lambda_perB", w.lambda_perB);
    w.lambda_per_recon = j.value("lambda_per_recon", w.lambda_per_recon);
    w.lambda_D = j.value("lambda_D", w.lambda_D);
    w.validate();
    return w;
}

nlohmann::json LossBreakdown::to_json() const {
    return {{"gan", gan},   {"recon", recon},         {"perA", perA}, {"perB", perB},
            {"per_recon", per_recon}, {"seg", seg},   {"adv", adv},   {"total", total}};
}

// ---------------------------------------------------------------------------

Var seg_loss(const Var& logits, const nn::LabelBatch& labels) {
    return nn::cross_entropy_mean(logits, labels);
}

namespace {

Var zero_scalar() { return Var::constant(nn::Tensor({1})); }

/// mean((s - target)^2) over a discriminator score grid
Var mse_to(const Var& scores, double target) {
    return nn::mean_all(nn::square(nn::add_scalar(scores, -target)));
}

}  // namespace

Var adv_out_loss_fn(const NetFn& d_out, const Var& logits_target) {
    Var probs = nn::softmax_channels(logits_target);
    return mse_to(d_out(probs), 1.0);
}

Var adv_out_loss(models::PatchDiscriminator& D_out, const Var& logits_target) {
    nn::FreezeGuard freeze(D_out.params());
    return adv_out_loss_fn([&](const Var& x) { return D_out.forward(x); }, logits_target);
}

Var d_out_loss_fn(const NetFn& d_out, const Var& logits_translated_source,
                  const Var& logits_target) {
    Var p_src = nn::softmax_channels(logits_translated_source);
    Var p_tgt = nn::softmax_channels(logits_target);
    Var src_term = mse_to(d_out(p_src), 1.0);  // sequenced: evaluation order matters
    Var tgt_term = mse_to(d_out(p_tgt), 0.0);
    return nn::add(src_term, tgt_term);
}

Var d_out_loss(models::PatchDiscriminator& D_out, const Var& logits_translated_source,
               const Var& logits_target) {
    return d_out_loss_fn([&](const Var& x) { return D_out.forward(x); },
                         logits_translated_source, logits_target);
}

Var gan_loss_fn(const NetFn& d, const std::optional<Var>& real_batch, const Var& fake_batch,
                GanSide side, double lambda_D) {
    LULC_CHECK(lambda_D >= 0, "gan_loss: lambda_D must be non-negative, got " << lambda_D);
    if (lambda_D == 0.0) return zero_scalar();
    if (side == GanSide::generator) return nn::scale(mse_to(d(fake_batch), 1.0), lambda_D);
    LULC_CHECK(real_batch.has_value(), "gan_loss: discriminator side requires a real batch");
    Var real_term = mse_to(d(*real_batch), 1.0);
    Var fake_term = mse_to(d(fake_batch), 0.0);
    return nn::scale(nn::add(real_term, fake_term), lambda_D);
}

Var gan_loss(models::PatchDiscriminator& D, const std::optional<Var>& real_batch,
             const Var& fake_batch, GanSide side, double lambda_D) {
    if (side == GanSide::generator) {
        nn::FreezeGuard freeze(D.params());
        return gan_loss_fn([&](const Var& x) { return D.forward(x); }, real_batch, fake_batch,
                           side, lambda_D);
    }
    return gan_loss_fn([&](const Var& x) { return D.forward(x); }, real_batch, fake_batch, side,
                       lambda_D);
}

Var recon_loss(const Var& original, const Var& reconstructed) {
    LULC_CHECK(original.value().same_shape(reconstructed.value()),
               "recon_loss: shape mismatch " << nn::shape_str(original.value().shape()) << " vs "
                                             << nn::shape_str(reconstructed.value().shape()));
    return nn::mean_all(nn::abs_val(nn::sub(original, reconstructed)));
}

Var perceptual_loss_fn(const NetFn& m_frozen, const Var& batch_a, const Var& batch_b) {
    Var pa = nn::softmax_channels(m_frozen(batch_a));
    Var pb = nn::softmax_channels(m_frozen(batch_b));
    return nn::mean_all(nn::abs_val(nn::sub(pa, pb)));
}

Var perceptual_loss(models::Segmenter& M_frozen, const Var& batch_a, const Var& batch_b) {
    nn::FreezeGuard freeze(M_frozen.params());
    return perceptual_loss_fn([&](const Var& x) { return M_frozen.forward(x); }, batch_a, batch_b);
}

std::pair<Var, LossBreakdown> total_M_loss(const LossWeights& w,
                                           models::PatchDiscriminator& D_out,
                                           const Var& logits_translated_source,
                                           const nn::LabelBatch& labels_source,
                                           const Var& logits_target) {
    LossBreakdown bd;
    Var seg = seg_loss(logits_translated_source, labels_source);
    bd.seg = seg.scalar();
    Var total = seg;
    if (w.lambda_adv > 0.0) {
        Var adv = adv_out_loss(D_out, logits_target);
        bd.adv = adv.scalar();
        total = nn::add(total, nn::scale(adv, w.lambda_adv));
    }
    bd.total = total.scalar();
    return {total, bd};
}

std::pair<Var, LossBreakdown> total_F_loss_fn(const LossWeights& w, const NetFn& F,
                                              const NetFn& F_inv, const NetFn& D_T,
                                              const NetFn& D_S, const NetFn& M_frozen, const Var& S,
                                              const Var& T, TranslationForwards* forwards) {
    w.validate();
    const bool wants_perceptual =
        w.lambda_perA > 0.0 || w.lambda_perB > 0.0 || w.lambda_per_recon > 0.0;
    LULC_CHECK(!wants_perceptual || M_frozen,
               "total_F_loss: perceptual weights are non-zero but no segmenter was provided");

    Var S_t = F(S);        // S' : source rendered in target style
    Var T_s = F_inv(T);    // T' : target rendered in source style
    Var S_rec = F_inv(S_t);
    Var T_rec = F(T_s);
    if (forwards) {
        forwards->S_translated = S_t.value();
        forwards->T_translated = T_s.value();
    }

    LossBreakdown bd;
    std::vector<Var> weighted;

    if (w.lambda_GAN > 0.0 && w.lambda_D > 0.0) {
        Var gan = nn::add(gan_loss_fn(D_T, std::nullopt, S_t, GanSide::generator, w.lambda_D),
                          gan_loss_fn(D_S, std::nullopt, T_s, GanSide::generator, w.lambda_D));
        bd.gan = gan.scalar();
        weighted.push_back(nn::scale(gan, w.lambda_GAN));
    }
    if (w.lambda_recon > 0.0) {
        Var recon = nn::add(recon_loss(S, S_rec), recon_loss(T, T_rec));
        bd.recon = recon.scalar();
        weighted.push_back(nn::scale(recon, w.lambda_recon));
    }
    if (w.lambda_perA > 0.0) {
        Var perA = perceptual_loss_fn(M_frozen, S, S_t);
        bd.perA = perA.scalar();
        weighted.push_back(nn::scale(perA, w.lambda_perA));
    }
    if (w.lambda_perB > 0.0) {
        Var perB = perceptual_loss_fn(M_frozen, T, T_s);
        bd.perB = perB.scalar();
        weighted.push_back(nn::scale(perB, w.lambda_perB));
    }
    if (w.lambda_per_recon > 0.0) {
        Var pr = nn::add(perceptual_loss_fn(M_frozen, S, S_rec),
                         perceptual_loss_fn(M_frozen, T, T_rec));
        bd.per_recon = pr.scalar();
        weighted.push_back(nn::scale(pr, w.lambda_per_recon));
    }

    Var total = weighted.empty() ? zero_scalar() : nn::sum_vars(weighted);
    bd.total = total.scalar();
    return {total, bd};
}

std::pair<Var, LossBreakdown> total_F_loss(const LossWeights& w, models::ResnetGenerator& F,
                                           models::ResnetGenerator& F_inv,
                                           models::PatchDiscriminator& D_T,
                                           models::PatchDiscriminator& D_S,
                                           models::Segmenter* M_frozen, const Var& S, const Var& T,
                                           TranslationForwards* forwards) {
    // discriminators and the segmenter only guide the generators here, so
    // their parameters are frozen around each forward
    NetFn m_fn;
    if (M_frozen)
        m_fn = [M_frozen](const Var& x) {
            nn::FreezeGuard fg(M_frozen->params());
            return M_frozen->forward(x);
        };
    return total_F_loss_fn(
        w, [&F](const Var& x) { return F.forward(x); },
        [&F_inv](const Var& x) { return F_inv.forward(x); },
        [&D_T](const Var& x) {
            nn::FreezeGuard fg(D_T.params());
            return D_T.forward(x);
        },
        [&D_S](const Var& x) {
            nn::FreezeGuard fg(D_S.params());
            return D_S.forward(x);
        },
        m_fn, S, T, forwards);
}

}  // namespace lulc::losses
