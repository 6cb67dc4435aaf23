#include "lulc/trainer.hpp"

#include <set>

namespace lulc::train {

namespace fs = std::filesystem;
using models::SegmenterNets;
using models::TranslationNets;
using nn::Var;

namespace {

constexpr uint64_t kTagBaseline = 0xBA5EULL;
constexpr uint64_t kTagTranslation = 0x7AA500ULL;
constexpr uint64_t kTagAdapted = 0xADA700ULL;
constexpr uint64_t kAugStream = 0xA76ULL;

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& ctx) {
    for (const auto& [key, value] : j.items())
        LULC_CHECK_T(allowed.count(key), ConfigError,
                     "unknown config key \"" << key << "\" in " << ctx);
}

void check_finite(double v, const char* phase, int step) {
    if (!std::isfinite(v)) {
        std::ostringstream oss;
        oss << phase << " diverged at iteration " << step << " (non-finite loss)";
        throw DivergenceError(oss.str());
    }
}

fs::path ckpt_subdir(const fs::path& dir, int iteration) {
    return dir / ("ckpt_" + std::to_string(iteration));
}

}  // namespace

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    LULC_CHECK_T(total_iterations >= 1, ConfigError, "total_iterations must be >= 1");
    LULC_CHECK_T(batch_size >= 1, ConfigError, "batch_size must be >= 1");
    LULC_CHECK_T(bdl_rounds >= 1, ConfigError, "bdl_rounds must be >= 1");
    LULC_CHECK_T(snapshot_every >= 0, ConfigError, "snapshot_every must be >= 0");
    LULC_CHECK_T(seg_lr > 0 && gan_lr > 0, ConfigError, "learning rates must be positive");
    LULC_CHECK_T(seg_momentum >= 0 && seg_momentum < 1, ConfigError, "seg_momentum must be in [0,1)");
    LULC_CHECK_T(crop_size >= 0, ConfigError, "crop_size must be >= 0");
    LULC_CHECK_T(crop_size == 0 || crop_size % 4 == 0, ConfigError,
                 "crop_size must be divisible by 4 (translation downsampling)");
    weights.validate();
    translation.validate();
    segmentation.validate();
}

nlohmann::json TrainConfig::to_json() const {
    return {{"total_iterations", total_iterations},
            {"batch_size", batch_size},
            {"seed", seed},
            {"bdl_rounds", bdl_rounds},
            {"snapshot_every", snapshot_every},
            {"baseline_iterations", baseline_iterations},
            {"translation_iterations", translation_iterations},
            {"adapted_iterations", adapted_iterations},
            {"augment", augment},
            {"crop_size", crop_size},
            {"seg_lr", seg_lr},
            {"seg_momentum", seg_momentum},
            {"seg_poly_power", seg_poly_power},
            {"gan_lr", gan_lr},
            {"adam_beta1", adam_beta1},
            {"adam_beta2", adam_beta2},
            {"preset", preset_name},
            {"weights", weights.to_json()},
            {"translation", translation.to_json()},
            {"segmentation", segmentation.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    check_keys(j,
               {"total_iterations", "batch_size", "seed", "bdl_rounds", "snapshot_every",
                "baseline_iterations", "translation_iterations", "adapted_iterations", "augment",
                "crop_size", "seg_lr", "seg_momentum", "seg_poly_power", "gan_lr", "adam_beta1",
                "adam_beta2", "preset", "weights", "translation", "segmentation"},
               "train config");
    TrainConfig c;
    if (j.contains("preset")) {
        c.preset_name = j.at("preset").get<std::string>();
        if (!c.preset_name.empty()) c.weights = losses::LossWeights::preset(c.preset_name);
    }
    c.total_iterations = j.value("total_iterations", c.total_iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.bdl_rounds = j.value("bdl_rounds", c.bdl_rounds);
    c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
    c.baseline_iterations = j.value("baseline_iterations", c.baseline_iterations);
    c.translation_iterations = j.value("translation_iterations", c.translation_iterations);
    c.adapted_iterations = j.value("adapted_iterations", c.adapted_iterations);
    c.augment = j.value("augment", c.augment);
    c.crop_size = j.value("crop_size", c.crop_size);
    c.seg_lr = j.value("seg_lr", c.seg_lr);
    c.seg_momentum = j.value("seg_momentum", c.seg_momentum);
    c.seg_poly_power = j.value("seg_poly_power", c.seg_poly_power);
    c.gan_lr = j.value("gan_lr", c.gan_lr);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    if (j.contains("weights")) {
        check_keys(j.at("weights"),
                   {"lambda_adv", "lambda_GAN", "lambda_recon", "lambda_per", "lambda_perA",
                    "lambda_perB", "lambda_per_recon", "lambda_D"},
                   "weights");
        // explicit weights override the preset values
        nlohmann::json merged = c.weights.to_json();
        merged.update(j.at("weights"));
        c.weights = losses::LossWeights::from_json(merged);
    }
    if (j.contains("translation")) {
        check_keys(j.at("translation"), {"residual_blocks", "discriminator_layers", "base_width"},
                   "translation");
        c.translation = models::TranslationModelSpec::from_json(j.at("translation"));
    }
    if (j.contains("segmentation")) {
        check_keys(j.at("segmentation"),
                   {"variant", "n_classes", "backbone_depth", "pretrained_init", "pretrained_path"},
                   "segmentation");
        c.segmentation = models::SegmentationModelSpec::from_json(j.at("segmentation"));
    }
    c.validate();
    return c;
}

uint64_t TrainConfig::config_hash() const {
    const std::string dump = to_json().dump();
    return fnv1a(dump.data(), dump.size());
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

TileSampler::TileSampler(size_t n_tiles, uint64_t seed, uint64_t phase_tag)
    : n_(n_tiles), seed_(seed), tag_(phase_tag) {
    LULC_CHECK(n_tiles >= 1, "sampler needs a non-empty dataset");
    reshuffle();
}

void TileSampler::reshuffle() {
    order_.resize(n_);
    for (size_t i = 0; i < n_; ++i) order_[i] = static_cast<int>(i);
    Rng rng = derive_rng(seed_, {tag_, 0x50FFULL, epoch_});
    for (size_t i = n_; i > 1; --i) {
        const size_t k = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
        std::swap(order_[i - 1], order_[k]);
    }
}

int TileSampler::next() {
    if (pos_ >= n_) {
        ++epoch_;
        pos_ = 0;
        reshuffle();
    }
    return order_[pos_++];
}

nlohmann::json TileSampler::state() const { return {{"epoch", epoch_}, {"pos", pos_}}; }

void TileSampler::restore(const nlohmann::json& j) {
    epoch_ = j.at("epoch").get<uint64_t>();
    pos_ = j.at("pos").get<size_t>();
    reshuffle();
}

Batch assemble_batch(const data::DomainDataset& ds, TileSampler& sampler, const TrainConfig& cfg,
                     uint64_t phase_tag, int iteration, bool with_labels) {
    LULC_CHECK(!ds.tiles.empty(), "assemble_batch: empty dataset " << ds.name);
    const int out_size =
        (cfg.augment && cfg.crop_size > 0) ? std::min(cfg.crop_size, ds.tile_size) : ds.tile_size;

    Batch b;
    b.images = nn::Tensor({cfg.batch_size, 3, out_size, out_size});
    if (with_labels) {
        b.labels = nn::LabelBatch(cfg.batch_size, out_size, out_size);
        b.has_labels = true;
    }
    for (int slot = 0; slot < cfg.batch_size; ++slot) {
        const int idx = sampler.next();
        const data::TilePair* tile = &ds.tiles[static_cast<size_t>(idx)];
        data::TilePair scratch;
        if (cfg.augment) {
            Rng r = derive_rng(cfg.seed, {phase_tag, kAugStream, static_cast<uint64_t>(iteration),
                                          static_cast<uint64_t>(slot)});
            scratch = data::augment(*tile, r.next_u64(), out_size);
            tile = &scratch;
        }
        LULC_CHECK(with_labels ? tile->label.has_value() : true,
                   "assemble_batch: dataset " << ds.name << " tile " << tile->tile_id
                                              << " lacks a label plane");
        for (int y = 0; y < out_size; ++y)
            for (int x = 0; x < out_size; ++x) {
                for (int c = 0; c < 3; ++c)
                    b.images.at4(slot, c, y, x) = tile->image.at(y, x, c) / 127.5 - 1.0;
                if (with_labels) b.labels.at(slot, y, x) = tile->label->at(y, x);
            }
    }
    return b;
}

// ---------------------------------------------------------------------------
// logging
// ---------------------------------------------------------------------------

RunLogger::RunLogger(const fs::path& file) {
    fs::create_directories(file.parent_path());
    out_.open(file);
    LULC_CHECK_T(out_.good(), DataError, "cannot open loss log " << file);
}

void RunLogger::log(const std::string& phase, int step, const losses::LossBreakdown& bd,
                    const nlohmann::json& extra_terms) {
    if (!out_.is_open()) return;
    nlohmann::json terms = bd.to_json();
    const double total = terms["total"].get<double>();
    terms.erase("total");
    for (const auto& [k, v] : extra_terms.items()) terms[k] = v;
    nlohmann::json line = {{"step", step}, {"phase", phase}, {"terms", terms}, {"total", total}};
    out_ << line.dump() << "\n";
    out_.flush();
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_segmenter_checkpoint(const fs::path& file, const SegmenterNets& nets, int iteration,
                               uint64_t config_hash, const nlohmann::json& extra,
                               const std::vector<std::pair<std::string, nn::Tensor>>& opt_state) {
    nlohmann::json meta = {{"kind", "segmenter"},
                           {"iteration", iteration},
                           {"config_hash", config_hash},
                           {"spec", nets.spec.to_json()}};
    if (!extra.is_null()) meta["extra"] = extra;
    auto tensors = nets.M->params().state_dict("M.");
    auto d = nets.D_out->params().state_dict("D_out.");
    tensors.insert(tensors.end(), d.begin(), d.end());
    tensors.insert(tensors.end(), opt_state.begin(), opt_state.end());
    write_checkpoint(file, meta, tensors);
}

void save_translation_checkpoint(const fs::path& file, const TranslationNets& nets, int iteration,
                                 uint64_t config_hash, const nlohmann::json& extra,
                                 const std::vector<std::pair<std::string, nn::Tensor>>& opt_state) {
    nlohmann::json meta = {{"kind", "translation"},
                           {"iteration", iteration},
                           {"config_hash", config_hash},
                           {"spec", nets.spec.to_json()}};
    if (!extra.is_null()) meta["extra"] = extra;
    std::vector<std::pair<std::string, nn::Tensor>> tensors;
    for (const auto& [prefix, store] :
         {std::pair<const char*, const nn::ParamStore*>{"F.", &nets.F->params()},
          {"F_inv.", &nets.F_inv->params()},
          {"D_T.", &nets.D_T->params()},
          {"D_S.", &nets.D_S->params()}}) {
        auto sd = store->state_dict(prefix);
        tensors.insert(tensors.end(), sd.begin(), sd.end());
    }
    tensors.insert(tensors.end(), opt_state.begin(), opt_state.end());
    write_checkpoint(file, meta, tensors);
}

SegmenterNets load_segmenter_checkpoint(const Checkpoint& ck,
                                        const models::SegmentationModelSpec* expect_spec) {
    LULC_CHECK_T(ck.meta.value("kind", "") == "segmenter", DataError,
                 "checkpoint kind \"" << ck.meta.value("kind", "?")
                                      << "\" is not a segmenter checkpoint");
    const auto spec = models::SegmentationModelSpec::from_json(ck.meta.at("spec"));
    if (expect_spec)
        LULC_CHECK_T(spec == *expect_spec, DataError,
                     "checkpoint/spec mismatch: stored segmenter spec "
                         << ck.meta.at("spec").dump() << " differs from the requested spec");
    SegmenterNets nets = models::build_segmenter(spec, 0);
    nets.M->params().load_state_dict(ck.tensors, "M.");
    nets.D_out->params().load_state_dict(ck.tensors, "D_out.");
    return nets;
}

TranslationNets load_translation_checkpoint(const Checkpoint& ck,
                                            const models::TranslationModelSpec* expect_spec) {
    LULC_CHECK_T(ck.meta.value("kind", "") == "translation", DataError,
                 "checkpoint kind \"" << ck.meta.value("kind", "?")
                                      << "\" is not a translation checkpoint");
    const auto spec = models::TranslationModelSpec::from_json(ck.meta.at("spec"));
    if (expect_spec)
        LULC_CHECK_T(spec == *expect_spec, DataError,
                     "checkpoint/spec mismatch: stored translation spec "
                         << ck.meta.at("spec").dump() << " differs from the requested spec");
    TranslationNets nets = models::build_translation(spec, 0);
    nets.F->params().load_state_dict(ck.tensors, "F.");
    nets.F_inv->params().load_state_dict(ck.tensors, "F_inv.");
    nets.D_T->params().load_state_dict(ck.tensors, "D_T.");
    nets.D_S->params().load_state_dict(ck.tensors, "D_S.");
    return nets;
}

// ---------------------------------------------------------------------------
// training phases
// ---------------------------------------------------------------------------

namespace {

void verify_resume(const Checkpoint& ck, const TrainConfig& cfg, const char* kind) {
    LULC_CHECK_T(ck.meta.value("kind", "") == kind, DataError,
                 "resume checkpoint kind mismatch (wanted " << kind << ")");
    LULC_CHECK_T(ck.meta.value("config_hash", uint64_t(0)) == cfg.config_hash(), ConfigError,
                 "resume checkpoint was produced by a different configuration");
}

nlohmann::json trace_tail(const std::vector<double>& trace, size_t keep = 5000) {
    nlohmann::json arr = nlohmann::json::array();
    const size_t start = trace.size() > keep ? trace.size() - keep : 0;
    for (size_t i = start; i < trace.size(); ++i) arr.push_back(trace[i]);
    return arr;
}

}  // namespace

PhaseOutcome train_segmenter_baseline(const TrainConfig& cfg, const data::DomainDataset& source,
                                      const data::DomainDataset* target, SegmenterNets& nets,
                                      const PhaseRun& run) {
    cfg.validate();
    LULC_CHECK_T(source.labeled, DataError,
                 "baseline segmentation training requires a labeled source dataset");
    (void)target;  // image-only access is never needed here

    const int iters = cfg.baseline_iters();
    nn::SgdPoly opt(nets.M->params(), cfg.seg_lr, cfg.seg_momentum, cfg.seg_poly_power, iters);
    TileSampler sampler(source.tiles.size(), cfg.seed, kTagBaseline);

    int start = 0;
    PhaseOutcome out;
    if (run.resume) {
        verify_resume(*run.resume, cfg, "segmenter");
        start = run.resume->meta.at("iteration").get<int>();
        sampler.restore(run.resume->meta.at("extra").at("sampler"));
        opt.load_state_dict(run.resume->tensors, "opt.M.", start);
        for (const auto& v : run.resume->meta.at("extra").at("loss_trace"))
            out.loss_trace.push_back(v.get<double>());
    }

    for (int it = start; it < iters; ++it) {
        Batch b = assemble_batch(source, sampler, cfg, kTagBaseline, it, true);
        Var logits = nets.M->forward(Var::constant(b.images));
        Var loss = losses::seg_loss(logits, b.labels);
        check_finite(loss.scalar(), "baseline", it);

        opt.zero_grads();
        nn::backward(loss);
        opt.step();

        losses::LossBreakdown bd;
        bd.seg = bd.total = loss.scalar();
        if (run.logger) run.logger->log("baseline", it, bd);
        out.loss_trace.push_back(bd.total);

        const bool last = (it + 1 == iters);
        if (!run.ckpt_dir.empty() &&
            (last || (cfg.snapshot_every > 0 && (it + 1) % cfg.snapshot_every == 0))) {
            const fs::path file = ckpt_subdir(run.ckpt_dir, it + 1) / "segmenter.bin";
            save_segmenter_checkpoint(file, nets, it + 1, cfg.config_hash(),
                                      {{"sampler", sampler.state()},
                                       {"loss_trace", trace_tail(out.loss_trace)},
                                       {"phase", "baseline"}},
                                      opt.state_dict("opt.M."));
            if (last) out.final_checkpoint = file;
        }
    }
    out.iterations = iters;
    return out;
}

PhaseOutcome train_translation(const TrainConfig& cfg, const data::DomainDataset& source,
                               const data::DomainDataset& target, TranslationNets& nets,
                               models::Segmenter* M_frozen, const PhaseRun& run,
                               uint64_t round_tag) {
    cfg.validate();
    const bool wants_perceptual = cfg.weights.lambda_perA > 0.0 || cfg.weights.lambda_perB > 0.0 ||
                                  cfg.weights.lambda_per_recon > 0.0;
    LULC_CHECK_T(!wants_perceptual || M_frozen != nullptr, ConfigError,
                 "translation training requires a frozen segmenter when any perceptual weight is "
                 "non-zero");

    const int iters = cfg.translation_iters();
    const uint64_t tag = kTagTranslation + round_tag;
    TileSampler src_sampler(source.tiles.size(), cfg.seed, tag + 1);
    TileSampler tgt_sampler(target.tiles.size(), cfg.seed, tag + 2);

    nn::Adam opt_f(nets.F->params(), cfg.gan_lr, cfg.adam_beta1, cfg.adam_beta2);
    nn::Adam opt_fi(nets.F_inv->params(), cfg.gan_lr, cfg.adam_beta1, cfg.adam_beta2);
    nn::Adam opt_dt(nets.D_T->params(), cfg.gan_lr, cfg.adam_beta1, cfg.adam_beta2);
    nn::Adam opt_ds(nets.D_S->params(), cfg.gan_lr, cfg.adam_beta1, cfg.adam_beta2);

    int start = 0;
    PhaseOutcome out;
    if (run.resume) {
        verify_resume(*run.resume, cfg, "translation");
        start = run.resume->meta.at("iteration").get<int>();
        src_sampler.restore(run.resume->meta.at("extra").at("sampler_src"));
        tgt_sampler.restore(run.resume->meta.at("extra").at("sampler_tgt"));
        opt_f.load_state_dict(run.resume->tensors, "opt.F.", start);
        opt_fi.load_state_dict(run.resume->tensors, "opt.F_inv.", start);
        opt_dt.load_state_dict(run.resume->tensors, "opt.D_T.", start);
        opt_ds.load_state_dict(run.resume->tensors, "opt.D_S.", start);
        for (const auto& v : run.resume->meta.at("extra").at("loss_trace"))
            out.loss_trace.push_back(v.get<double>());
    }

    // the segmenter only guides; it must come out bit-identical
    std::optional<nn::FreezeGuard> m_guard;
    uint64_t m_hash_before = 0;
    if (M_frozen) {
        m_hash_before = M_frozen->params().content_hash();
        m_guard.emplace(M_frozen->params());
    }

    for (int it = start; it < iters; ++it) {
        Batch sb = assemble_batch(source, src_sampler, cfg, tag + 1, it, false);
        Batch tb = assemble_batch(target, tgt_sampler, cfg, tag + 2, it, false);
        Var S = Var::constant(sb.images);
        Var T = Var::constant(tb.images);

        losses::TranslationForwards fw;
        auto [loss, bd] =
            losses::total_F_loss(cfg.weights, *nets.F, *nets.F_inv, *nets.D_T, *nets.D_S, M_frozen,
                                 S, T, &fw);
        check_finite(bd.total, "translation", it);

        opt_f.zero_grads();
        opt_fi.zero_grads();
        nn::backward(loss);
        opt_f.step();
        opt_fi.step();

        // discriminator turns on the just-produced (detached) fakes
        Var s_fake = Var::constant(fw.S_translated);
        Var t_fake = Var::constant(fw.T_translated);
        Var d_t = losses::gan_loss(*nets.D_T, T, s_fake, losses::GanSide::discriminator,
                                   cfg.weights.lambda_D);
        Var d_s = losses::gan_loss(*nets.D_S, S, t_fake, losses::GanSide::discriminator,
                                   cfg.weights.lambda_D);
        check_finite(d_t.scalar() + d_s.scalar(), "translation discriminators", it);
        opt_dt.zero_grads();
        nn::backward(d_t);
        opt_dt.step();
        opt_ds.zero_grads();
        nn::backward(d_s);
        opt_ds.step();

        if (run.logger)
            run.logger->log("translation", it, bd, {{"d_T", d_t.scalar()}, {"d_S", d_s.scalar()}});
        out.loss_trace.push_back(bd.total);

        const bool last = (it + 1 == iters);
        if (!run.ckpt_dir.empty() &&
            (last || (cfg.snapshot_every > 0 && (it + 1) % cfg.snapshot_every == 0))) {
            std::vector<std::pair<std::string, nn::Tensor>> opt_state = opt_f.state_dict("opt.F.");
            for (const auto& [n, t] : opt_fi.state_dict("opt.F_inv.")) opt_state.emplace_back(n, t);
            for (const auto& [n, t] : opt_dt.state_dict("opt.D_T.")) opt_state.emplace_back(n, t);
            for (const auto& [n, t] : opt_ds.state_dict("opt.D_S.")) opt_state.emplace_back(n, t);
            const fs::path file = ckpt_subdir(run.ckpt_dir, it + 1) / "translation.bin";
            save_translation_checkpoint(file, nets, it + 1, cfg.config_hash(),
                                        {{"sampler_src", src_sampler.state()},
                                         {"sampler_tgt", tgt_sampler.state()},
                                         {"loss_trace", trace_tail(out.loss_trace)},
                                         {"phase", "translation"}},
                                        opt_state);
            if (last) out.final_checkpoint = file;
        }
    }

    if (M_frozen) {
        m_guard.reset();
        LULC_CHECK(M_frozen->params().content_hash() == m_hash_before,
                   "translation phase mutated the frozen segmenter");
    }
    out.iterations = iters;
    return out;
}

PhaseOutcome train_segmenter_adapted(const TrainConfig& cfg,
                                     const data::DomainDataset& translated_source,
                                     const data::DomainDataset& target, SegmenterNets& nets,
                                     const PhaseRun& run, uint64_t round_tag) {
    cfg.validate();
    LULC_CHECK_T(translated_source.labeled, DataError,
                 "adapted segmentation training requires the translated source to carry labels");

    const int iters = cfg.adapted_iters();
    const uint64_t tag = kTagAdapted + round_tag;
    TileSampler src_sampler(translated_source.tiles.size(), cfg.seed, tag + 1);
    TileSampler tgt_sampler(target.tiles.size(), cfg.seed, tag + 2);

    nn::SgdPoly opt_m(nets.M->params(), cfg.seg_lr, cfg.seg_momentum, cfg.seg_poly_power, iters);
    nn::Adam opt_d(nets.D_out->params(), cfg.gan_lr, cfg.adam_beta1, cfg.adam_beta2);

    int start = 0;
    PhaseOutcome out;
    if (run.resume) {
        verify_resume(*run.resume, cfg, "segmenter");
        start = run.resume->meta.at("iteration").get<int>();
        src_sampler.restore(run.resume->meta.at("extra").at("sampler_src"));
        tgt_sampler.restore(run.resume->meta.at("extra").at("sampler_tgt"));
        opt_m.load_state_dict(run.resume->tensors, "opt.M.", start);
        opt_d.load_state_dict(run.resume->tensors, "opt.D_out.", start);
        for (const auto& v : run.resume->meta.at("extra").at("loss_trace"))
            out.loss_trace.push_back(v.get<double>());
    }

    for (int it = start; it < iters; ++it) {
        Batch sb = assemble_batch(translated_source, src_sampler, cfg, tag + 1, it, true);
        Batch tb = assemble_batch(target, tgt_sampler, cfg, tag + 2, it, false);

        Var logits_sp = nets.M->forward(Var::constant(sb.images));
        Var logits_t = nets.M->forward(Var::constant(tb.images));
        auto [m_loss, bd] =
            losses::total_M_loss(cfg.weights, *nets.D_out, logits_sp, sb.labels, logits_t);
        check_finite(bd.total, "adapted", it);

        opt_m.zero_grads();
        nn::backward(m_loss);
        opt_m.step();

        Var d_loss = losses::d_out_loss(*nets.D_out, Var::constant(logits_sp.value()),
                                        Var::constant(logits_t.value()));
        check_finite(d_loss.scalar(), "adapted discriminator", it);
        opt_d.zero_grads();
        nn::backward(d_loss);
        opt_d.step();

        if (run.logger) run.logger->log("adapted", it, bd, {{"d_out", d_loss.scalar()}});
        out.loss_trace.push_back(bd.total);

        const bool last = (it + 1 == iters);
        if (!run.ckpt_dir.empty() &&
            (last || (cfg.snapshot_every > 0 && (it + 1) % cfg.snapshot_every == 0))) {
            std::vector<std::pair<std::string, nn::Tensor>> opt_state = opt_m.state_dict("opt.M.");
            for (const auto& [n, t] : opt_d.state_dict("opt.D_out.")) opt_state.emplace_back(n, t);
            const fs::path file = ckpt_subdir(run.ckpt_dir, it + 1) / "segmenter.bin";
            save_segmenter_checkpoint(file, nets, it + 1, cfg.config_hash(),
                                      {{"sampler_src", src_sampler.state()},
                                       {"sampler_tgt", tgt_sampler.state()},
                                       {"loss_trace", trace_tail(out.loss_trace)},
                                       {"phase", "adapted"}},
                                      opt_state);
            if (last) out.final_checkpoint = file;
        }
    }
    out.iterations = iters;
    return out;
}

// ---------------------------------------------------------------------------
// inference over datasets
// ---------------------------------------------------------------------------

data::DomainDataset translate_dataset(const models::ResnetGenerator& F,
                                      const data::DomainDataset& dataset, int batch_size) {
    LULC_CHECK(batch_size >= 1, "translate_dataset: batch_size must be >= 1");
    nn::FreezeGuard freeze(const_cast<models::ResnetGenerator&>(F).params());

    data::DomainDataset out = dataset;
    out.name = dataset.name + "_translated";
    const int ts = dataset.tile_size;
    for (size_t base = 0; base < dataset.tiles.size(); base += static_cast<size_t>(batch_size)) {
        const int n = static_cast<int>(
            std::min(dataset.tiles.size() - base, static_cast<size_t>(batch_size)));
        nn::Tensor imgs({n, 3, ts, ts});
        for (int i = 0; i < n; ++i) {
            const data::TilePair& t = dataset.tiles[base + i];
            for (int y = 0; y < ts; ++y)
                for (int x = 0; x < ts; ++x)
                    for (int c = 0; c < 3; ++c)
                        imgs.at4(i, c, y, x) = t.image.at(y, x, c) / 127.5 - 1.0;
        }
        Var translated = F.forward(Var::constant(imgs));
        for (int i = 0; i < n; ++i) {
            data::TilePair& t = out.tiles[base + i];
            t.domain_id = out.name;
            for (int y = 0; y < ts; ++y)
                for (int x = 0; x < ts; ++x)
                    for (int c = 0; c < 3; ++c) {
                        const double v = (translated.value().at4(i, c, y, x) + 1.0) * 127.5;
                        t.image.at(y, x, c) =
                            static_cast<uint8_t>(std::clamp(round_half_even(v), 0, 255));
                    }
            // labels stay byte-identical to the input tiles
        }
    }
    return out;
}

eval::EvalReport evaluate_segmenter(const models::Segmenter& M, const data::DomainDataset& dataset,
                                    int batch_size, const std::string& report_name) {
    LULC_CHECK_T(dataset.labeled, DataError,
                 "evaluate_segmenter: dataset " << dataset.name << " carries no labels");
    LULC_CHECK(batch_size >= 1, "evaluate_segmenter: batch_size must be >= 1");
    nn::FreezeGuard freeze(const_cast<models::Segmenter&>(M).params());

    eval::ConfusionMatrix cm;
    const int ts = dataset.tile_size;
    for (size_t base = 0; base < dataset.tiles.size(); base += static_cast<size_t>(batch_size)) {
        const int n = static_cast<int>(
            std::min(dataset.tiles.size() - base, static_cast<size_t>(batch_size)));
        nn::Tensor imgs({n, 3, ts, ts});
        for (int i = 0; i < n; ++i) {
            const data::TilePair& t = dataset.tiles[base + i];
            for (int y = 0; y < ts; ++y)
                for (int x = 0; x < ts; ++x)
                    for (int c = 0; c < 3; ++c)
                        imgs.at4(i, c, y, x) = t.image.at(y, x, c) / 127.5 - 1.0;
        }
        Var logits = M.forward(Var::constant(imgs));
        for (int i = 0; i < n; ++i) {
            const data::LabelMap pred = eval::argmax_predict(logits.value(), i);
            cm.accumulate(pred, *dataset.tiles[base + i].label);
        }
    }
    return eval::make_report(report_name, cm,
                             {{"dataset", dataset.name}, {"tiles", dataset.tiles.size()}});
}

// ---------------------------------------------------------------------------
// full schedule
// ---------------------------------------------------------------------------

BdlResult run_bdl(const TrainConfig& cfg, const data::DomainDataset& source,
                  const data::DomainDataset& target, const fs::path& run_dir, RunLogger* logger) {
    cfg.validate();
    fs::create_directories(run_dir);

    BdlResult res;
    SegmenterNets seg = models::build_segmenter(cfg.segmentation, hash_combine(cfg.seed, 0x5E6));

    PhaseRun base_run;
    base_run.ckpt_dir = run_dir / "baseline";
    base_run.logger = logger;
    PhaseOutcome base = train_segmenter_baseline(cfg, source, &target, seg, base_run);
    ++res.segmentation_phases;
    res.final_segmenter_ckpt = base.final_checkpoint;
    if (target.labeled)
        res.round_reports.push_back(
            evaluate_segmenter(*seg.M, target, cfg.batch_size, "baseline"));

    for (int round = 1; round <= cfg.bdl_rounds; ++round) {
        TranslationNets tr =
            models::build_translation(cfg.translation, hash_combine(cfg.seed, 0xF0 + round));
        PhaseRun tr_run;
        tr_run.ckpt_dir = run_dir / ("round_" + std::to_string(round)) / "translation";
        tr_run.logger = logger;
        PhaseOutcome tr_out = train_translation(cfg, source, target, tr, seg.M.get(), tr_run,
                                                static_cast<uint64_t>(round));
        ++res.translation_phases;
        res.final_translation_ckpt = tr_out.final_checkpoint;

        data::DomainDataset translated = translate_dataset(*tr.F, source, cfg.batch_size);

        PhaseRun ad_run;
        ad_run.ckpt_dir = run_dir / ("round_" + std::to_string(round)) / "adapted";
        ad_run.logger = logger;
        PhaseOutcome ad_out = train_segmenter_adapted(cfg, translated, target, seg, ad_run,
                                                      static_cast<uint64_t>(round));
        ++res.segmentation_phases;
        res.final_segmenter_ckpt = ad_out.final_checkpoint;

        if (target.labeled)
            res.round_reports.push_back(evaluate_segmenter(
                *seg.M, target, cfg.batch_size, "round_" + std::to_string(round)));
    }

    nlohmann::json report = {{"translation_phases", res.translation_phases},
                             {"segmentation_phases", res.segmentation_phases},
                             {"rounds", cfg.bdl_rounds}};
    if (!res.round_reports.empty()) report["evaluations"] = eval::render_json(res.round_reports);
    std::ofstream rep(run_dir / "bdl_report.json");
    rep << report.dump(2) << "\n";
    return res;
}

}  // namespace lulc::train
