#include "darkfield/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "darkfield/checkpoint.hpp"
#include "darkfield/ggd.hpp"
#include "darkfield/util.hpp"

namespace fs = std::filesystem;

namespace darkfield {

GeoOp draw_geo_op(Rng& rng, const std::array<double, 6>& probs) {
    double total = 0.0;
    for (double p : probs) {
        if (p < 0.0) throw std::invalid_argument("geometric-op probabilities must be >= 0");
        total += p;
    }
    if (total <= 0.0) throw std::invalid_argument("geometric-op probabilities sum to zero");
    const double u = rng.uniform() * total;
    double acc = 0.0;
    for (int i = 0; i < 6; ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<GeoOp>(i);
    }
    return GeoOp::kRot270;
}

PairedSample augment_pair(const PairedSample& sample, Rng& rng, const AugmentConfig& cfg) {
    if (!cfg.enabled) return sample;
    if (sample.darkfield && !sample.attenuation.same_shape(*sample.darkfield)) {
        throw std::invalid_argument("augment_pair: unpaired shapes for id " + sample.id);
    }
    const GeoOp op = draw_geo_op(rng, cfg.geo_probs);
    const double factor = cfg.jitter > 0.0 ? rng.uniform(1.0 - cfg.jitter, 1.0 + cfg.jitter) : 1.0;

    PairedSample out;
    out.id = sample.id;
    out.split = sample.split;
    out.attenuation = contrast_jitter(geometric_transform(sample.attenuation, op), factor);
    if (sample.darkfield) out.darkfield = geometric_transform(*sample.darkfield, op);
    if (sample.truth_noise_sigma) {
        out.truth_noise_sigma = geometric_transform(*sample.truth_noise_sigma, op);
    }
    return out;
}

void validate(const StageTrainConfig& cfg) {
    if (cfg.stage_index < 1) throw std::invalid_argument("stage_index must be >= 1");
    if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (cfg.lr_floor < 0.0 || cfg.lr_floor > cfg.learning_rate) {
        throw std::invalid_argument("lr_floor must lie in [0, learning_rate]");
    }
    if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0) {
        throw std::invalid_argument("dropout_rate must lie in [0, 1)");
    }
    if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (cfg.residual_kernel < 1 || cfg.residual_kernel % 2 == 0) {
        throw std::invalid_argument("residual_kernel must be odd and positive");
    }
    if (!(cfg.weights.lambda_fidelity >= 0.0) || !(cfg.weights.lambda_residual >= 0.0)) {
        throw std::invalid_argument("loss weights must be >= 0");
    }
}

double cosine_lr(int t, int total, double lr0, double lr_floor) {
    if (total < 1) throw std::invalid_argument("cosine_lr: total must be >= 1");
    if (t <= 0) return lr0;
    if (t >= total) return lr_floor;
    constexpr double kPi = 3.141592653589793238462643383279502884;
    const double c = std::cos(kPi * static_cast<double>(t) / static_cast<double>(total));
    return lr_floor + 0.5 * (lr0 - lr_floor) * (1.0 + c);
}

namespace {

// Salt constants separating the independent random streams of a run.
constexpr uint64_t kShuffleSalt = 0xe91fULL;
constexpr uint64_t kAugmentSalt = 0xa96bULL;
constexpr uint64_t kFrozenSalt = 0xf207ULL;
constexpr uint64_t kStepDropSalt = 0xd0c4ULL;
constexpr uint64_t kValDropSalt = 0x7a15ULL;

struct PrevOutputs {
    Image2D y;
    Image2D attention;
};

// Frozen stages 1..k-1 on the (already augmented) attenuation. The dropout
// pattern of each frozen stage is fixed per sample, not per step.
PrevOutputs frozen_cascade(ProgressiveGenerator& gen, int k, const Image2D& attenuation,
                           uint64_t sample_key, uint64_t run_seed) {
    PrevOutputs prev;
    Image2D alpha, beta;
    for (int j = 1; j < k; ++j) {
        const uint64_t seed = mix_seed(run_seed, kFrozenSalt, sample_key, static_cast<uint64_t>(j));
        StageForwardResult res;
        if (j == 1) {
            res = stage_forward(gen.stage(j), attenuation, nullptr, nullptr, seed);
        } else {
            const Image2D attention = attention_from_sigma(effective_sigma(GgdParams{alpha, beta}));
            res = stage_forward(gen.stage(j), attenuation, &prev.y, &attention, seed);
        }
        prev.y = std::move(res.y);
        alpha = std::move(res.params.alpha);
        beta = std::move(res.params.beta);
    }
    if (k > 1) {
        prev.attention = attention_from_sigma(effective_sigma(GgdParams{alpha, beta}));
    }
    return prev;
}

double finite_or_abort(double v, const std::string& what) {
    if (!std::isfinite(v)) throw TrainingAbort(what + " is not finite");
    return v;
}

std::string json_line(const nlohmann::json& j) { return j.dump() + "\n"; }

}  // namespace

TrainReport train_stage(ProgressiveGenerator& gen, PatchDiscriminator& disc,
                        const std::vector<PairedSample>& data, const StageTrainConfig& cfg,
                        const std::string& run_dir, const nlohmann::json& config_echo) {
    validate(cfg);
    const auto t_start = std::chrono::steady_clock::now();
    const int k = cfg.stage_index;
    if (k > gen.num_stages()) {
        throw std::invalid_argument("stage_index exceeds the model's stage count");
    }

    std::vector<const PairedSample*> train, val;
    for (const auto& s : data) {
        if (s.split == Split::kTrain) train.push_back(&s);
        if (s.split == Split::kVal) val.push_back(&s);
    }
    if (train.empty()) throw std::invalid_argument("train split is empty");
    if (val.empty()) throw std::invalid_argument("val split is empty");
    for (const auto* s : train) {
        if (!s->darkfield) throw std::invalid_argument("train sample lacks a target: " + s->id);
    }
    for (const auto* s : val) {
        if (!s->darkfield) throw std::invalid_argument("val sample lacks a target: " + s->id);
    }

    gen.freeze_stages_below(k);
    gen.set_dropout_rate(cfg.dropout_rate);
    for (int j = 1; j < k; ++j) gen.stage(j).set_inference_mode(true);
    gen.stage(k).set_inference_mode(false);

    Adam g_opt(gen.stage_params(k), cfg.adam_beta1, cfg.adam_beta2);
    Adam d_opt(disc.params(), cfg.adam_beta1, cfg.adam_beta2);

    fs::create_directories(fs::path(run_dir) / "logs");
    fs::create_directories(fs::path(run_dir) / "checkpoints");
    const std::string tag = "stage" + std::to_string(k);
    std::ofstream step_log((fs::path(run_dir) / "logs" / (tag + "_steps.jsonl")).string());
    std::ofstream epoch_log((fs::path(run_dir) / "logs" / (tag + "_epochs.jsonl")).string());
    if (!step_log || !epoch_log) throw std::runtime_error("cannot open training logs in " + run_dir);

    TrainReport report;
    report.stage_index = k;
    report.best_val_nll = std::numeric_limits<double>::infinity();
    report.checkpoint_path = (fs::path(run_dir) / "checkpoints" / (tag + "_best.ckpt")).string();

    nlohmann::json echo = config_echo;
    echo["trained_through_stage"] = k;

    auto stage_params = gen.stage_params(k);
    std::vector<std::vector<double>> best_weights;

    // Per-sample pass of both update phases: the same (epoch, position) keys
    // reproduce the same augmentation, frozen outputs, and dropout pattern in
    // the two phases, so the generator's second forward matches the first.
    struct Prepared {
        PairedSample sample;
        PrevOutputs prev;
        uint64_t drop_seed;
    };
    auto prepare = [&](size_t dataset_idx, int epoch, size_t pos) {
        Rng aug_rng(mix_seed(cfg.seed, kAugmentSalt, static_cast<uint64_t>(epoch), pos));
        Prepared p;
        p.sample = augment_pair(*train[dataset_idx], aug_rng, cfg.augment);
        p.prev = frozen_cascade(gen, k, p.sample.attenuation, fnv1a64(p.sample.id.data(), p.sample.id.size()),
                                cfg.seed);
        p.drop_seed = mix_seed(cfg.seed, kStepDropSalt, static_cast<uint64_t>(epoch), pos);
        return p;
    };
    auto forward_k = [&](const Prepared& p) {
        const Image2D* prev_y = k > 1 ? &p.prev.y : nullptr;
        const Image2D* prev_att = k > 1 ? &p.prev.attention : nullptr;
        return stage_forward(gen.stage(k), p.sample.attenuation, prev_y, prev_att, p.drop_seed);
    };

    long global_step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.epochs > 1
                              ? cosine_lr(epoch, cfg.epochs - 1, cfg.learning_rate, cfg.lr_floor)
                              : cfg.learning_rate;

        std::vector<size_t> order(train.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(mix_seed(cfg.seed, kShuffleSalt, static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, static_cast<int>(i) - 1)]);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        int n_steps = 0;

        for (size_t b0 = 0; b0 < order.size(); b0 += static_cast<size_t>(cfg.batch_size)) {
            const size_t b1 = std::min(order.size(), b0 + static_cast<size_t>(cfg.batch_size));
            const double inv_batch = 1.0 / static_cast<double>(b1 - b0);

            // Discriminator phase: least-squares targets 1 (real) / 0 (fake).
            d_opt.zero_grad();
            double batch_disc = 0.0;
            for (size_t pos = b0; pos < b1; ++pos) {
                const Prepared p = prepare(order[pos], epoch, pos);
                const StageForwardResult out = forward_k(p);

                const Image2D sr = discriminator_forward(disc, *p.sample.darkfield, p.sample.attenuation);
                {
                    Tensor ds(1, sr.height, sr.width);
                    const double scale = inv_batch / static_cast<double>(sr.size());
                    for (size_t i = 0; i < sr.size(); ++i) ds.v[i] = (sr.data[i] - 1.0) * scale;
                    disc.backward(ds);
                }
                const Image2D sf = discriminator_forward(disc, out.y, p.sample.attenuation);
                {
                    Tensor ds(1, sf.height, sf.width);
                    const double scale = inv_batch / static_cast<double>(sf.size());
                    for (size_t i = 0; i < sf.size(); ++i) ds.v[i] = sf.data[i] * scale;
                    disc.backward(ds);
                }
                batch_disc += finite_or_abort(discriminator_loss(sr, sf), "L_disc") * inv_batch;
            }
            d_opt.step(lr);

            // Generator phase against the just-updated discriminator.
            g_opt.zero_grad();
            double batch_adv = 0.0, batch_nll = 0.0, batch_res = 0.0, batch_total = 0.0;
            for (size_t pos = b0; pos < b1; ++pos) {
                const Prepared p = prepare(order[pos], epoch, pos);
                const StageForwardResult out = forward_k(p);
                const Image2D& target = *p.sample.darkfield;

                const Image2D sf = discriminator_forward(disc, out.y, p.sample.attenuation);
                const NllResult nll = ggd_nll(target, out.y, out.params);
                const double res_loss =
                    residual_consistency_loss(out.y, target, cfg.residual_kernel);
                const GeneratorLossBreakdown parts =
                    generator_loss(sf, nll.per_pixel, res_loss, cfg.weights);
                batch_adv += parts.adv * inv_batch;
                batch_nll += parts.nll * inv_batch;
                batch_res += parts.residual * inv_batch;
                batch_total += parts.total * inv_batch;

                // d(adv)/d(fake) through the critic
                Tensor ds(1, sf.height, sf.width);
                const double s_scale = 1.0 / static_cast<double>(sf.size());
                for (size_t i = 0; i < sf.size(); ++i) ds.v[i] = (sf.data[i] - 1.0) * s_scale;
                const Tensor dx = disc.backward(ds);  // critic grads cleared next batch

                const NllGrad ng = ggd_nll_grad(target, out.y, out.params);
                const Image2D rg = residual_consistency_grad(out.y, target, cfg.residual_kernel);

                const int h = out.y.height, w = out.y.width;
                const double n_pix = static_cast<double>(out.y.size());
                Tensor dy(1, h, w), dalpha(1, h, w), dbeta(1, h, w);
                const double* d_fake = dx.plane_ptr(0);
                for (size_t i = 0; i < out.y.size(); ++i) {
                    dy.v[i] = (d_fake[i] + cfg.weights.lambda_fidelity * ng.d_pred.data[i] / n_pix +
                               cfg.weights.lambda_residual * rg.data[i]) *
                              inv_batch;
                    dalpha.v[i] =
                        cfg.weights.lambda_fidelity * ng.d_alpha.data[i] / n_pix * inv_batch;
                    dbeta.v[i] = cfg.weights.lambda_fidelity * ng.d_beta.data[i] / n_pix * inv_batch;
                }
                gen.stage(k).backward(dy, dalpha, dbeta);
            }
            g_opt.step(lr);

            step_log << json_line({{"step", global_step},
                                   {"stage", k},
                                   {"epoch", epoch},
                                   {"lr", lr},
                                   {"L_adv", batch_adv},
                                   {"L_nll", batch_nll},
                                   {"L_res", batch_res},
                                   {"L_total", batch_total},
                                   {"L_disc", batch_disc}});
            rec.train_adv += batch_adv;
            rec.train_nll += batch_nll;
            rec.train_res += batch_res;
            rec.train_total += batch_total;
            rec.train_disc += batch_disc;
            ++n_steps;
            ++global_step;
        }
        rec.train_adv /= n_steps;
        rec.train_nll /= n_steps;
        rec.train_res /= n_steps;
        rec.train_total /= n_steps;
        rec.train_disc /= n_steps;

        // Validation likelihood with a per-sample fixed dropout pattern, so
        // epochs and reruns are comparable.
        gen.stage(k).set_inference_mode(true);
        double val_nll = 0.0;
        for (const auto* vs : val) {
            const uint64_t key = fnv1a64(vs->id.data(), vs->id.size());
            const PrevOutputs prev = frozen_cascade(gen, k, vs->attenuation, key, cfg.seed);
            const Image2D* prev_y = k > 1 ? &prev.y : nullptr;
            const Image2D* prev_att = k > 1 ? &prev.attention : nullptr;
            const StageForwardResult out = stage_forward(
                gen.stage(k), vs->attenuation, prev_y, prev_att, mix_seed(cfg.seed, kValDropSalt, key));
            val_nll += ggd_nll(*vs->darkfield, out.y, out.params).mean;
        }
        val_nll = finite_or_abort(val_nll / static_cast<double>(val.size()), "validation NLL");
        gen.stage(k).set_inference_mode(false);
        rec.val_nll = val_nll;

        epoch_log << json_line({{"epoch", epoch},
                                {"stage", k},
                                {"lr", lr},
                                {"train_adv", rec.train_adv},
                                {"train_nll", rec.train_nll},
                                {"train_res", rec.train_res},
                                {"train_total", rec.train_total},
                                {"train_disc", rec.train_disc},
                                {"val_nll", rec.val_nll}});
        report.epochs.push_back(rec);

        if (val_nll < report.best_val_nll) {
            report.best_val_nll = val_nll;
            report.best_epoch = epoch;
            best_weights.clear();
            for (const auto& p : stage_params) best_weights.push_back(*p.w);
            save_checkpoint(report.checkpoint_path, gen, echo);
        }
    }

    // Leave the generator holding the best-validation weights.
    for (size_t i = 0; i < stage_params.size(); ++i) *stage_params[i].w = best_weights[i];
    gen.set_inference_mode(false);

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

std::vector<TrainReport> train_progressive(ProgressiveGenerator& gen,
                                           const std::vector<PairedSample>& data,
                                           const std::vector<StageTrainConfig>& cfgs,
                                           const std::string& run_dir,
                                           const nlohmann::json& config_echo) {
    if (cfgs.empty()) throw std::invalid_argument("train_progressive: no stage configs");
    fs::create_directories(run_dir);
    write_text_file((fs::path(run_dir) / "config_echo.json").string(), config_echo.dump(2) + "\n");

    std::vector<TrainReport> reports;
    for (size_t i = 0; i < cfgs.size(); ++i) {
        if (cfgs[i].stage_index != static_cast<int>(i) + 1) {
            throw std::invalid_argument("stage configs must cover stages 1..n in order");
        }
        PatchDiscriminator disc(gen.config(), /*seed_salt=*/cfgs[i].seed + i);
        reports.push_back(train_stage(gen, disc, data, cfgs[i], run_dir, config_echo));

        // Since the best weights are restored before the next stage trains,
        // the stage checkpoint equals the generator state at this point.
        nlohmann::json summary{{"stage", cfgs[i].stage_index},
                               {"best_epoch", reports.back().best_epoch},
                               {"best_val_nll", reports.back().best_val_nll},
                               {"checkpoint", reports.back().checkpoint_path},
                               {"wall_seconds", reports.back().wall_seconds}};
        write_text_file(
            (fs::path(run_dir) / ("stage" + std::to_string(cfgs[i].stage_index) + "_summary.json"))
                .string(),
            summary.dump(2) + "\n");
    }
    return reports;
}

}  // namespace darkfield
