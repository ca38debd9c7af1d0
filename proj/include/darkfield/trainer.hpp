#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "darkfield/data.hpp"
#include "darkfield/losses.hpp"
#include "darkfield/network.hpp"
#include "darkfield/rng.hpp"

namespace darkfield {

/// Paired augmentation settings: one geometric op per sample applied to both
/// images, then a contrast scaling of the attenuation input alone (the target
/// distribution must stay fixed for the likelihood to be meaningful).
struct AugmentConfig {
    bool enabled = true;
    // draw probabilities for {identity, hflip, vflip, rot90, rot180, rot270}
    std::array<double, 6> geo_probs{1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6};
    double jitter = 0.15;  // contrast factor drawn from U(1-jitter, 1+jitter)
};

GeoOp draw_geo_op(Rng& rng, const std::array<double, 6>& probs);
PairedSample augment_pair(const PairedSample& sample, Rng& rng, const AugmentConfig& cfg);

struct StageTrainConfig {
    int stage_index = 1;
    int epochs = 50;
    double learning_rate = 8e-6;
    double lr_floor = 1e-7;
    LossWeights weights;
    double dropout_rate = 0.1;
    int batch_size = 4;
    uint64_t seed = 1;
    double adam_beta1 = 0.5;  // first-moment decay lowered for adversarial stability
    double adam_beta2 = 0.999;
    int residual_kernel = 5;
    AugmentConfig augment;
};

void validate(const StageTrainConfig& cfg);

/// Half-cosine decay from lr0 (t = 0) to lr_floor (t >= total):
///   lr(t) = lr_floor + 0.5 * (lr0 - lr_floor) * (1 + cos(pi * t / total)).
/// The trainer maps epoch e of E onto t = e, total = E - 1, so the first
/// epoch runs at lr0 and the last at the floor.
double cosine_lr(int t, int total, double lr0, double lr_floor);

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double train_adv = 0.0;
    double train_nll = 0.0;
    double train_res = 0.0;
    double train_total = 0.0;
    double train_disc = 0.0;
    double val_nll = 0.0;
};

struct TrainReport {
    int stage_index = 0;
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    double best_val_nll = 0.0;
    std::string checkpoint_path;
    double wall_seconds = 0.0;
};

/// Trains exactly the parameters of stage cfg.stage_index (earlier stages
/// frozen, their outputs recomputed per batch with fixed per-sample dropout
/// seeds). Alternates a discriminator and a generator update per batch,
/// tracks per-epoch validation likelihood, and keeps the best-validation
/// weights (in the returned generator state and on disk). Writes
/// logs/stage<k>_steps.jsonl and logs/stage<k>_epochs.jsonl under run_dir.
/// Throws TrainingAbort on a non-finite loss; the newest checkpoint on disk
/// stays valid. Throws std::invalid_argument if the train or val split is
/// empty.
TrainReport train_stage(ProgressiveGenerator& gen, PatchDiscriminator& disc,
                        const std::vector<PairedSample>& data, const StageTrainConfig& cfg,
                        const std::string& run_dir, const nlohmann::json& config_echo);

/// Runs the stages in order with a fresh discriminator per stage and writes
/// one checkpoint per stage plus the resolved config echo under run_dir.
std::vector<TrainReport> train_progressive(ProgressiveGenerator& gen,
                                           const std::vector<PairedSample>& data,
                                           const std::vector<StageTrainConfig>& cfgs,
                                           const std::string& run_dir,
                                           const nlohmann::json& config_echo);

}  // namespace darkfield
