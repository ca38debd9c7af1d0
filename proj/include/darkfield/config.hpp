#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "darkfield/network.hpp"
#include "darkfield/trainer.hpp"

namespace darkfield {

/// Fully resolved run settings shared by the training and inference commands.
/// Defaults are the reference protocol: 50 epochs per stage at 8e-6 with
/// cosine annealing, dropout 0.1, fidelity/residual weights (0.8, 0.001),
/// and 20 stochastic passes at test time.
struct RunConfig {
    NetConfig net;
    int epochs = 50;
    double learning_rate = 8e-6;
    double lr_floor = 1e-7;
    double dropout = 0.1;
    int batch_size = 4;
    uint64_t train_seed = 1;
    LossWeights weights;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    int residual_kernel = 5;
    AugmentConfig augment;
    int passes = 20;
    uint64_t infer_seed = 1234;
    uint64_t split_seed = 20;
};

/// Parses a config file; absent keys keep their defaults, malformed values
/// throw std::runtime_error naming the key.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

/// Full echo of every resolved field (the artifact a run can be reproduced
/// from).
nlohmann::json run_config_to_json(const RunConfig& cfg);

/// Expands the run config into one per-stage training config for stages
/// 1..cfg.net.stages.
std::vector<StageTrainConfig> stage_configs(const RunConfig& cfg);

/// Reads the phantom-generator settings plus optional explicit split sizes.
PhantomConfig phantom_config_from_json(const nlohmann::json& j);
std::optional<SplitCounts> split_override_from_json(const nlohmann::json& j);

/// Writes <out_dir>/manifest.json describing one command invocation: the
/// resolved config, the seeds in play, and the artifacts produced.
void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const nlohmann::json& resolved_config, const nlohmann::json& seeds,
                        const std::vector<std::string>& artifacts);

}  // namespace darkfield
