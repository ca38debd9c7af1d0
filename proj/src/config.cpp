#include "darkfield/config.hpp"

#include <filesystem>
#include <stdexcept>

#include "darkfield/checkpoint.hpp"
#include "darkfield/rng.hpp"
#include "darkfield/util.hpp"

namespace darkfield {

namespace {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T* out) {
    if (!j.contains(key)) return;
    try {
        *out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("config key '") + key + "': " + e.what());
    }
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    if (j.contains("net")) {
        const auto& n = j.at("net");
        read_key(n, "stages", &cfg.net.stages);
        read_key(n, "levels", &cfg.net.levels);
        read_key(n, "base_width", &cfg.net.base_width);
        read_key(n, "alpha_min", &cfg.net.alpha_min);
        read_key(n, "alpha_init", &cfg.net.alpha_init);
        read_key(n, "beta_init", &cfg.net.beta_init);
        read_key(n, "disc_base_width", &cfg.net.disc_base_width);
        read_key(n, "disc_downsamples", &cfg.net.disc_downsamples);
        read_key(n, "init_seed", &cfg.net.init_seed);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        read_key(t, "epochs", &cfg.epochs);
        read_key(t, "learning_rate", &cfg.learning_rate);
        read_key(t, "lr_floor", &cfg.lr_floor);
        read_key(t, "dropout", &cfg.dropout);
        read_key(t, "batch_size", &cfg.batch_size);
        read_key(t, "seed", &cfg.train_seed);
        read_key(t, "lambda_fidelity", &cfg.weights.lambda_fidelity);
        read_key(t, "lambda_residual", &cfg.weights.lambda_residual);
        read_key(t, "adam_beta1", &cfg.adam_beta1);
        read_key(t, "adam_beta2", &cfg.adam_beta2);
        read_key(t, "residual_kernel", &cfg.residual_kernel);
        if (t.contains("augment")) {
            const auto& a = t.at("augment");
            read_key(a, "enabled", &cfg.augment.enabled);
            read_key(a, "jitter", &cfg.augment.jitter);
            if (a.contains("geo_probs")) {
                const auto probs = a.at("geo_probs").get<std::vector<double>>();
                if (probs.size() != 6) {
                    throw std::runtime_error("config key 'geo_probs': need 6 probabilities");
                }
                std::copy(probs.begin(), probs.end(), cfg.augment.geo_probs.begin());
            }
        }
    }
    if (j.contains("inference")) {
        const auto& i = j.at("inference");
        read_key(i, "passes", &cfg.passes);
        read_key(i, "seed", &cfg.infer_seed);
    }
    read_key(j, "split_seed", &cfg.split_seed);
    cfg.net.dropout_rate = cfg.dropout;  // stages are built with the run's rate
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const std::exception& e) {
        throw std::runtime_error("config " + path + ": " + e.what());
    }
    return run_config_from_json(j);
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
    return nlohmann::json{
        {"net", net_config_to_json(cfg.net)},
        {"train",
         {{"epochs", cfg.epochs},
          {"learning_rate", cfg.learning_rate},
          {"lr_floor", cfg.lr_floor},
          {"dropout", cfg.dropout},
          {"batch_size", cfg.batch_size},
          {"seed", cfg.train_seed},
          {"lambda_fidelity", cfg.weights.lambda_fidelity},
          {"lambda_residual", cfg.weights.lambda_residual},
          {"adam_beta1", cfg.adam_beta1},
          {"adam_beta2", cfg.adam_beta2},
          {"residual_kernel", cfg.residual_kernel},
          {"augment",
           {{"enabled", cfg.augment.enabled},
            {"jitter", cfg.augment.jitter},
            {"geo_probs", cfg.augment.geo_probs}}}}},
        {"inference", {{"passes", cfg.passes}, {"seed", cfg.infer_seed}}},
        {"split_seed", cfg.split_seed}};
}

std::vector<StageTrainConfig> stage_configs(const RunConfig& cfg) {
    std::vector<StageTrainConfig> out;
    for (int k = 1; k <= cfg.net.stages; ++k) {
        StageTrainConfig s;
        s.stage_index = k;
        s.epochs = cfg.epochs;
        s.learning_rate = cfg.learning_rate;
        s.lr_floor = cfg.lr_floor;
        s.weights = cfg.weights;
        s.dropout_rate = cfg.dropout;
        s.batch_size = cfg.batch_size;
        s.seed = mix_seed(cfg.train_seed, static_cast<uint64_t>(k));
        s.adam_beta1 = cfg.adam_beta1;
        s.adam_beta2 = cfg.adam_beta2;
        s.residual_kernel = cfg.residual_kernel;
        s.augment = cfg.augment;
        out.push_back(s);
    }
    return out;
}

PhantomConfig phantom_config_from_json(const nlohmann::json& j) {
    PhantomConfig cfg;
    read_key(j, "height", &cfg.height);
    read_key(j, "width", &cfg.width);
    read_key(j, "count", &cfg.count);
    read_key(j, "sigma_lo", &cfg.sigma_lo);
    read_key(j, "sigma_hi", &cfg.sigma_hi);
    read_key(j, "confounder_prob", &cfg.confounder_prob);
    read_key(j, "stripes", &cfg.stripes);
    read_key(j, "texture_cells", &cfg.texture_cells);
    read_key(j, "seed", &cfg.seed);
    validate(cfg);
    return cfg;
}

std::optional<SplitCounts> split_override_from_json(const nlohmann::json& j) {
    if (!j.contains("splits")) return std::nullopt;
    const auto& s = j.at("splits");
    SplitCounts c;
    c.train = s.at("train").get<int>();
    c.val = s.at("val").get<int>();
    c.test = s.at("test").get<int>();
    return c;
}

void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const nlohmann::json& resolved_config, const nlohmann::json& seeds,
                        const std::vector<std::string>& artifacts) {
    std::filesystem::create_directories(out_dir);
    nlohmann::json manifest{{"command", command},
                            {"resolved_config", resolved_config},
                            {"seeds", seeds},
                            {"artifacts", artifacts},
                            {"tool_version", kToolVersion},
                            {"written", now_iso8601()}};
    write_text_file((std::filesystem::path(out_dir) / "manifest.json").string(),
                    manifest.dump(2) + "\n");
}

}  // namespace darkfield
