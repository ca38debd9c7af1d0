#include "darkfield/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "darkfield/util.hpp"

namespace darkfield {

namespace {

void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("checkpoint " + path + ": " + what);
}

}  // namespace

nlohmann::json net_config_to_json(const NetConfig& cfg) {
    return nlohmann::json{{"stages", cfg.stages},
                          {"levels", cfg.levels},
                          {"base_width", cfg.base_width},
                          {"dropout_rate", cfg.dropout_rate},
                          {"alpha_min", cfg.alpha_min},
                          {"alpha_init", cfg.alpha_init},
                          {"beta_init", cfg.beta_init},
                          {"disc_base_width", cfg.disc_base_width},
                          {"disc_downsamples", cfg.disc_downsamples},
                          {"init_seed", cfg.init_seed}};
}

NetConfig net_config_from_json(const nlohmann::json& j) {
    NetConfig cfg;
    cfg.stages = j.at("stages").get<int>();
    cfg.levels = j.at("levels").get<int>();
    cfg.base_width = j.at("base_width").get<int>();
    cfg.dropout_rate = j.at("dropout_rate").get<double>();
    cfg.alpha_min = j.at("alpha_min").get<double>();
    cfg.alpha_init = j.at("alpha_init").get<double>();
    cfg.beta_init = j.at("beta_init").get<double>();
    cfg.disc_base_width = j.at("disc_base_width").get<int>();
    cfg.disc_downsamples = j.at("disc_downsamples").get<int>();
    cfg.init_seed = j.at("init_seed").get<uint64_t>();
    return cfg;
}

void save_checkpoint(const std::string& path, ProgressiveGenerator& gen,
                     const nlohmann::json& config_echo) {
    auto params = gen.all_params();
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& p : params) {
        tensors.push_back({{"name", p.name}, {"size", p.w->size()}});
    }
    nlohmann::json header{{"format_version", kCheckpointFormatVersion},
                          {"net", net_config_to_json(gen.config())},
                          {"tensors", tensors},
                          {"config_echo", config_echo},
                          {"checksum", hex64(checksum_params(params))}};
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    out.write(kCheckpointMagic, 8);
    const uint64_t hlen = header_str.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& p : params) {
        out.write(reinterpret_cast<const char*>(p.w->data()),
                  static_cast<std::streamsize>(p.w->size() * sizeof(double)));
    }
    if (!out) fail(path, "write failed");
}

namespace {

nlohmann::json read_header(std::ifstream& in, const std::string& path) {
    char magic[8];
    if (!in.read(magic, 8)) fail(path, "too short for magic");
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0) fail(path, "bad magic (not a model file)");
    uint64_t hlen = 0;
    if (!in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen))) fail(path, "truncated header length");
    if (hlen == 0 || hlen > (1ULL << 24)) fail(path, "implausible header length");
    std::string header_str(hlen, '\0');
    if (!in.read(header_str.data(), static_cast<std::streamsize>(hlen))) {
        fail(path, "truncated header");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        fail(path, std::string("header is not valid JSON: ") + e.what());
    }
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
        fail(path, "unsupported format version " + std::to_string(version));
    }
    return header;
}

CheckpointMeta meta_from_header(const nlohmann::json& header) {
    CheckpointMeta meta;
    meta.format_version = header.at("format_version").get<int>();
    meta.net = net_config_from_json(header.at("net"));
    meta.config_echo = header.value("config_echo", nlohmann::json::object());
    meta.param_checksum = std::stoull(header.at("checksum").get<std::string>(), nullptr, 16);
    return meta;
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    return meta_from_header(read_header(in, path));
}

ProgressiveGenerator load_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    const nlohmann::json header = read_header(in, path);
    const CheckpointMeta meta = meta_from_header(header);

    ProgressiveGenerator gen(meta.net);
    auto params = gen.all_params();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != params.size()) {
        fail(path, "tensor count mismatch: file has " + std::to_string(tensors.size()) +
                       ", architecture needs " + std::to_string(params.size()));
    }
    for (size_t i = 0; i < params.size(); ++i) {
        const std::string name = tensors[i].at("name").get<std::string>();
        const size_t size = tensors[i].at("size").get<size_t>();
        if (name != params[i].name || size != params[i].w->size()) {
            fail(path, "tensor " + std::to_string(i) + " mismatch: file has " + name + "[" +
                           std::to_string(size) + "], architecture needs " + params[i].name + "[" +
                           std::to_string(params[i].w->size()) + "]");
        }
        if (!in.read(reinterpret_cast<char*>(params[i].w->data()),
                     static_cast<std::streamsize>(size * sizeof(double)))) {
            fail(path, "truncated while reading tensor " + name);
        }
    }
    if (checksum_params(params) != meta.param_checksum) fail(path, "parameter checksum mismatch");
    if (meta_out != nullptr) *meta_out = meta;
    return gen;
}

}  // namespace darkfield
