#include "darkfield/inference.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include <json.hpp>

#include "darkfield/data.hpp"
#include "darkfield/ggd.hpp"
#include "darkfield/losses.hpp"
#include "darkfield/rng.hpp"
#include "darkfield/util.hpp"

namespace fs = std::filesystem;

namespace darkfield {

void RunningMoments::add(const Image2D& m) {
    if (n_ == 0) {
        first_ = m;
        sum_d_ = Image2D(m.height, m.width, 0.0);
        sum_d2_ = Image2D(m.height, m.width, 0.0);
    } else {
        if (!m.same_shape(first_)) throw std::invalid_argument("RunningMoments: shape changed");
        for (size_t i = 0; i < m.size(); ++i) {
            const double d = m.data[i] - first_.data[i];
            sum_d_.data[i] += d;
            sum_d2_.data[i] += d * d;
        }
    }
    ++n_;
}

Image2D RunningMoments::mean() const {
    if (n_ == 0) throw std::logic_error("RunningMoments: empty");
    Image2D out = first_;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] += sum_d_.data[i] / n_;
    return out;
}

Image2D RunningMoments::population_var() const {
    if (n_ == 0) throw std::logic_error("RunningMoments: empty");
    Image2D out(first_.height, first_.width, 0.0);
    for (size_t i = 0; i < out.size(); ++i) {
        const double md = sum_d_.data[i] / n_;
        out.data[i] = std::max(0.0, sum_d2_.data[i] / n_ - md * md);
    }
    return out;
}

namespace {

// Restores training-mode caching when an inference scope ends, even on throw.
struct InferenceModeScope {
    ProgressiveGenerator& gen;
    explicit InferenceModeScope(ProgressiveGenerator& g) : gen(g) { gen.set_inference_mode(true); }
    ~InferenceModeScope() { gen.set_inference_mode(false); }
};

struct CascadeMaps {
    Image2D y, alpha, beta;
};

// One stochastic pass through stages 1..k on an already padded input.
CascadeMaps padded_cascade(ProgressiveGenerator& gen, const Image2D& padded, int k,
                           uint64_t pass_seed) {
    CascadeMaps cur;
    for (int j = 1; j <= k; ++j) {
        GeneratorStage& stage = gen.stage(j);
        StageForwardResult res;
        if (j == 1) {
            res = stage_forward(stage, padded, nullptr, nullptr, mix_seed(pass_seed, j));
        } else {
            const Image2D sigma = effective_sigma(GgdParams{cur.alpha, cur.beta});
            const Image2D attention = attention_from_sigma(sigma);
            res = stage_forward(stage, padded, &cur.y, &attention, mix_seed(pass_seed, j));
        }
        cur.y = std::move(res.y);
        cur.alpha = std::move(res.params.alpha);
        cur.beta = std::move(res.params.beta);
    }
    return cur;
}

}  // namespace

StageForwardResult cascade_forward(ProgressiveGenerator& gen, const Image2D& input, int k,
                                   uint64_t pass_seed) {
    if (k < 1 || k > gen.num_stages()) {
        throw std::invalid_argument("cascade_forward: stage " + std::to_string(k) +
                                    " out of range [1, " + std::to_string(gen.num_stages()) + "]");
    }
    if (!image_finite(input)) throw std::invalid_argument("cascade_forward: non-finite input");
    const int mult = gen.stage(1).spatial_multiple();
    const int ph = std::max(8, (input.height + mult - 1) / mult * mult);
    const int pw = std::max(8, (input.width + mult - 1) / mult * mult);
    const Image2D padded = pad_replicate(input, ph - input.height, pw - input.width);

    CascadeMaps maps = padded_cascade(gen, padded, k, pass_seed);
    StageForwardResult out;
    out.y = crop_top_left(maps.y, input.height, input.width);
    out.params.alpha = crop_top_left(maps.alpha, input.height, input.width);
    out.params.beta = crop_top_left(maps.beta, input.height, input.width);
    return out;
}

UncertaintyBundle stage_infer(ProgressiveGenerator& gen, const Image2D& input, int k, int passes,
                              uint64_t seed) {
    if (passes < 1) throw std::invalid_argument("stage_infer: passes must be >= 1");
    if (k < 1 || k > gen.num_stages()) {
        throw std::invalid_argument("stage_infer: stage " + std::to_string(k) +
                                    " out of range [1, " + std::to_string(gen.num_stages()) + "]");
    }
    if (!image_finite(input)) throw std::invalid_argument("stage_infer: non-finite input");

    const int mult = gen.stage(1).spatial_multiple();
    const int ph = std::max(8, (input.height + mult - 1) / mult * mult);
    const int pw = std::max(8, (input.width + mult - 1) / mult * mult);
    const Image2D padded = pad_replicate(input, ph - input.height, pw - input.width);

    InferenceModeScope scope(gen);
    RunningMoments y_mom, sigma_mom, alpha_mom, beta_mom;
    for (int t = 0; t < passes; ++t) {
        const CascadeMaps maps = padded_cascade(gen, padded, k, mix_seed(seed, t));
        y_mom.add(maps.y);
        sigma_mom.add(effective_sigma(GgdParams{maps.alpha, maps.beta}));
        alpha_mom.add(maps.alpha);
        beta_mom.add(maps.beta);
    }

    UncertaintyBundle b;
    b.prediction = crop_top_left(y_mom.mean(), input.height, input.width);
    b.epistemic_var = crop_top_left(y_mom.population_var(), input.height, input.width);
    b.aleatoric_sigma = crop_top_left(sigma_mom.mean(), input.height, input.width);
    b.alpha_mean = crop_top_left(alpha_mom.mean(), input.height, input.width);
    b.beta_mean = crop_top_left(beta_mom.mean(), input.height, input.width);
    b.passes = passes;
    for (const Image2D* m :
         {&b.prediction, &b.aleatoric_sigma, &b.epistemic_var, &b.alpha_mean, &b.beta_mean}) {
        if (!image_finite(*m)) throw TrainingAbort("stage_infer produced a non-finite map");
    }
    return b;
}

UncertaintyBundle mc_infer(ProgressiveGenerator& gen, const Image2D& input, int passes,
                           uint64_t seed) {
    return stage_infer(gen, input, gen.num_stages(), passes, seed);
}

namespace {

struct MapFile {
    const char* name;
    Image2D UncertaintyBundle::* field;
    bool unit_range;  // fixed [0,1] encoding vs dynamic [0,max]
};

constexpr MapFile kMapFiles[] = {
    {"prediction", &UncertaintyBundle::prediction, true},
    {"aleatoric_sigma", &UncertaintyBundle::aleatoric_sigma, false},
    {"epistemic_var", &UncertaintyBundle::epistemic_var, false},
    {"alpha_mean", &UncertaintyBundle::alpha_mean, false},
    {"beta_mean", &UncertaintyBundle::beta_mean, false},
};

}  // namespace

void save_bundle(const std::string& dir, const UncertaintyBundle& bundle, const BundleMeta& meta) {
    fs::create_directories(dir);
    nlohmann::json files = nlohmann::json::object();
    for (const auto& mf : kMapFiles) {
        const Image2D& map = bundle.*(mf.field);
        RangeMap range{0.0, 1.0};
        if (!mf.unit_range) range.hi = std::max(image_max(map), 1e-12);
        write_pgm16((fs::path(dir) / (std::string(mf.name) + ".pgm")).string(), map, range);
        files[mf.name] = {{"lo", range.lo}, {"hi", range.hi}};
    }
    nlohmann::json j{{"passes", bundle.passes}, {"seed", meta.seed},
                     {"stage", meta.stage},     {"model_checksum", meta.model_checksum},
                     {"files", files},          {"tool_version", kToolVersion}};
    write_text_file((fs::path(dir) / "meta.json").string(), j.dump(2) + "\n");
}

UncertaintyBundle load_bundle(const std::string& dir, BundleMeta* meta) {
    UncertaintyBundle b;
    for (const auto& mf : kMapFiles) {
        b.*(mf.field) = read_pgm16((fs::path(dir) / (std::string(mf.name) + ".pgm")).string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file((fs::path(dir) / "meta.json").string()));
    } catch (const std::exception& e) {
        throw std::runtime_error("bad bundle metadata in " + dir + ": " + e.what());
    }
    b.passes = j.at("passes").get<int>();
    if (meta != nullptr) {
        meta->passes = b.passes;
        meta->seed = j.at("seed").get<uint64_t>();
        meta->stage = j.value("stage", 0);
        meta->model_checksum = j.value("model_checksum", std::string());
    }
    return b;
}

}  // namespace darkfield
