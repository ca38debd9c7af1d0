#include "darkfield/network.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "darkfield/rng.hpp"
#include "darkfield/util.hpp"

namespace darkfield {

namespace {

double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// bias value giving softplus(bias) == target
double softplus_inverse(double target) { return std::log(std::expm1(target)); }

// bias value giving beta_min + (beta_max-beta_min)*sigmoid(bias) == target
double beta_bias_for(double target) {
    const double f = (target - kBetaMin) / (kBetaMax - kBetaMin);
    return std::log(f / (1.0 - f));
}

constexpr double kLogitClamp = 1e-4;

}  // namespace

GeneratorStage::GeneratorStage(const NetConfig& cfg, int in_channels, bool residual_head,
                               std::string name)
    : levels_(cfg.levels), base_(cfg.base_width), in_channels_(in_channels),
      residual_head_(residual_head), alpha_min_(cfg.alpha_min), dropout_rate_(cfg.dropout_rate),
      name_(std::move(name)) {
    if (levels_ < 1) throw std::invalid_argument("GeneratorStage: levels must be >= 1");
    auto ch = [&](int i) { return base_ << i; };

    for (int i = 0; i < levels_; ++i) {
        const int cin = (i == 0) ? in_channels_ : ch(i);
        enc_a_.emplace_back(cin, ch(i), 3, 1, 1, name_ + ".enc" + std::to_string(i) + "a");
        enc_b_.emplace_back(ch(i), ch(i), 3, 1, 1, name_ + ".enc" + std::to_string(i) + "b");
        act_enc_a_.emplace_back(0.1);
        act_enc_b_.emplace_back(0.1);
        if (i + 1 < levels_) {
            down_.emplace_back(ch(i), ch(i + 1), 3, 2, 1, name_ + ".down" + std::to_string(i));
            act_down_.emplace_back(0.1);
        }
    }
    for (int i = 0; i + 1 < levels_; ++i) {
        up_.emplace_back(ch(i + 1), ch(i), 3, 1, 1, name_ + ".up" + std::to_string(i));
        dec_a_.emplace_back(2 * ch(i), ch(i), 3, 1, 1, name_ + ".dec" + std::to_string(i) + "a");
        dec_b_.emplace_back(ch(i), ch(i), 3, 1, 1, name_ + ".dec" + std::to_string(i) + "b");
        act_up_.emplace_back(0.0);
        act_dec_a_.emplace_back(0.0);
        act_dec_b_.emplace_back(0.0);
        drop_a_.emplace_back(dropout_rate_);
        drop_b_.emplace_back(dropout_rate_);
    }
    head_y_ = Conv2d(ch(0), 1, 1, 1, 0, name_ + ".head_y");
    head_alpha_ = Conv2d(ch(0), 1, 1, 1, 0, name_ + ".head_alpha");
    head_beta_ = Conv2d(ch(0), 1, 1, 1, 0, name_ + ".head_beta");

    const uint64_t seed = mix_seed(cfg.init_seed, splitmix64(std::hash<std::string>{}(name_)));
    int idx = 0;
    for (auto* group : {&enc_a_, &enc_b_, &down_, &up_, &dec_a_, &dec_b_}) {
        for (auto& conv : *group) conv.init_he(mix_seed(seed, idx++));
    }
    // Heads start near their biases: small weights, alpha at alpha_init,
    // beta at beta_init, prediction near 0.5 (or the previous stage's output
    // for refinement stages).
    head_y_.init_he(mix_seed(seed, idx++), 0.01);
    head_alpha_.init_he(mix_seed(seed, idx++), 0.01);
    head_beta_.init_he(mix_seed(seed, idx++), 0.01);
    head_alpha_.bias()[0] = softplus_inverse(cfg.alpha_init - cfg.alpha_min);
    head_beta_.bias()[0] = beta_bias_for(cfg.beta_init);
}

void GeneratorStage::set_dropout_seed(uint64_t seed) {
    for (size_t i = 0; i < drop_a_.size(); ++i) {
        drop_a_[i].set_seed(mix_seed(seed, 2 * i));
        drop_b_[i].set_seed(mix_seed(seed, 2 * i + 1));
    }
}

void GeneratorStage::set_dropout_rate(double rate) {
    dropout_rate_ = rate;
    for (auto& d : drop_a_) d.set_rate(rate);
    for (auto& d : drop_b_) d.set_rate(rate);
}

void GeneratorStage::set_inference_mode(bool enabled) {
    inference_mode_ = enabled;
    const bool cache = !enabled;
    for (auto* group : {&enc_a_, &enc_b_, &down_, &up_, &dec_a_, &dec_b_}) {
        for (auto& conv : *group) conv.set_cache_inputs(cache);
    }
    for (auto* head : {&head_y_, &head_alpha_, &head_beta_}) head->set_cache_inputs(cache);
    for (auto* group : {&act_enc_a_, &act_enc_b_, &act_down_, &act_up_, &act_dec_a_, &act_dec_b_}) {
        for (auto& act : *group) act.set_cache(cache);
    }
    for (auto* group : {&drop_a_, &drop_b_}) {
        for (auto& d : *group) d.set_cache(cache);
    }
    if (enabled) {
        enc_feat_.clear();
        y_cache_ = sp_sig_ = bsig_ = prev_clamped_ = Tensor();
    }
}

StageIO GeneratorStage::forward(const Tensor& input) {
    if (input.c != in_channels_) {
        throw std::invalid_argument(name_ + ": expected " + std::to_string(in_channels_) +
                                    " channels, got " + std::to_string(input.c));
    }
    const int mult = spatial_multiple();
    if (input.h % mult != 0 || input.w % mult != 0 || input.h < 8 || input.w < 8) {
        throw std::invalid_argument(name_ + ": input extent must be >= 8 and a multiple of " +
                                    std::to_string(mult));
    }

    enc_feat_.assign(levels_, Tensor());
    Tensor cur = input;
    for (int i = 0; i < levels_; ++i) {
        if (i > 0) cur = act_down_[i - 1].forward(down_[i - 1].forward(cur));
        cur = act_enc_a_[i].forward(enc_a_[i].forward(cur));
        cur = act_enc_b_[i].forward(enc_b_[i].forward(cur));
        enc_feat_[i] = cur;
    }
    for (int i = levels_ - 2; i >= 0; --i) {
        cur = upsample2x(cur);
        cur = act_up_[i].forward(up_[i].forward(cur));
        cur = concat_channels(cur, enc_feat_[i]);
        cur = drop_a_[i].forward(act_dec_a_[i].forward(dec_a_[i].forward(cur)));
        cur = drop_b_[i].forward(act_dec_b_[i].forward(dec_b_[i].forward(cur)));
    }

    const Tensor z_y = head_y_.forward(cur);
    const Tensor z_a = head_alpha_.forward(cur);
    const Tensor z_b = head_beta_.forward(cur);

    StageIO out;
    out.y = Tensor(1, input.h, input.w);
    out.alpha = Tensor(1, input.h, input.w);
    out.beta = Tensor(1, input.h, input.w);
    const bool keep = !inference_mode_;
    if (keep) {
        sp_sig_ = Tensor(1, input.h, input.w);
        bsig_ = Tensor(1, input.h, input.w);
    }
    if (residual_head_) {
        if (keep) prev_clamped_ = Tensor(1, input.h, input.w);
        const double* prev = input.plane_ptr(1);  // previous stage's prediction channel
        for (size_t i = 0; i < out.y.size(); ++i) {
            const double p = std::clamp(prev[i], kLogitClamp, 1.0 - kLogitClamp);
            if (keep) prev_clamped_.v[i] = p;
            out.y.v[i] = sigmoid(z_y.v[i] + std::log(p / (1.0 - p)));
        }
    } else {
        for (size_t i = 0; i < out.y.size(); ++i) out.y.v[i] = sigmoid(z_y.v[i]);
    }
    for (size_t i = 0; i < out.alpha.size(); ++i) {
        const double sa = sigmoid(z_a.v[i]);
        const double sb = sigmoid(z_b.v[i]);
        out.alpha.v[i] = alpha_min_ + softplus(z_a.v[i]);
        out.beta.v[i] = kBetaMin + (kBetaMax - kBetaMin) * sb;
        if (keep) {
            sp_sig_.v[i] = sa;
            bsig_.v[i] = sb;
        }
    }
    if (keep) {
        y_cache_ = out.y;
    } else {
        enc_feat_.clear();
    }
    return out;
}

Tensor GeneratorStage::backward(const Tensor& dy, const Tensor& dalpha, const Tensor& dbeta) {
    Tensor dz_y(dy.c, dy.h, dy.w), dz_a(dy.c, dy.h, dy.w), dz_b(dy.c, dy.h, dy.w);
    for (size_t i = 0; i < dy.size(); ++i) {
        const double y = y_cache_.v[i];
        dz_y.v[i] = dy.v[i] * y * (1.0 - y);
        dz_a.v[i] = dalpha.v[i] * sp_sig_.v[i];
        dz_b.v[i] = dbeta.v[i] * (kBetaMax - kBetaMin) * bsig_.v[i] * (1.0 - bsig_.v[i]);
    }

    Tensor g = head_y_.backward(dz_y);
    {
        const Tensor ga = head_alpha_.backward(dz_a);
        const Tensor gb = head_beta_.backward(dz_b);
        for (size_t i = 0; i < g.size(); ++i) g.v[i] += ga.v[i] + gb.v[i];
    }

    std::vector<Tensor> skip_grad(levels_ > 0 ? levels_ - 1 : 0);
    for (int i = 0; i + 1 < levels_; ++i) {
        g = dec_b_[i].backward(act_dec_b_[i].backward(drop_b_[i].backward(g)));
        g = dec_a_[i].backward(act_dec_a_[i].backward(drop_a_[i].backward(g)));
        Tensor g_up, g_skip;
        split_channels(g, base_ << i, &g_up, &g_skip);
        skip_grad[i] = std::move(g_skip);
        g = upsample2x_backward(up_[i].backward(act_up_[i].backward(g_up)));
    }

    for (int i = levels_ - 1; i >= 0; --i) {
        if (i + 1 < levels_) {
            for (size_t j = 0; j < g.size(); ++j) g.v[j] += skip_grad[i].v[j];
        }
        g = enc_a_[i].backward(act_enc_a_[i].backward(
            enc_b_[i].backward(act_enc_b_[i].backward(g))));
        if (i > 0) g = down_[i - 1].backward(act_down_[i - 1].backward(g));
    }

    if (residual_head_) {
        // the refinement head also reads the previous prediction directly
        double* gprev = g.plane_ptr(1);
        for (size_t i = 0; i < dz_y.size(); ++i) {
            const double p = prev_clamped_.v[i];
            gprev[i] += dz_y.v[i] / (p * (1.0 - p));
        }
    }
    return g;
}

std::vector<ParamRef> GeneratorStage::params() {
    std::vector<ParamRef> out;
    for (auto* group : {&enc_a_, &enc_b_, &down_, &up_, &dec_a_, &dec_b_}) {
        for (auto& conv : *group) {
            auto ps = conv.params();
            out.insert(out.end(), ps.begin(), ps.end());
        }
    }
    for (auto* head : {&head_y_, &head_alpha_, &head_beta_}) {
        auto ps = head->params();
        out.insert(out.end(), ps.begin(), ps.end());
    }
    return out;
}

ProgressiveGenerator::ProgressiveGenerator(const NetConfig& cfg) : cfg_(cfg) {
    if (cfg.stages < 1) throw std::invalid_argument("NetConfig: stages must be >= 1");
    for (int i = 0; i < cfg.stages; ++i) {
        stages_.push_back(std::make_unique<GeneratorStage>(cfg, i == 0 ? 1 : 3, i > 0,
                                                           "s" + std::to_string(i + 1)));
    }
    frozen_.assign(cfg.stages, false);
}

GeneratorStage& ProgressiveGenerator::stage(int k) {
    if (k < 1 || k > num_stages()) {
        throw std::invalid_argument("stage index " + std::to_string(k) + " out of range [1, " +
                                    std::to_string(num_stages()) + "]");
    }
    return *stages_[k - 1];
}

const GeneratorStage& ProgressiveGenerator::stage(int k) const {
    return const_cast<ProgressiveGenerator*>(this)->stage(k);
}

void ProgressiveGenerator::freeze_stages_below(int k) {
    if (k < 1 || k > num_stages()) {
        throw std::invalid_argument("freeze_stages_below: stage index " + std::to_string(k) +
                                    " out of range");
    }
    for (int i = 0; i < num_stages(); ++i) frozen_[i] = (i < k - 1);
}

bool ProgressiveGenerator::is_frozen(int k) const { return frozen_.at(k - 1); }

void ProgressiveGenerator::set_dropout_rate(double rate) {
    for (auto& s : stages_) s->set_dropout_rate(rate);
}

void ProgressiveGenerator::set_inference_mode(bool enabled) {
    for (auto& s : stages_) s->set_inference_mode(enabled);
}

std::vector<ParamRef> ProgressiveGenerator::stage_params(int k) { return stage(k).params(); }

std::vector<ParamRef> ProgressiveGenerator::all_params() {
    std::vector<ParamRef> out;
    for (auto& s : stages_) {
        auto ps = s->params();
        out.insert(out.end(), ps.begin(), ps.end());
    }
    return out;
}

uint64_t ProgressiveGenerator::stage_checksum(int k) const {
    auto params = const_cast<ProgressiveGenerator*>(this)->stage_params(k);
    return checksum_params(params);
}

uint64_t ProgressiveGenerator::checksum() const {
    auto params = const_cast<ProgressiveGenerator*>(this)->all_params();
    return checksum_params(params);
}

Image2D attention_from_sigma(const Image2D& sigma) {
    const double lo = image_min(sigma), hi = image_max(sigma);
    Image2D out(sigma.height, sigma.width);
    if (hi - lo < 1e-12) {
        std::fill(out.data.begin(), out.data.end(), 0.5);
        return out;
    }
    const double inv = 1.0 / (hi - lo);
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = (sigma.data[i] - lo) * inv;
    return out;
}

Tensor make_stage_input(const Image2D& attenuation, const Image2D* prev_y,
                        const Image2D* prev_attention) {
    if ((prev_y == nullptr) != (prev_attention == nullptr)) {
        throw std::invalid_argument("make_stage_input: prev_y and prev_attention go together");
    }
    if (prev_y == nullptr) {
        return Tensor::from_image(attenuation);
    }
    if (!attenuation.same_shape(*prev_y) || !attenuation.same_shape(*prev_attention)) {
        throw std::invalid_argument("make_stage_input: shape mismatch between channels");
    }
    Tensor t(3, attenuation.height, attenuation.width);
    std::copy(attenuation.data.begin(), attenuation.data.end(), t.plane_ptr(0));
    std::copy(prev_y->data.begin(), prev_y->data.end(), t.plane_ptr(1));
    std::copy(prev_attention->data.begin(), prev_attention->data.end(), t.plane_ptr(2));
    return t;
}

StageForwardResult stage_forward(GeneratorStage& stage, const Image2D& attenuation,
                                 const Image2D* prev_y, const Image2D* prev_attention,
                                 uint64_t dropout_seed) {
    const Tensor input = make_stage_input(attenuation, prev_y, prev_attention);
    stage.set_dropout_seed(dropout_seed);
    StageIO io = stage.forward(input);
    StageForwardResult res;
    res.y = io.y.to_image();
    res.params.alpha = io.alpha.to_image();
    res.params.beta = io.beta.to_image();
    return res;
}

PatchDiscriminator::PatchDiscriminator(const NetConfig& cfg, uint64_t seed_salt)
    : n_down_(cfg.disc_downsamples) {
    const int base = cfg.disc_base_width;
    int cin = 2;
    for (int i = 0; i < n_down_; ++i) {
        const int cout = base << i;
        convs_.emplace_back(cin, cout, 4, 2, 1, "d.conv" + std::to_string(i));
        acts_.emplace_back(0.2);
        cin = cout;
    }
    final_ = Conv2d(cin, 1, 3, 1, 1, "d.final");
    const uint64_t seed = mix_seed(cfg.init_seed, 0xd15cULL, seed_salt);
    for (size_t i = 0; i < convs_.size(); ++i) convs_[i].init_he(mix_seed(seed, i));
    final_.init_he(mix_seed(seed, 0xffULL));
}

Tensor PatchDiscriminator::forward(const Tensor& x) {
    Tensor cur = x;
    for (size_t i = 0; i < convs_.size(); ++i) cur = acts_[i].forward(convs_[i].forward(cur));
    return final_.forward(cur);
}

Tensor PatchDiscriminator::backward(const Tensor& dscores) {
    Tensor g = final_.backward(dscores);
    for (int i = static_cast<int>(convs_.size()) - 1; i >= 0; --i) {
        g = convs_[i].backward(acts_[i].backward(g));
    }
    return g;
}

std::vector<ParamRef> PatchDiscriminator::params() {
    std::vector<ParamRef> out;
    for (auto& c : convs_) {
        auto ps = c.params();
        out.insert(out.end(), ps.begin(), ps.end());
    }
    auto ps = final_.params();
    out.insert(out.end(), ps.begin(), ps.end());
    return out;
}

Image2D discriminator_forward(PatchDiscriminator& d, const Image2D& candidate,
                              const Image2D& condition) {
    if (!candidate.same_shape(condition)) {
        throw std::invalid_argument("discriminator_forward: candidate/condition shape mismatch");
    }
    Tensor x(2, candidate.height, candidate.width);
    std::copy(candidate.data.begin(), candidate.data.end(), x.plane_ptr(0));
    std::copy(condition.data.begin(), condition.data.end(), x.plane_ptr(1));
    return d.forward(x).to_image();
}

}  // namespace darkfield
