#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "darkfield/ggd.hpp"
#include "darkfield/image.hpp"
#include "darkfield/nn.hpp"

namespace darkfield {

/// Architecture settings shared by every stage. Stage 1 sees the attenuation
/// image alone; stages k > 1 see (attenuation, previous prediction, previous
/// sigma attention) as three input channels.
struct NetConfig {
    int stages = 3;
    int levels = 4;        // encoder/decoder resolution levels
    int base_width = 32;   // channels at full resolution
    double dropout_rate = 0.1;
    double alpha_min = 1e-3;
    double alpha_init = 0.1;  // softplus head bias solves for this initial mean alpha
    double beta_init = 2.0;   // Gaussian shape at initialization
    int disc_base_width = 32;
    int disc_downsamples = 3;
    uint64_t init_seed = 1234;
};

/// Differentiable endpoints of one stage pass.
struct StageIO {
    Tensor y;
    Tensor alpha;
    Tensor beta;
};

/// Encoder-decoder with skip connections and three 1x1 heads (prediction,
/// alpha, beta). Dropout sits in the decoder blocks and is active whenever
/// the rate is nonzero, in training and inference alike.
///
/// Refinement stages (residual_head) form the prediction as
/// sigmoid(logit(prev_y) + z), so an untrained stage starts at the previous
/// stage's output and learns a correction.
class GeneratorStage {
  public:
    GeneratorStage(const NetConfig& cfg, int in_channels, bool residual_head, std::string name);

    StageIO forward(const Tensor& input);
    /// Gradients w.r.t. the head outputs in; gradient w.r.t. the input out.
    Tensor backward(const Tensor& dy, const Tensor& dalpha, const Tensor& dbeta);

    void set_dropout_seed(uint64_t seed);
    void set_dropout_rate(double rate);
    double dropout_rate() const { return dropout_rate_; }

    /// Inference mode skips every backward cache, bounding memory on large
    /// inputs. backward() requires a forward taken with the mode off.
    void set_inference_mode(bool enabled);

    std::vector<ParamRef> params();
    int in_channels() const { return in_channels_; }
    int spatial_multiple() const { return 1 << (levels_ - 1); }

  private:
    int levels_, base_, in_channels_;
    bool inference_mode_ = false;
    bool residual_head_;
    double alpha_min_, dropout_rate_;
    std::string name_;

    std::vector<Conv2d> enc_a_, enc_b_, down_, up_, dec_a_, dec_b_;
    std::vector<LeakyReLU> act_enc_a_, act_enc_b_, act_down_, act_up_, act_dec_a_, act_dec_b_;
    std::vector<Dropout> drop_a_, drop_b_;
    Conv2d head_y_, head_alpha_, head_beta_;

    // forward caches
    std::vector<Tensor> enc_feat_;
    Tensor y_cache_, sp_sig_, bsig_, prev_clamped_;
};

/// Ordered cascade of stages plus the freezing mask.
class ProgressiveGenerator {
  public:
    explicit ProgressiveGenerator(const NetConfig& cfg);

    const NetConfig& config() const { return cfg_; }
    int num_stages() const { return static_cast<int>(stages_.size()); }

    GeneratorStage& stage(int k);              // 1-based
    const GeneratorStage& stage(int k) const;

    /// Marks all stages below k as frozen (excluded from gradients and
    /// optimizer state). k = 1 freezes nothing. Idempotent.
    void freeze_stages_below(int k);
    bool is_frozen(int k) const;  // 1-based

    void set_dropout_rate(double rate);
    void set_inference_mode(bool enabled);

    std::vector<ParamRef> stage_params(int k);
    std::vector<ParamRef> all_params();

    uint64_t stage_checksum(int k) const;
    uint64_t checksum() const;

  private:
    NetConfig cfg_;
    std::vector<std::unique_ptr<GeneratorStage>> stages_;
    std::vector<bool> frozen_;
};

/// Per-image min-max normalization of a sigma map into [0,1]; a constant map
/// becomes all 0.5 (degenerate-range convention).
Image2D attention_from_sigma(const Image2D& sigma);

/// Builds the channel stack a stage consumes. prev_y / prev_attention must
/// both be present (stages > 1) or both absent (stage 1).
Tensor make_stage_input(const Image2D& attenuation, const Image2D* prev_y,
                        const Image2D* prev_attention);

struct StageForwardResult {
    Image2D y;
    GgdParams params;
};

/// Contract-level single-stage pass on images. Validates shapes and ranges;
/// the attention map (when given) must share the attenuation's shape.
StageForwardResult stage_forward(GeneratorStage& stage, const Image2D& attenuation,
                                 const Image2D* prev_y, const Image2D* prev_attention,
                                 uint64_t dropout_seed);

/// Conditional least-squares patch critic. Candidate and condition images are
/// stacked as channels; the score grid is input extent / 2^downsamples.
class PatchDiscriminator {
  public:
    explicit PatchDiscriminator(const NetConfig& cfg, uint64_t seed_salt = 0);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dscores);

    std::vector<ParamRef> params();
    int downsample_factor() const { return 1 << n_down_; }

  private:
    int n_down_;
    std::vector<Conv2d> convs_;
    std::vector<LeakyReLU> acts_;
    Conv2d final_;
};

/// Shape-checked image-level critic pass used by tests and evaluation.
Image2D discriminator_forward(PatchDiscriminator& d, const Image2D& candidate,
                              const Image2D& condition);

}  // namespace darkfield
