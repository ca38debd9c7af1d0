#pragma once

#include <cstdint>
#include <string>

#include "darkfield/image.hpp"
#include "darkfield/network.hpp"

namespace darkfield {

/// Aggregate of repeated stochastic forward passes: the mean prediction, the
/// data-noise scale the model reports (mean effective sigma), and the
/// model-uncertainty map (population variance of the prediction over passes).
struct UncertaintyBundle {
    Image2D prediction;
    Image2D aleatoric_sigma;
    Image2D epistemic_var;
    Image2D alpha_mean;
    Image2D beta_mean;
    int passes = 0;
};

/// Streaming per-pixel mean/variance over equal-shape maps. Accumulation is
/// anchored at the first map, so a sequence of identical maps yields a
/// variance of exactly zero (no floating-point residue).
class RunningMoments {
  public:
    void add(const Image2D& m);
    int count() const { return n_; }
    Image2D mean() const;
    /// Population variance (divides by the count, not count-1).
    Image2D population_var() const;

  private:
    int n_ = 0;
    Image2D first_, sum_d_, sum_d2_;
};

/// Runs `passes` stochastic forward passes through stages 1..k with per-pass
/// seeds derived from `seed`, padding the input to the stage size multiple
/// (replicated edges) and cropping the maps back. Deterministic given
/// (weights, input, k, passes, seed).
UncertaintyBundle stage_infer(ProgressiveGenerator& gen, const Image2D& input, int k, int passes,
                              uint64_t seed);

/// Full-cascade variant of stage_infer.
UncertaintyBundle mc_infer(ProgressiveGenerator& gen, const Image2D& input, int passes,
                           uint64_t seed);

/// Single-pass cascade through stages 1..k with the given pass seed; used for
/// validation previews and evaluation. Returns the final stage's outputs.
StageForwardResult cascade_forward(ProgressiveGenerator& gen, const Image2D& input, int k,
                                   uint64_t pass_seed);

struct BundleMeta {
    int passes = 0;
    uint64_t seed = 0;
    int stage = 0;
    std::string model_checksum;
};

/// Persists a bundle as a directory of 16-bit grayscale maps plus meta.json
/// (passes, seed, stage, model checksum, per-file value ranges).
void save_bundle(const std::string& dir, const UncertaintyBundle& bundle, const BundleMeta& meta);
UncertaintyBundle load_bundle(const std::string& dir, BundleMeta* meta = nullptr);

}  // namespace darkfield
