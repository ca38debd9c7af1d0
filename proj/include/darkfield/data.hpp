#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "darkfield/ggd.hpp"
#include "darkfield/image.hpp"

namespace darkfield {

enum class Split { kTrain, kVal, kTest, kOod };

std::string split_name(Split s);

/// One registered attenuation/dark-field pair. The dark-field target is
/// absent for out-of-distribution inputs; the injected noise map is present
/// only for synthetic samples.
struct PairedSample {
    std::string id;
    Image2D attenuation;
    std::optional<Image2D> darkfield;
    Split split = Split::kTrain;
    std::optional<Image2D> truth_noise_sigma;
};

/// Settings for the synthetic chest-pair generator. Every sample is a pure
/// function of (seed, index).
struct PhantomConfig {
    int height = 64;
    int width = 64;
    int count = 247;
    double sigma_lo = 0.01;  // noise scale range across the image
    double sigma_hi = 0.06;
    double confounder_prob = 0.3;  // chance of an implant/cable overlay
    bool stripes = false;          // horizontal banding on the target
    int texture_cells = 6;         // value-noise grid resolution
    uint64_t seed = 7;
};

void validate(const PhantomConfig& cfg);

/// Full deconstruction of one synthetic sample, for calibration tests: the
/// clean target, the injected noise parameters, and the lung support.
struct PhantomDetail {
    Image2D attenuation;
    Image2D darkfield_clean;  // pre-noise target
    Image2D darkfield;        // noisy target, clamped to [0,1]
    Image2D sigma;            // injected per-pixel noise scale
    GgdParams noise_params;   // alpha/beta maps realizing that sigma
    double beta = 2.0;        // per-sample shape (constant across pixels)
    Image2D lung_mask;        // 1 inside a lung ellipse, else 0
    uint64_t noise_seed = 0;  // darkfield == clamp(clean + draw(noise_seed))
};

PhantomDetail generate_phantom_detail(const PhantomConfig& cfg, int index);
PairedSample generate_phantom_pair(const PhantomConfig& cfg, int index);

/// Linear mapping between stored integer samples and real values:
/// value = lo + (hi - lo) * raw / 65535.
struct RangeMap {
    double lo = 0.0;
    double hi = 1.0;
};

/// 16-bit binary (P5) grayscale with a JSON sidecar (<path>.json) recording
/// the value range. Read applies the sidecar when present, else assumes [0,1].
void write_pgm16(const std::string& path, const Image2D& img, RangeMap range = {});
Image2D read_pgm16(const std::string& path, RangeMap* range_out = nullptr);

/// Minimal 2-D array file (format v1.0, little-endian f4/f8, C order).
void write_npy(const std::string& path, const Image2D& img);
Image2D read_npy(const std::string& path);

/// Reads either format by extension (.pgm or .npy).
Image2D read_image_file(const std::string& path);

/// Box-overlap (area-averaging) resampling to an arbitrary target shape.
/// Exactly constant-preserving.
Image2D area_resample(const Image2D& img, int out_h, int out_w);

struct SplitCounts {
    int train = 0;
    int val = 0;
    int test = 0;
};

/// The deterministic split rule used when a dataset carries no explicit split
/// manifest: test and val sizes are the nearest integers to n*27/269 and
/// n*15/269 (so 269 samples split 227/15/27), the rest train.
SplitCounts split_counts(int n);

/// Generates cfg.count samples under root/{attenuation,darkfield,noise_sigma}
/// and writes meta/manifest.json with the config, explicit split assignment,
/// and per-file checksums. Overrides of the split sizes (e.g. a fixed test
/// set size) are honored when given; they must sum to cfg.count.
void write_phantom_dataset(const std::string& root, const PhantomConfig& cfg,
                           const std::optional<SplitCounts>& splits = std::nullopt);

/// Loads a paired dataset from root/attenuation + root/darkfield (ids are
/// file stems). Split assignment comes from meta/manifest.json when present,
/// otherwise from a seeded shuffle with the ratio rule above. Orphan ids,
/// shape mismatches, and out-of-range values are errors naming the files.
std::vector<PairedSample> load_dataset(const std::string& root, uint64_t split_seed);

struct OodLoadResult {
    std::vector<PairedSample> samples;  // darkfield absent, split = ood
    int skipped = 0;                    // unreadable files (warned, not fatal)
};

/// Ingests target-free images from root (flat directory or root/attenuation),
/// area-resamples each to (target_h, target_w), and min-max normalizes images
/// whose values fall outside [0,1].
OodLoadResult load_ood(const std::string& root, int target_h, int target_w);

}  // namespace darkfield
