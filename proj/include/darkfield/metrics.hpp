#pragma once

#include <string>
#include <utility>
#include <vector>

#include "darkfield/image.hpp"

namespace darkfield {

// SSIM uses the canonical constants: 11x11 Gaussian window with sigma 1.5,
// K1 = 0.01, K2 = 0.03, data range 1. PSNR of identical images is capped at
// 100 dB so aggregate statistics stay finite.
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr double kPsnrCapDb = 100.0;

double mse(const Image2D& a, const Image2D& b);
double psnr(const Image2D& a, const Image2D& b, double data_range = 1.0);
double ssim(const Image2D& a, const Image2D& b);

struct ImageMetrics {
    double mse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct MetricStats {
    double mean = 0.0;
    double std_dev = 0.0;  // population std
};

struct MetricsReport {
    int stage = 0;
    int sample_count = 0;
    std::vector<ImageMetrics> per_image;
    MetricStats mse;
    MetricStats psnr;
    MetricStats ssim;
};

/// Per-image metrics plus mean +/- population std for a set of
/// (generated, target) pairs. Throws on an empty list.
MetricsReport stage_report(const std::vector<std::pair<Image2D, Image2D>>& pairs, int stage);

/// Table row in column order MSE, PSNR, SSIM.
std::string report_table(const std::vector<MetricsReport>& rows);

/// One JSON object per line; parse_reports inverts emit_reports.
std::string emit_reports(const std::vector<MetricsReport>& rows);
std::vector<MetricsReport> parse_reports(const std::string& text);

/// Spearman rank correlation (average ranks on ties). Throws on mismatched
/// lengths, fewer than two points, or a constant sequence.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace darkfield
