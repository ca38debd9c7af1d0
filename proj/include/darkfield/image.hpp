#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace darkfield {

/// Single-channel raster, row-major doubles. Values are expected to live in
/// [0,1] once an image has passed ingestion; arithmetic helpers do not
/// re-check that on every call.
struct Image2D {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Image2D() = default;
    Image2D(int h, int w, double fill = 0.0)
        : height(h), width(w), data(static_cast<size_t>(h) * static_cast<size_t>(w), fill) {}

    double& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }

    size_t size() const { return data.size(); }
    bool same_shape(const Image2D& other) const {
        return height == other.height && width == other.width;
    }
};

/// Lossless index permutations used for augmentation. rot90 is
/// counter-clockwise; kRot180/kRot270 are its powers.
enum class GeoOp { kIdentity, kHFlip, kVFlip, kRot90, kRot180, kRot270 };

const char* geo_op_name(GeoOp op);
GeoOp inverse_geo_op(GeoOp op);

/// Unweighted kernel x kernel mean, borders by edge replication.
/// kernel must be odd, positive and <= min(height, width).
Image2D box_blur(const Image2D& img, int kernel);

/// Transpose of the box_blur linear operator (same preconditions).
/// Satisfies <blur(x), y> == <x, blur_adjoint(y)> for all x, y.
Image2D box_blur_adjoint(const Image2D& img, int kernel);

/// img - box_blur(img, kernel). Values may be negative.
Image2D local_residual(const Image2D& img, int kernel);

Image2D geometric_transform(const Image2D& img, GeoOp op);

/// clamp(mean + factor * (img - mean), 0, 1). factor must be > 0.
Image2D contrast_jitter(const Image2D& img, double factor);

/// Small-angle rotation (degrees, counter-clockwise) with bilinear sampling;
/// exposed corners are filled by edge replication. Augmentation-only: unlike
/// geometric_transform this is not lossless.
Image2D rotate_bilinear(const Image2D& img, double degrees);

/// Extends the image at the bottom/right edges by repeating the border row
/// and column (used to reach a required size multiple before a model pass).
Image2D pad_replicate(const Image2D& img, int bottom, int right);

/// Top-left crop back to (height, width); must fit inside the image.
Image2D crop_top_left(const Image2D& img, int height, int width);

double image_min(const Image2D& img);
double image_max(const Image2D& img);
double image_mean(const Image2D& img);
bool image_finite(const Image2D& img);

/// Ingestion gate: throws std::runtime_error naming `context` unless the
/// image is non-empty, finite and within [0,1].
void validate_unit_range(const Image2D& img, const std::string& context);

}  // namespace darkfield
