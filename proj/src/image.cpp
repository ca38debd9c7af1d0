#include "darkfield/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace darkfield {

namespace {

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

void check_kernel(const Image2D& img, int kernel, const char* who) {
    if (kernel <= 0 || kernel % 2 == 0) {
        throw std::invalid_argument(std::string(who) + ": kernel must be odd and positive, got " +
                                    std::to_string(kernel));
    }
    if (kernel > std::min(img.height, img.width)) {
        throw std::invalid_argument(std::string(who) + ": kernel " + std::to_string(kernel) +
                                    " exceeds image extent " + std::to_string(img.height) + "x" +
                                    std::to_string(img.width));
    }
}

}  // namespace

const char* geo_op_name(GeoOp op) {
    switch (op) {
        case GeoOp::kIdentity: return "identity";
        case GeoOp::kHFlip: return "hflip";
        case GeoOp::kVFlip: return "vflip";
        case GeoOp::kRot90: return "rot90";
        case GeoOp::kRot180: return "rot180";
        case GeoOp::kRot270: return "rot270";
    }
    return "?";
}

GeoOp inverse_geo_op(GeoOp op) {
    switch (op) {
        case GeoOp::kRot90: return GeoOp::kRot270;
        case GeoOp::kRot270: return GeoOp::kRot90;
        default: return op;  // identity, flips and rot180 are involutions
    }
}

Image2D box_blur(const Image2D& img, int kernel) {
    check_kernel(img, kernel, "box_blur");
    const int h = img.height, w = img.width, r = kernel / 2;
    const double inv = 1.0 / kernel;

    // Separable with clamped (replicated) indices; exact for edge replication
    // because replication copies whole rows/columns.
    Image2D tmp(h, w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double s = 0.0;
            for (int d = -r; d <= r; ++d) s += img.at(i, clamp_index(j + d, w));
            tmp.at(i, j) = s * inv;
        }
    }
    Image2D out(h, w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double s = 0.0;
            for (int d = -r; d <= r; ++d) s += tmp.at(clamp_index(i + d, h), j);
            out.at(i, j) = s * inv;
        }
    }
    return out;
}

Image2D box_blur_adjoint(const Image2D& img, int kernel) {
    check_kernel(img, kernel, "box_blur_adjoint");
    const int h = img.height, w = img.width, r = kernel / 2;
    const double inv2 = 1.0 / (static_cast<double>(kernel) * kernel);

    Image2D out(h, w, 0.0);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const double v = img.at(i, j) * inv2;
            for (int di = -r; di <= r; ++di) {
                const int si = clamp_index(i + di, h);
                for (int dj = -r; dj <= r; ++dj) {
                    out.at(si, clamp_index(j + dj, w)) += v;
                }
            }
        }
    }
    return out;
}

Image2D local_residual(const Image2D& img, int kernel) {
    Image2D blurred = box_blur(img, kernel);
    Image2D out(img.height, img.width);
    for (size_t i = 0; i < img.size(); ++i) out.data[i] = img.data[i] - blurred.data[i];
    return out;
}

Image2D geometric_transform(const Image2D& img, GeoOp op) {
    const int h = img.height, w = img.width;
    switch (op) {
        case GeoOp::kIdentity:
            return img;
        case GeoOp::kHFlip: {
            Image2D out(h, w);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) out.at(i, j) = img.at(i, w - 1 - j);
            return out;
        }
        case GeoOp::kVFlip: {
            Image2D out(h, w);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) out.at(i, j) = img.at(h - 1 - i, j);
            return out;
        }
        case GeoOp::kRot90: {
            Image2D out(w, h);
            for (int i = 0; i < w; ++i)
                for (int j = 0; j < h; ++j) out.at(i, j) = img.at(j, w - 1 - i);
            return out;
        }
        case GeoOp::kRot180: {
            Image2D out(h, w);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) out.at(i, j) = img.at(h - 1 - i, w - 1 - j);
            return out;
        }
        case GeoOp::kRot270: {
            Image2D out(w, h);
            for (int i = 0; i < w; ++i)
                for (int j = 0; j < h; ++j) out.at(i, j) = img.at(h - 1 - j, i);
            return out;
        }
    }
    throw std::invalid_argument("geometric_transform: unknown op");
}

Image2D contrast_jitter(const Image2D& img, double factor) {
    if (!(factor > 0.0)) {
        throw std::invalid_argument("contrast_jitter: factor must be positive, got " +
                                    std::to_string(factor));
    }
    const double m = image_mean(img);
    Image2D out(img.height, img.width);
    for (size_t i = 0; i < img.size(); ++i) {
        out.data[i] = std::clamp(m + factor * (img.data[i] - m), 0.0, 1.0);
    }
    return out;
}

Image2D rotate_bilinear(const Image2D& img, double degrees) {
    const int h = img.height, w = img.width;
    const double rad = degrees * M_PI / 180.0;
    const double ca = std::cos(rad), sa = std::sin(rad);
    const double cy = 0.5 * (h - 1), cx = 0.5 * (w - 1);

    Image2D out(h, w);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            // inverse map: rotate the destination point back into the source
            const double dy = i - cy, dx = j - cx;
            const double sy = cy + ca * dy + sa * dx;
            const double sx = cx - sa * dy + ca * dx;
            const int y0 = static_cast<int>(std::floor(sy));
            const int x0 = static_cast<int>(std::floor(sx));
            const double fy = sy - y0, fx = sx - x0;
            const double v00 = img.at(clamp_index(y0, h), clamp_index(x0, w));
            const double v01 = img.at(clamp_index(y0, h), clamp_index(x0 + 1, w));
            const double v10 = img.at(clamp_index(y0 + 1, h), clamp_index(x0, w));
            const double v11 = img.at(clamp_index(y0 + 1, h), clamp_index(x0 + 1, w));
            out.at(i, j) = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
        }
    }
    return out;
}

Image2D pad_replicate(const Image2D& img, int bottom, int right) {
    if (bottom < 0 || right < 0) throw std::invalid_argument("pad_replicate: negative padding");
    Image2D out(img.height + bottom, img.width + right);
    for (int r = 0; r < out.height; ++r) {
        const int sr = std::min(r, img.height - 1);
        for (int c = 0; c < out.width; ++c) {
            out.at(r, c) = img.at(sr, std::min(c, img.width - 1));
        }
    }
    return out;
}

Image2D crop_top_left(const Image2D& img, int height, int width) {
    if (height < 1 || width < 1 || height > img.height || width > img.width) {
        throw std::invalid_argument("crop_top_left: region exceeds image");
    }
    Image2D out(height, width);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) out.at(r, c) = img.at(r, c);
    }
    return out;
}

double image_min(const Image2D& img) {
    return *std::min_element(img.data.begin(), img.data.end());
}

double image_max(const Image2D& img) {
    return *std::max_element(img.data.begin(), img.data.end());
}

double image_mean(const Image2D& img) {
    if (img.data.empty()) return 0.0;
    return std::accumulate(img.data.begin(), img.data.end(), 0.0) / static_cast<double>(img.size());
}

bool image_finite(const Image2D& img) {
    for (double v : img.data)
        if (!std::isfinite(v)) return false;
    return true;
}

void validate_unit_range(const Image2D& img, const std::string& context) {
    if (img.height <= 0 || img.width <= 0 || img.data.size() != img.size()) {
        throw std::runtime_error(context + ": empty or malformed image");
    }
    for (double v : img.data) {
        if (!std::isfinite(v)) throw std::runtime_error(context + ": non-finite pixel value");
        if (v < 0.0 || v > 1.0) {
            throw std::runtime_error(context + ": pixel value " + std::to_string(v) +
                                     " outside [0,1]");
        }
    }
}

}  // namespace darkfield
