#include "darkfield/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "darkfield/util.hpp"

namespace darkfield {

namespace {

// anchor colors of the uncertainty color map, evenly spaced over [0,1]
constexpr unsigned char kHeatAnchors[][3] = {
    {13, 8, 135},    {84, 2, 163},    {139, 10, 165}, {185, 50, 137},
    {219, 92, 104},  {244, 136, 73},  {254, 188, 43}, {240, 249, 33},
};
constexpr int kHeatN = sizeof(kHeatAnchors) / sizeof(kHeatAnchors[0]);

}  // namespace

std::array<unsigned char, 3> heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0) * (kHeatN - 1);
    const int i = std::min(kHeatN - 2, static_cast<int>(t));
    const double f = t - i;
    std::array<unsigned char, 3> rgb;
    for (int c = 0; c < 3; ++c) {
        rgb[c] = static_cast<unsigned char>(
            std::lround(kHeatAnchors[i][c] * (1.0 - f) + kHeatAnchors[i + 1][c] * f));
    }
    return rgb;
}

void write_ppm(const std::string& path, int height, int width,
               const std::vector<unsigned char>& rgb) {
    if (rgb.size() != static_cast<size_t>(height) * width * 3) {
        throw std::invalid_argument("write_ppm: buffer size mismatch");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "P6\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

constexpr int kGap = 2;       // white separator between columns
constexpr int kBarH = 10;     // scale-bar strip height

struct Canvas {
    int h, w;
    std::vector<unsigned char> rgb;
    Canvas(int h_, int w_) : h(h_), w(w_), rgb(static_cast<size_t>(h_) * w_ * 3, 255) {}
    void set(int r, int c, unsigned char cr, unsigned char cg, unsigned char cb) {
        const size_t i = (static_cast<size_t>(r) * w + c) * 3;
        rgb[i] = cr;
        rgb[i + 1] = cg;
        rgb[i + 2] = cb;
    }
};

void paint_gray(Canvas& cv, const Image2D& img, int r0, int c0) {
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const auto g = static_cast<unsigned char>(
                std::lround(std::clamp(img.at(r, c), 0.0, 1.0) * 255.0));
            cv.set(r0 + r, c0 + c, g, g, g);
        }
    }
}

// normalizes by the map's own max and paints with the heat map + scale bar
double paint_heat(Canvas& cv, const Image2D& img, int r0, int c0) {
    const double hi = std::max(image_max(img), 1e-300);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const auto rgb = heat_color(img.at(r, c) / hi);
            cv.set(r0 + r, c0 + c, rgb[0], rgb[1], rgb[2]);
        }
    }
    for (int r = 0; r < kBarH - 2; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const auto rgb = heat_color(static_cast<double>(c) / std::max(1, img.width - 1));
            cv.set(r0 + img.height + 2 + r, c0 + c, rgb[0], rgb[1], rgb[2]);
        }
    }
    return hi;
}

}  // namespace

void render_panel(const std::string& path, const Image2D& attenuation,
                  const UncertaintyBundle& bundle) {
    const Image2D* maps[] = {&bundle.prediction, &bundle.aleatoric_sigma, &bundle.epistemic_var};
    for (const Image2D* m : maps) {
        if (!attenuation.same_shape(*m)) {
            throw std::invalid_argument("render_panel: map shapes differ from the input");
        }
    }
    const int h = attenuation.height, w = attenuation.width;
    Canvas cv(h + kBarH, 4 * w + 3 * kGap);
    paint_gray(cv, attenuation, 0, 0);
    paint_gray(cv, bundle.prediction, 0, w + kGap);
    const double alea_max = paint_heat(cv, bundle.aleatoric_sigma, 0, 2 * (w + kGap));
    const double epis_max = paint_heat(cv, bundle.epistemic_var, 0, 3 * (w + kGap));
    write_ppm(path, cv.h, cv.w, cv.rgb);

    nlohmann::json scales{{"columns", {"attenuation", "prediction", "aleatoric_sigma", "epistemic_var"}},
                          {"aleatoric_sigma_max", alea_max},
                          {"epistemic_var_max", epis_max},
                          {"gray_range", {0.0, 1.0}}};
    write_text_file(path + ".json", scales.dump(2) + "\n");
}

}  // namespace darkfield
