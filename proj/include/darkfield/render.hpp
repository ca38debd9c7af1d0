#pragma once

#include <array>
#include <string>

#include "darkfield/image.hpp"
#include "darkfield/inference.hpp"

namespace darkfield {

/// Fixed perceptual color mapping for uncertainty maps (dark blue -> green
/// -> yellow over t in [0,1]).
std::array<unsigned char, 3> heat_color(double t);

/// 8-bit RGB image file (binary P6).
void write_ppm(const std::string& path, int height, int width,
               const std::vector<unsigned char>& rgb);

/// Four-column comparison panel: attenuation and prediction in grayscale on
/// [0,1]; aleatoric sigma and epistemic variance in the fixed color map, each
/// normalized to its own maximum with a gradient scale bar underneath. The
/// numeric ranges go into <path>.json so panels stay comparable.
void render_panel(const std::string& path, const Image2D& attenuation,
                  const UncertaintyBundle& bundle);

}  // namespace darkfield
