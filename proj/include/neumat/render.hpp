#pragma once

#include <string>
#include <vector>

#include "neumat/brdf.hpp"

namespace neumat {

/// Row-major interleaved RGB image with float pixels in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> data; // width * height * 3

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.f) {}

    float& at(int x, int y, int c) {
        return data[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    float at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
};

struct RenderConfig {
    int width = 256;
    int height = 256;
    Vec3 light_dir = Vec3(0.0, 1.0, 1.0).normalized(); // unit vector toward the light
    double light_intensity = kPi;
    double exposure = 1.0;
    double gamma = 2.2;
    double background = 0.0;
};

/// Orthographic rendering of a unit sphere lit by one directional light.
/// Shades L = f_r * cos(theta_i) * intensity per channel, applies exposure
/// and gamma, clamps to [0, 1]. Deterministic: same inputs, same pixels.
Image render_sphere(const BrdfEvaluable& brdf, const RenderConfig& cfg);

/// Binary PPM (P6), 8 bits per channel.
void write_ppm(const Image& img, const std::string& path);

/// Lossless float image dump used when images feed metrics.
void write_float_image(const Image& img, const std::string& path);
Image read_float_image(const std::string& path);

} // namespace neumat
