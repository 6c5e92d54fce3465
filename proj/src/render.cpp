#include "neumat/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <Eigen/Geometry>

namespace neumat {

namespace {

void check_config(const RenderConfig& cfg) {
    if (cfg.width < 16 || cfg.height < 16)
        throw ConfigError("render size must be at least 16x16");
    if (std::abs(cfg.light_dir.norm() - 1.0) > 1e-6)
        throw ConfigError("light_dir must be a unit vector");
    if (cfg.gamma <= 0.0) throw ConfigError("gamma must be positive");
    if (cfg.light_intensity < 0.0 || cfg.exposure < 0.0)
        throw ConfigError("light_intensity and exposure must be nonnegative");
    if (cfg.background < 0.0 || cfg.background > 1.0)
        throw ConfigError("background must lie in [0, 1]");
}

} // namespace

Image render_sphere(const BrdfEvaluable& brdf, const RenderConfig& cfg) {
    check_config(cfg);
    Image img(cfg.width, cfg.height);
    const Vec3 light = cfg.light_dir;
    const Vec3 wo_world(0.0, 0.0, 1.0);
    // Square pixels; the shorter image axis spans the sphere plus a margin.
    const double unit = 2.0 * 1.05 / std::min(cfg.width, cfg.height);
    const double inv_gamma = 1.0 / cfg.gamma;
    const auto bg = static_cast<float>(cfg.background);

    for (int py = 0; py < cfg.height; ++py) {
        for (int px = 0; px < cfg.width; ++px) {
            double sx = (px + 0.5 - cfg.width * 0.5) * unit;
            double sy = (cfg.height * 0.5 - py - 0.5) * unit;
            double r2 = sx * sx + sy * sy;
            if (r2 > 1.0) {
                for (int c = 0; c < 3; ++c) img.at(px, py, c) = bg;
                continue;
            }
            Vec3 n(sx, sy, std::sqrt(1.0 - r2));
            double cos_i = n.dot(light);
            if (cos_i <= 0.0) continue; // self-shadowed: stays black

            // Deterministic tangent frame around n.
            Vec3 t = std::abs(n.z()) < 0.999999
                         ? Vec3(Vec3(0, 0, 1).cross(n)).normalized()
                         : Vec3(1, 0, 0);
            Vec3 b = n.cross(t);
            Vec3 wi_local(t.dot(light), b.dot(light), cos_i);
            Vec3 wo_local(t.dot(wo_world), b.dot(wo_world), n.dot(wo_world));
            if ((wi_local + wo_local).norm() < 1e-9) continue;

            Rgb f = brdf.eval(io_to_halfdiff({wi_local, wo_local}).first);
            Rgb radiance = f * cos_i * cfg.light_intensity * cfg.exposure;
            for (int c = 0; c < 3; ++c) {
                double v = std::pow(std::max(radiance[c], 0.0), inv_gamma);
                img.at(px, py, c) = static_cast<float>(std::min(v, 1.0));
            }
        }
    }
    return img;
}

void write_ppm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = std::clamp(img.at(x, y, c), 0.f, 1.f);
                row[static_cast<size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw Error("short write to " + path);
}

namespace {
constexpr char kImageMagic[4] = {'N', 'M', 'I', 'M'};
}

void write_float_image(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out.write(kImageMagic, 4);
    uint32_t header[3] = {1u, static_cast<uint32_t>(img.width),
                          static_cast<uint32_t>(img.height)};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size() * sizeof(float)));
    if (!out) throw Error("short write to " + path);
}

Image read_float_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Truncated("cannot open " + path);
    char magic[4];
    uint32_t header[3];
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in || std::memcmp(magic, kImageMagic, 4) != 0)
        throw HeaderMismatch("not a float image: " + path);
    if (header[0] != 1u)
        throw HeaderMismatch("unsupported float image version");
    Image img(static_cast<int>(header[1]), static_cast<int>(header[2]));
    in.read(reinterpret_cast<char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size() * sizeof(float)));
    if (!in) throw Truncated("float image payload short: " + path);
    return img;
}

} // namespace neumat
