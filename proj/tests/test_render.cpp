#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "neumat/render.hpp"
#include "neumat/synthetic.hpp"

using namespace neumat;

TEST_CASE("zero BRDF renders background and a black sphere") {
    auto zero = make_constant_brdf(Rgb(0, 0, 0), "zero");
    MeasuredBrdfView v(zero);
    RenderConfig cfg;
    cfg.width = cfg.height = 64;
    cfg.background = 0.25;
    Image img = render_sphere(v, cfg);
    // Corners lie outside the sphere.
    CHECK(img.at(0, 0, 0) == doctest::Approx(0.25f));
    CHECK(img.at(63, 63, 2) == doctest::Approx(0.25f));
    // Center is on the sphere and black.
    CHECK(img.at(32, 32, 0) == 0.0f);
    CHECK(img.at(32, 32, 1) == 0.0f);
}

TEST_CASE("Lambertian center pixel matches the shading formula") {
    double rho = 0.2;
    auto lam = make_constant_brdf(Rgb::Constant(rho / kPi), "lambert");
    MeasuredBrdfView v(lam);
    RenderConfig cfg;
    cfg.width = cfg.height = 255; // odd size: center pixel sits on the axis
    Image img = render_sphere(v, cfg);
    double cos_i = cfg.light_dir.z();
    double expect = std::pow(rho / kPi * cos_i * cfg.light_intensity, 1.0 / 2.2);
    CHECK(img.at(127, 127, 0) == doctest::Approx(expect).epsilon(1e-5));
    CHECK(img.at(127, 127, 1) == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("rendering is deterministic and symmetric for isotropic input") {
    auto lobe = make_lobe_brdf({}, "lobe");
    MeasuredBrdfView v(lobe);
    RenderConfig cfg;
    cfg.width = cfg.height = 64;
    Image a = render_sphere(v, cfg);
    Image b = render_sphere(v, cfg);
    CHECK(a.data == b.data);
    // Default light lies in the y-z plane, so the image mirrors in x.
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 32; ++x)
            for (int c = 0; c < 3; ++c)
                CHECK(a.at(x, y, c) == doctest::Approx(a.at(63 - x, y, c)).epsilon(1e-5));
}

TEST_CASE("scaling the BRDF up never darkens a pixel") {
    auto lobe = make_lobe_brdf({}, "lobe");
    MeasuredBrdf doubled = lobe;
    for (auto& v : doubled.values) v *= 2.0;
    MeasuredBrdfView v1(lobe), v2(doubled);
    RenderConfig cfg;
    cfg.width = cfg.height = 48;
    cfg.exposure = 0.05; // keep values away from the clamp
    Image a = render_sphere(v1, cfg);
    Image b = render_sphere(v2, cfg);
    for (size_t i = 0; i < a.data.size(); ++i) CHECK(b.data[i] >= a.data[i]);
}

TEST_CASE("render config validation") {
    auto zero = make_constant_brdf(Rgb(0, 0, 0), "zero");
    MeasuredBrdfView v(zero);
    RenderConfig cfg;
    cfg.width = 8;
    CHECK_THROWS_AS(render_sphere(v, cfg), ConfigError);
    cfg.width = 64;
    cfg.height = 64;
    cfg.light_dir = Vec3(0, 0, 2);
    CHECK_THROWS_AS(render_sphere(v, cfg), ConfigError);
}

TEST_CASE("ppm header and float image round trip") {
    auto lobe = make_lobe_brdf({}, "lobe");
    MeasuredBrdfView v(lobe);
    RenderConfig cfg;
    cfg.width = cfg.height = 32;
    Image img = render_sphere(v, cfg);

    std::string ppm_path = "render_test.ppm";
    write_ppm(img, ppm_path);
    std::ifstream in(ppm_path, std::ios::binary | std::ios::ate);
    REQUIRE(in.good());
    auto size = static_cast<long long>(in.tellg());
    in.seekg(0);
    std::string magic;
    int w, h, maxv;
    in >> magic >> w >> h >> maxv;
    CHECK(magic == "P6");
    CHECK(w == 32);
    CHECK(h == 32);
    CHECK(maxv == 255);
    CHECK(size > 32 * 32 * 3);
    in.close();
    std::remove(ppm_path.c_str());

    std::string f32_path = "render_test.nmim";
    write_float_image(img, f32_path);
    Image back = read_float_image(f32_path);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.data == img.data);
    std::remove(f32_path.c_str());
}
