#include <doctest.h>

#include <cmath>
#include <cstring>

#include "neumat/brdf.hpp"
#include "neumat/rng.hpp"

using namespace neumat;

namespace {

std::vector<std::byte> raw_merl_bytes(double fill_raw) {
    std::vector<std::byte> bytes(12 + 3 * static_cast<size_t>(kGridCells) * 8);
    int32_t dims[3] = {90, 90, 180};
    std::memcpy(bytes.data(), dims, 12);
    std::vector<double> payload(3 * static_cast<size_t>(kGridCells), fill_raw);
    std::memcpy(bytes.data() + 12, payload.data(), payload.size() * 8);
    return bytes;
}

Vec3 sph(double theta, double phi) {
    return Vec3(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                std::cos(theta));
}

} // namespace

TEST_CASE("parse_merl rejects bad headers and short payloads") {
    auto bytes = raw_merl_bytes(0.0);
    CHECK_NOTHROW(parse_merl(bytes));

    auto bad = bytes;
    int32_t dims[3] = {90, 90, 179};
    std::memcpy(bad.data(), dims, 12);
    CHECK_THROWS_AS(parse_merl(bad), HeaderMismatch);

    std::vector<std::byte> tiny(bytes.begin(), bytes.begin() + 8);
    CHECK_THROWS_AS(parse_merl(tiny), Truncated);
    std::vector<std::byte> short_payload(bytes.begin(), bytes.end() - 16);
    CHECK_THROWS_AS(parse_merl(short_payload), Truncated);
}

TEST_CASE("parse_merl applies channel scales and clamps negatives") {
    auto bytes = raw_merl_bytes(1.0);
    MeasuredBrdf b = parse_merl(bytes);
    CHECK(b.at(0, 0, 0, 0) == doctest::Approx(1.0 / 1500.0).epsilon(1e-12));
    CHECK(b.at(1, 10, 20, 30) == doctest::Approx(1.15 / 1500.0).epsilon(1e-12));
    CHECK(b.at(2, 89, 89, 179) == doctest::Approx(1.66 / 1500.0).epsilon(1e-12));

    auto neg = raw_merl_bytes(-2.0);
    MeasuredBrdf bn = parse_merl(neg);
    CHECK(bn.at(0, 5, 5, 5) == 0.0);
    CHECK(bn.at(2, 5, 5, 5) == 0.0);
}

TEST_CASE("write_merl round trip is lossless within 1 ulp") {
    MeasuredBrdf b;
    Rng rng(7);
    for (int n = 0; n < 2000; ++n) {
        size_t idx = static_cast<size_t>(rng.below(b.values.size()));
        b.values[idx] = rng.uniform(0.0, 50.0);
    }
    MeasuredBrdf back = parse_merl(write_merl(b));
    for (size_t i = 0; i < b.values.size(); ++i) {
        double expect = b.values[i];
        double got = back.values[i];
        double ulp = std::nextafter(expect, INFINITY) - expect;
        CHECK(std::abs(got - expect) <= ulp);
    }
}

TEST_CASE("io_to_halfdiff on a mirror pair") {
    // wi, wo symmetric about the normal: h = z, theta_h = 0,
    // theta_d = incidence angle, phi_d folds to 0.
    DirectionPair p{sph(0.5, 0.0),
                    Vec3(-std::sin(0.5), 0.0, std::cos(0.5))};
    auto [a, phi_h] = io_to_halfdiff(p);
    CHECK(a.theta_h == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(a.theta_d == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(a.phi_d == doctest::Approx(0.0).epsilon(1e-9));
    (void)phi_h;
}

TEST_CASE("io_to_halfdiff splits a tilted pair evenly") {
    // wi = z, wo at 0.8: half vector at 0.4, difference angle 0.4.
    DirectionPair p{Vec3(0, 0, 1), sph(0.8, 0.0)};
    auto [a, phi_h] = io_to_halfdiff(p);
    CHECK(a.theta_h == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(a.theta_d == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(phi_h == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("io_to_halfdiff rejects degenerate opposite directions") {
    CHECK_THROWS_AS(io_to_halfdiff({Vec3(0, 0, 1), Vec3(0, 0, -1)}),
                    DegenerateHalfVector);
}

TEST_CASE("halfdiff_to_io throws below horizon") {
    // Large theta_h with large theta_d pushes one direction under the surface.
    CHECK_THROWS_AS(halfdiff_to_io({1.4, 1.4, 0.1}), BelowHorizon);
    CHECK_FALSE(try_halfdiff_to_io({1.4, 1.4, 0.1}).has_value());
}

TEST_CASE("halfdiff_to_io exposes cos(theta_i) via wi.z") {
    auto p = halfdiff_to_io({0.3, 0.4, 1.0});
    double expect = std::cos(0.3) * std::cos(0.4) -
                    std::sin(0.3) * std::sin(0.4) * std::cos(1.0);
    CHECK(p.wi.z() == doctest::Approx(expect).epsilon(1e-12));
    double expect_o = std::cos(0.3) * std::cos(0.4) +
                      std::sin(0.3) * std::sin(0.4) * std::cos(1.0);
    CHECK(p.wo.z() == doctest::Approx(expect_o).epsilon(1e-12));
    CHECK(p.wi.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.wo.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("round trip hd -> io -> hd is the identity") {
    Rng rng(11);
    for (int n = 0; n < 10000; ++n) {
        HalfDiffAngles a{rng.uniform(0.0, kHalfPi), rng.uniform(0.0, kHalfPi),
                         rng.uniform(0.0, kPi)};
        auto p = try_halfdiff_to_io(a);
        if (!p) continue;
        auto [back, phi_h] = io_to_halfdiff(*p);
        CHECK(back.theta_h == doctest::Approx(a.theta_h).epsilon(1e-6));
        CHECK(back.theta_d == doctest::Approx(a.theta_d).epsilon(1e-6));
        // phi_d can land on the fold boundary when wi/wo are swapped by
        // the canonical reconstruction; compare modulo pi.
        double dd = std::abs(back.phi_d - a.phi_d);
        dd = std::min(dd, kPi - dd);
        CHECK(dd < 1e-6);
        CHECK(std::abs(phi_h) < 1e-6);
    }
}

TEST_CASE("reciprocity: swapping wi and wo preserves folded angles") {
    Rng rng(13);
    int tested = 0;
    for (int n = 0; n < 10000; ++n) {
        Vec3 wi = sph(rng.uniform(0.0, kHalfPi), rng.uniform(0.0, 2.0 * kPi));
        Vec3 wo = sph(rng.uniform(0.0, kHalfPi), rng.uniform(0.0, 2.0 * kPi));
        if ((wi + wo).norm() < 1e-6) continue;
        auto [a, ph] = io_to_halfdiff({wi, wo});
        auto [b, ph2] = io_to_halfdiff({wo, wi});
        (void)ph;
        (void)ph2;
        CHECK(a.theta_h == doctest::Approx(b.theta_h).epsilon(1e-9));
        CHECK(a.theta_d == doctest::Approx(b.theta_d).epsilon(1e-9));
        double dd = std::abs(a.phi_d - b.phi_d);
        dd = std::min(dd, kPi - dd);
        CHECK(dd < 1e-6);
        ++tested;
    }
    CHECK(tested > 9000);
}

TEST_CASE("grid_index applies the square-root warp") {
    // theta_h = (pi/2)(1/90)^2 lands exactly on the i=1 boundary.
    double th = kHalfPi * (1.0 / 90.0) * (1.0 / 90.0);
    CHECK(grid_index({th, 0.0, 0.0})[0] == 1);
    CHECK(grid_index({th * 0.999, 0.0, 0.0})[0] == 0);
    CHECK(grid_index({0.0, kPi / 4.0, 0.0})[1] == 45);
    CHECK(grid_index({0.0, 0.0, kPi / 2.0})[2] == 90);
    // Boundary values clamp into range.
    CHECK(grid_index({kHalfPi, kHalfPi, kPi})[0] == 89);
    CHECK(grid_index({kHalfPi, kHalfPi, kPi})[1] == 89);
    CHECK(grid_index({kHalfPi, kHalfPi, kPi})[2] == 179);
}

TEST_CASE("cell_center_angles inverts grid_index") {
    Rng rng(17);
    for (int n = 0; n < 3000; ++n) {
        int i = static_cast<int>(rng.below(kThetaHBins));
        int j = static_cast<int>(rng.below(kThetaDBins));
        int k = static_cast<int>(rng.below(kPhiDBins));
        auto a = cell_center_angles(i, j, k);
        auto idx = grid_index(a);
        CHECK(idx[0] == i);
        CHECK(idx[1] == j);
        CHECK(idx[2] == k);
    }
}

TEST_CASE("eval_measured does nearest-cell lookup") {
    MeasuredBrdf b;
    b.at(0, 3, 4, 5) = 0.25;
    b.at(1, 3, 4, 5) = 0.5;
    b.at(2, 3, 4, 5) = 0.75;
    Rgb v = eval_measured(b, cell_center_angles(3, 4, 5));
    CHECK(v[0] == doctest::Approx(0.25));
    CHECK(v[1] == doctest::Approx(0.5));
    CHECK(v[2] == doctest::Approx(0.75));
    Rgb z = eval_measured(b, cell_center_angles(10, 10, 10));
    CHECK(z[0] == 0.0);
}

TEST_CASE("grid geometry marks above-horizon cells") {
    const auto& geo = GridGeometry::instance();
    CHECK(geo.valid_count() > 0);
    CHECK(geo.valid_count() < kGridCells);
    CHECK(static_cast<int>(geo.valid_cells().size()) == geo.valid_count());
    // Head-on cell must be valid with cos close to 1.
    auto head_on = grid_index({0.001, 0.001, 0.5});
    int cell = cell_id(head_on[0], head_on[1], head_on[2]);
    CHECK(geo.valid(cell));
    CHECK(geo.cos_theta_i(cell) > 0.99);
    // Cross-check a sample of cells against the reconstruction.
    Rng rng(19);
    for (int n = 0; n < 2000; ++n) {
        int i = static_cast<int>(rng.below(kThetaHBins));
        int j = static_cast<int>(rng.below(kThetaDBins));
        int k = static_cast<int>(rng.below(kPhiDBins));
        auto p = try_halfdiff_to_io(cell_center_angles(i, j, k));
        CHECK(geo.valid(cell_id(i, j, k)) == p.has_value());
        if (p) CHECK(geo.cos_theta_i(cell_id(i, j, k)) ==
                     doctest::Approx(p->wi.z()).epsilon(1e-12));
    }
}
