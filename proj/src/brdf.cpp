#include "neumat/brdf.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace neumat {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace {

Vec3 rotate_z(const Vec3& v, double a) {
    double c = std::cos(a), s = std::sin(a);
    return Vec3(c * v.x() - s * v.y(), s * v.x() + c * v.y(), v.z());
}

Vec3 rotate_y(const Vec3& v, double a) {
    double c = std::cos(a), s = std::sin(a);
    return Vec3(c * v.x() + s * v.z(), v.y(), -s * v.x() + c * v.z());
}

constexpr double kScales[3] = {kRedScale, kGreenScale, kBlueScale};

} // namespace

Rgb MeasuredBrdfView::eval(const HalfDiffAngles& a) const {
    return eval_measured(*brdf_, a);
}

MeasuredBrdf parse_merl(std::span<const std::byte> bytes) {
    if (bytes.size() < 3 * sizeof(int32_t))
        throw Truncated("header needs 12 bytes, got " + std::to_string(bytes.size()));
    int32_t dims[3];
    std::memcpy(dims, bytes.data(), sizeof(dims));
    long long n = 1;
    for (int32_t d : dims) n *= d;
    if (n != kGridCells)
        throw HeaderMismatch("dimension product " + std::to_string(n) +
                             ", expected " + std::to_string(kGridCells));
    size_t need = 3 * sizeof(int32_t) + 3 * static_cast<size_t>(kGridCells) * sizeof(double);
    if (bytes.size() < need)
        throw Truncated("payload needs " + std::to_string(need) + " bytes, got " +
                        std::to_string(bytes.size()));

    MeasuredBrdf b;
    const std::byte* src = bytes.data() + 3 * sizeof(int32_t);
    std::memcpy(b.values.data(), src, 3 * static_cast<size_t>(kGridCells) * sizeof(double));
    for (int c = 0; c < 3; ++c) {
        double* plane = b.values.data() + static_cast<size_t>(c) * kGridCells;
        for (int cell = 0; cell < kGridCells; ++cell) {
            double v = plane[cell] * kScales[c];
            plane[cell] = v > 0.0 ? v : 0.0;
        }
    }
    return b;
}

std::vector<std::byte> write_merl(const MeasuredBrdf& b) {
    std::vector<std::byte> out(3 * sizeof(int32_t) +
                               3 * static_cast<size_t>(kGridCells) * sizeof(double));
    int32_t dims[3] = {kThetaHBins, kThetaDBins, kPhiDBins};
    std::memcpy(out.data(), dims, sizeof(dims));
    auto* raw = reinterpret_cast<double*>(out.data() + 3 * sizeof(int32_t));
    for (int c = 0; c < 3; ++c) {
        const double* plane = b.values.data() + static_cast<size_t>(c) * kGridCells;
        for (int cell = 0; cell < kGridCells; ++cell)
            raw[static_cast<size_t>(c) * kGridCells + cell] = plane[cell] / kScales[c];
    }
    return out;
}

MeasuredBrdf load_merl_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw Truncated("cannot open " + path);
    std::vector<std::byte> bytes(static_cast<size_t>(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!in) throw Truncated("short read from " + path);
    MeasuredBrdf b = parse_merl(bytes);
    auto slash = path.find_last_of('/');
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    auto dot = base.find_last_of('.');
    b.name = dot == std::string::npos ? base : base.substr(0, dot);
    return b;
}

void save_merl_file(const MeasuredBrdf& b, const std::string& path) {
    auto bytes = write_merl(b);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + path);
}

std::pair<HalfDiffAngles, double> io_to_halfdiff(const DirectionPair& p) {
    Vec3 sum = p.wi + p.wo;
    double len = sum.norm();
    if (len < 1e-9)
        throw DegenerateHalfVector("|wi + wo| = " + std::to_string(len));
    Vec3 h = sum / len;

    double theta_h = std::atan2(std::hypot(h.x(), h.y()), h.z());
    double phi_h = std::atan2(h.y(), h.x());

    // Difference vector: wi expressed in the frame that carries h to +z.
    Vec3 d = rotate_y(rotate_z(p.wi, -phi_h), -theta_h);
    double theta_d = std::atan2(std::hypot(d.x(), d.y()), d.z());
    double phi_d = std::atan2(d.y(), d.x());

    // Reciprocity makes phi_d and phi_d + pi equivalent; fold to [0, pi).
    phi_d -= kPi * std::floor(phi_d / kPi);
    if (phi_d >= kPi) phi_d = 0.0; // guards the phi_d == pi rounding edge

    return {HalfDiffAngles{theta_h, theta_d, phi_d}, phi_h};
}

std::optional<DirectionPair> try_halfdiff_to_io(const HalfDiffAngles& a) {
    double sd = std::sin(a.theta_d), cd = std::cos(a.theta_d);
    Vec3 d(sd * std::cos(a.phi_d), sd * std::sin(a.phi_d), cd);
    Vec3 wi = rotate_y(d, a.theta_h);
    Vec3 h(std::sin(a.theta_h), 0.0, std::cos(a.theta_h));
    Vec3 wo = 2.0 * wi.dot(h) * h - wi;
    if (wi.z() < -1e-9 || wo.z() < -1e-9) return std::nullopt;
    wi.z() = std::max(wi.z(), 0.0);
    wo.z() = std::max(wo.z(), 0.0);
    return DirectionPair{wi, wo};
}

DirectionPair halfdiff_to_io(const HalfDiffAngles& a) {
    auto p = try_halfdiff_to_io(a);
    if (!p)
        throw BelowHorizon("no above-horizon pair for theta_h=" +
                           std::to_string(a.theta_h) + " theta_d=" +
                           std::to_string(a.theta_d) + " phi_d=" +
                           std::to_string(a.phi_d));
    return *p;
}

DirectionPair rotate_pair_z(const DirectionPair& p, double angle) {
    return {rotate_z(p.wi, angle), rotate_z(p.wo, angle)};
}

std::array<int, 3> grid_index(const HalfDiffAngles& a) {
    double th = std::max(a.theta_h, 0.0);
    int i = static_cast<int>(std::floor(std::sqrt(th / kHalfPi) * kThetaHBins));
    int j = static_cast<int>(std::floor(a.theta_d / kHalfPi * kThetaDBins));
    int k = static_cast<int>(std::floor(a.phi_d / kPi * kPhiDBins));
    i = std::clamp(i, 0, kThetaHBins - 1);
    j = std::clamp(j, 0, kThetaDBins - 1);
    k = std::clamp(k, 0, kPhiDBins - 1);
    return {i, j, k};
}

HalfDiffAngles cell_center_angles(int i, int j, int k) {
    double u = (i + 0.5) / kThetaHBins;
    return HalfDiffAngles{u * u * kHalfPi,
                          (j + 0.5) / kThetaDBins * kHalfPi,
                          (k + 0.5) / kPhiDBins * kPi};
}

Rgb eval_measured(const MeasuredBrdf& b, const HalfDiffAngles& a) {
    auto [i, j, k] = grid_index(a);
    return b.rgb(cell_id(i, j, k)).max(0.0);
}

GridGeometry::GridGeometry()
    : valid_(kGridCells, 0), cos_theta_i_(kGridCells, 0.0) {
    for (int i = 0; i < kThetaHBins; ++i)
        for (int j = 0; j < kThetaDBins; ++j)
            for (int k = 0; k < kPhiDBins; ++k) {
                int cell = cell_id(i, j, k);
                auto p = try_halfdiff_to_io(cell_center_angles(i, j, k));
                if (p) {
                    valid_[cell] = 1;
                    cos_theta_i_[cell] = p->wi.z();
                    valid_cells_.push_back(cell);
                }
            }
    valid_count_ = static_cast<int>(valid_cells_.size());
}

const GridGeometry& GridGeometry::instance() {
    static GridGeometry g;
    return g;
}

} // namespace neumat
