#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "neumat/errors.hpp"

namespace neumat {

using Vec3 = Eigen::Vector3d;
using Rgb  = Eigen::Array3d;

// Tabulation resolution of the half/difference-angle grid.
inline constexpr int kThetaHBins = 90;
inline constexpr int kThetaDBins = 90;
inline constexpr int kPhiDBins   = 180;
inline constexpr int kGridCells  = kThetaHBins * kThetaDBins * kPhiDBins;

// Per-channel scale factors applied on top of the raw tabulated doubles.
inline constexpr double kRedScale   = 1.0 / 1500.0;
inline constexpr double kGreenScale = 1.15 / 1500.0;
inline constexpr double kBlueScale  = 1.66 / 1500.0;

inline constexpr double kPi     = 3.14159265358979323846;
inline constexpr double kHalfPi = kPi / 2.0;

/// Half/difference parameterization of a direction pair. theta_h and
/// theta_d live in [0, pi/2]; phi_d is folded into [0, pi) by reciprocity.
struct HalfDiffAngles {
    double theta_h = 0.0;
    double theta_d = 0.0;
    double phi_d   = 0.0;
};

/// Incident/outgoing unit directions in a z-up local frame.
/// wi.z() is cos(theta_i), the weight used by the fitting loss.
struct DirectionPair {
    Vec3 wi;
    Vec3 wo;
};

inline int cell_id(int i, int j, int k) {
    return (i * kThetaDBins + j) * kPhiDBins + k;
}

/// Tabulated isotropic BRDF on the 90x90x180 grid, stored as three
/// channel planes (all red, then green, then blue).
struct MeasuredBrdf {
    std::vector<double> values; // 3 * kGridCells
    std::string name;
    std::optional<int> type_id;

    MeasuredBrdf() : values(3 * static_cast<size_t>(kGridCells), 0.0) {}

    double& at(int channel, int i, int j, int k) {
        return values[static_cast<size_t>(channel) * kGridCells + cell_id(i, j, k)];
    }
    double at(int channel, int i, int j, int k) const {
        return values[static_cast<size_t>(channel) * kGridCells + cell_id(i, j, k)];
    }
    Rgb rgb(int cell) const {
        return Rgb(values[cell],
                   values[static_cast<size_t>(kGridCells) + cell],
                   values[2 * static_cast<size_t>(kGridCells) + cell]);
    }
};

/// Anything that can be queried for reflectance at half/difference angles.
class BrdfEvaluable {
public:
    virtual ~BrdfEvaluable() = default;
    virtual Rgb eval(const HalfDiffAngles& a) const = 0;
};

/// Nearest-cell lookup into a measured table.
class MeasuredBrdfView : public BrdfEvaluable {
public:
    explicit MeasuredBrdfView(const MeasuredBrdf& b) : brdf_(&b) {}
    Rgb eval(const HalfDiffAngles& a) const override;

private:
    const MeasuredBrdf* brdf_;
};

// ---- container format ----

MeasuredBrdf parse_merl(std::span<const std::byte> bytes);
std::vector<std::byte> write_merl(const MeasuredBrdf& b);

MeasuredBrdf load_merl_file(const std::string& path);
void save_merl_file(const MeasuredBrdf& b, const std::string& path);

// ---- direction <-> half/difference transforms ----

/// Maps a direction pair to half/difference angles. Also returns the half
/// vector azimuth phi_h, which the folded angles no longer carry.
/// Throws DegenerateHalfVector when wi + wo is (numerically) zero.
std::pair<HalfDiffAngles, double> io_to_halfdiff(const DirectionPair& p);

/// Reconstructs the canonical (phi_h = 0) direction pair.
/// Throws BelowHorizon when either direction has negative z.
DirectionPair halfdiff_to_io(const HalfDiffAngles& a);

/// Same reconstruction, but reports below-horizon cells as nullopt
/// instead of throwing. Used for bulk grid scans.
std::optional<DirectionPair> try_halfdiff_to_io(const HalfDiffAngles& a);

/// Rotates a direction pair about the surface normal.
DirectionPair rotate_pair_z(const DirectionPair& p, double angle);

// ---- grid mapping ----

/// Angles -> cell indices. theta_h uses the square-root warp that
/// concentrates cells near specular peaks.
std::array<int, 3> grid_index(const HalfDiffAngles& a);

/// Center angles of cell (i, j, k); inverts grid_index on cell centers.
HalfDiffAngles cell_center_angles(int i, int j, int k);

/// Nearest-cell table lookup (clamped to nonnegative).
Rgb eval_measured(const MeasuredBrdf& b, const HalfDiffAngles& a);

/// Shared per-cell geometry of the tabulation grid: which cells have an
/// above-horizon reconstruction and their cos(theta_i). Built once per
/// process.
class GridGeometry {
public:
    static const GridGeometry& instance();

    bool valid(int cell) const { return valid_[cell] != 0; }
    double cos_theta_i(int cell) const { return cos_theta_i_[cell]; }
    int valid_count() const { return valid_count_; }
    const std::vector<uint8_t>& mask() const { return valid_; }
    /// Cell ids with a valid reconstruction, ascending.
    const std::vector<int>& valid_cells() const { return valid_cells_; }

private:
    GridGeometry();
    std::vector<uint8_t> valid_;
    std::vector<double> cos_theta_i_;
    std::vector<int> valid_cells_;
    int valid_count_ = 0;
};

} // namespace neumat
