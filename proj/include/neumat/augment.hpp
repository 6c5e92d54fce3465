#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "neumat/brdf.hpp"
#include "neumat/dataset.hpp"

namespace neumat {

// The six channel permutations, fixed order. Entry s of a permutation is
// the source channel feeding output slot s.
inline constexpr std::array<std::array<int, 3>, 6> kRgbPermutations{{
    {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
inline constexpr std::array<const char*, 6> kRgbPermutationNames{
    "rgb", "rbg", "grb", "gbr", "brg", "bgr"};

/// Applies permutation `perm` (index into kRgbPermutations). Non-identity
/// outputs get "-<suffix>" appended to the name.
MeasuredBrdf apply_rgb_permutation(const MeasuredBrdf& b, int perm);

/// All six channel permutations in table order; element 0 equals the input.
std::vector<MeasuredBrdf> rgb_permutations(const MeasuredBrdf& b);

/// Linear reduced space of log-mapped tabulations. Two storage regimes
/// share one interface: an explicit dense basis (small problems, toy data,
/// neural-weight vectors), and an implicit one for material-scale fits,
/// where every basis vector is a combination of per-channel log planes of
/// the base materials and is never materialized. In both, components are
/// orthonormal rows and variances are nonincreasing.
class PcaModel {
public:
    PcaModel() = default;

    /// Dense fit; data rows are samples. Requires 2 <= n and
    /// 1 <= k <= min(n-1, D); throws RankDeficient when violated or when
    /// all samples are identical (no direction to fit). Small dimensions
    /// use a covariance eigendecomposition (zero-variance directions are
    /// representable, e.g. collinear 2D points with k = 2); large
    /// dimensions use the Gram matrix and require k within the effective
    /// rank.
    static PcaModel fit(const Eigen::MatrixXd& data, int k);

    /// Material-space fit on log(1 + f) tabulations. With
    /// `permutation_closure` the samples are all 6 * n channel
    /// permutations, represented implicitly by plane re-use (the planes of
    /// a permuted material are the planes of its base). Sample order is
    /// base-major, permutation order as in kRgbPermutations.
    static PcaModel fit_materials(const MaterialProvider& base, int k,
                                  bool permutation_closure = true);

    /// Assembles a dense model from explicit parts, validating the
    /// orthonormality and variance-order invariants.
    static PcaModel from_parts(Eigen::VectorXd mean, Eigen::MatrixXd components,
                               Eigen::VectorXd variances);

    bool fitted() const { return k_ > 0; }
    bool material_space() const;
    int k() const { return k_; }
    Eigen::Index dim() const;
    const Eigen::VectorXd& variances() const { return vars_; }
    Eigen::VectorXd mean() const;
    /// k x D, orthonormal rows. Materializes the implicit basis; intended
    /// for small k when the model is material-scale.
    Eigen::MatrixXd components() const;
    /// Projections of the training samples, one row per sample. For a
    /// permutation-closure fit, row 6u + p is base u under permutation p.
    const Eigen::MatrixXd& train_projections() const { return train_proj_; }

    Eigen::VectorXd project(const Eigen::VectorXd& x) const;
    Eigen::VectorXd reconstruct(const Eigen::VectorXd& z) const;

    /// project on the log-mapped tabulation of b.
    Eigen::VectorXd project_material(const MeasuredBrdf& b) const;
    /// reconstruct, inverse log map, clamp at zero.
    MeasuredBrdf reconstruct_material(const Eigen::VectorXd& z,
                                      std::string name = {}) const;
    /// The per-component Gaussian draw behind pca_sample.
    Eigen::VectorXd draw_latent(uint64_t seed) const;

private:
    struct PlaneBasis;

    void require_fitted() const;
    Eigen::VectorXd project_planes(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
    Eigen::MatrixXd reconstruct_planes(const Eigen::VectorXd& z) const;

    int k_ = 0;
    Eigen::VectorXd vars_;
    Eigen::MatrixXd train_proj_;
    // dense storage
    Eigen::VectorXd mean_;
    Eigen::MatrixXd comps_; // k x D
    // implicit storage
    std::shared_ptr<const PlaneBasis> basis_;
};

PcaModel pca_fit(const std::vector<Eigen::VectorXd>& data, int k);
Eigen::VectorXd pca_project(const PcaModel& m, const Eigen::VectorXd& x);
Eigen::VectorXd pca_reconstruct(const PcaModel& m, const Eigen::VectorXd& z);

/// reconstruct((1-t) * project(a) + t * project(b)); endpoints reproduce
/// the reconstructions of a and b exactly.
MeasuredBrdf pca_interpolate(const PcaModel& m, const MeasuredBrdf& a,
                             const MeasuredBrdf& b, double t);

/// z_i ~ Normal(0, var_i), reconstructed and clamped. Deterministic.
MeasuredBrdf pca_sample(const PcaModel& m, uint64_t seed);

struct AugmentOptions {
    int pca_components = 300;
    int pair_count = -1; // -1: three interpolations per permuted item
    uint64_t seed = 7;
};

struct AugmentedItem {
    int index = 0;
    int total = 0;
    const MaterialMeta& meta;
    const MeasuredBrdf& brdf;
};
using AugmentSink = std::function<void(const AugmentedItem&)>;

/// Expands a base set into its augmented form: all channel permutations of
/// every base material, then PCA-space interpolations between seeded
/// random distinct-base pairs of the permuted set at random t in (0, 1).
/// Items stream to the sink in index order; the returned metadata list is
/// the dataset index. The requested component count is clamped to the
/// closure's rank bound so small bases stay fittable.
std::vector<MaterialMeta> build_augmerl(const MaterialProvider& base,
                                        const AugmentOptions& opt,
                                        const AugmentSink& sink);

/// build_augmerl straight to disk: MERL binaries plus metadata sidecar.
std::vector<MaterialMeta> write_augmerl(const MaterialProvider& base,
                                        const AugmentOptions& opt,
                                        const std::filesystem::path& dir);

} // namespace neumat
