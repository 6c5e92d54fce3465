#pragma once

#include <vector>

#include <Eigen/Core>

#include "neumat/brdf.hpp"
#include "neumat/render.hpp"

namespace neumat {

// ---- image metrics ----

double rmse(const Image& a, const Image& b);
/// Peak signal-to-noise ratio with peak 1.0; +infinity for identical images.
double psnr(const Image& a, const Image& b);
/// Global (whole-image) SSIM per channel, averaged over channels.
/// Statistics use the Bessel-corrected variance; stabilizers follow
/// k1 = 0.01, k2 = 0.03 with dynamic range 1.
double ssim(const Image& a, const Image& b);
double neg_psnr(const Image& a, const Image& b);
double neg_ssim(const Image& a, const Image& b);

// ---- BRDF-space distances ----
// Expectations are unweighted means over valid grid cells and channels.

double d_brdf_l1(const BrdfEvaluable& f, const BrdfEvaluable& g);
/// log(1 + f) variant, no cosine weight.
double d_brdf_l1_log(const BrdfEvaluable& f, const BrdfEvaluable& g);
/// Mean squared log difference of cosine-weighted reflectance.
double d_msl(const BrdfEvaluable& f, const BrdfEvaluable& g);

/// Pluggable distance between BRDFs: either a grid-space distance or an
/// image metric on sphere renderings.
struct BrdfDistance {
    enum class Tag { brdf_l1, brdf_l1_log, msl, rmse, neg_psnr, neg_ssim };
    Tag tag = Tag::brdf_l1;
    RenderConfig render; // used by the three image-backed tags

    double operator()(const BrdfEvaluable& f, const BrdfEvaluable& g) const;
    bool image_backed() const {
        return tag == Tag::rmse || tag == Tag::neg_psnr || tag == Tag::neg_ssim;
    }
};

const char* to_string(BrdfDistance::Tag tag);

/// All pairwise distances d(A_i, B_j); each input is tabulated or rendered
/// once, so the cost is |A|+|B| preparations plus cheap pair reductions.
Eigen::MatrixXd pairwise_distance(const std::vector<const BrdfEvaluable*>& A,
                                  const std::vector<const BrdfEvaluable*>& B,
                                  const BrdfDistance& d);

// ---- distributional metrics (matrix core) ----
// d_rs holds d(R_i, S_j); d_rr and d_ss are the within-set matrices.

/// Mean over the reference set of the distance to the nearest synthesized
/// sample. Lower is better.
double mmd(const Eigen::MatrixXd& d_rs);
/// Fraction of reference samples that are the nearest reference of at
/// least one synthesized sample. Argmin ties break to the lowest index.
double cov(const Eigen::MatrixXd& d_rs);
/// Leave-one-out 1-nearest-neighbor accuracy over the union; 50% means
/// the two sets are indistinguishable. Ties break to the lowest global
/// index (reference block first).
double one_nna(const Eigen::MatrixXd& d_rr, const Eigen::MatrixXd& d_rs,
               const Eigen::MatrixXd& d_ss);

// ---- convenience overloads over BRDF sets ----

double mmd(const std::vector<const BrdfEvaluable*>& R,
           const std::vector<const BrdfEvaluable*>& S, const BrdfDistance& d);
double cov(const std::vector<const BrdfEvaluable*>& R,
           const std::vector<const BrdfEvaluable*>& S, const BrdfDistance& d);
double one_nna(const std::vector<const BrdfEvaluable*>& R,
               const std::vector<const BrdfEvaluable*>& S, const BrdfDistance& d);

} // namespace neumat
