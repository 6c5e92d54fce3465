#include "neumat/rules.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "neumat/rng.hpp"

namespace neumat {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* category_name(MaterialCategory cat) {
    switch (cat) {
    case MaterialCategory::Diffuse: return "diffuse";
    case MaterialCategory::Metallic: return "metallic";
    case MaterialCategory::LowSpecular: return "low-specular";
    case MaterialCategory::MidSpecular: return "mid-specular";
    case MaterialCategory::HighSpecular: return "high-specular";
    case MaterialCategory::Plastic: return "plastic";
    case MaterialCategory::Mirror: return "mirror";
    }
    return "?";
}

std::optional<MaterialCategory> category_from_name(std::string_view name) {
    for (MaterialCategory cat : kAllCategories)
        if (name == category_name(cat))
            return cat;
    return std::nullopt;
}

namespace {

// Per-cell reduction over valid grid cells. fn(rgb) is called once per cell.
template <typename Fn> void for_valid_cells(const BrdfEvaluable& b, Fn&& fn) {
    const auto& cells = GridGeometry::instance().valid_cells();
    for (int cell : cells) {
        int i = cell / (kThetaDBins * kPhiDBins);
        int rem = cell % (kThetaDBins * kPhiDBins);
        fn(b.eval(cell_center_angles(i, rem / kPhiDBins, rem % kPhiDBins)));
    }
}

} // namespace

BrdfStats brdf_stats(const BrdfEvaluable& b) {
    BrdfStats s;
    // Compensated sums: a naive mean over a million cells drifts enough
    // to break max >= mean for constant materials.
    Rgb sum = Rgb::Zero(), comp = Rgb::Zero();
    for_valid_cells(b, [&](const Rgb& v) {
        Rgb y = v - comp;
        Rgb t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        s.max = s.max.max(v);
        ++s.valid_cells;
    });
    if (s.valid_cells > 0)
        s.mean = sum / double(s.valid_cells);
    return s;
}

double lobe_width(const BrdfEvaluable& b) {
    double peak = b.eval({0.0, 0.0, 0.0}).maxCoeff();
    if (peak <= 0.0)
        throw ZeroPeak("lobe has no peak at normal incidence");
    for (int i = 0; i < kThetaHBins; ++i) {
        double theta_h = (i + 0.5) / kThetaHBins;
        theta_h = theta_h * theta_h * kHalfPi; // sqrt-warped grid centers
        if (b.eval({theta_h, 0.0, 0.0}).maxCoeff() <= 0.5 * peak)
            return theta_h;
    }
    return kHalfPi;
}

bool satisfies(const BrdfEvaluable& b, MaterialCategory cat) {
    switch (cat) {
    case MaterialCategory::Diffuse: {
        long over = 0;
        for_valid_cells(b, [&](const Rgb& v) {
            if (v.maxCoeff() > kDiffuseBound)
                ++over;
        });
        return over < kExceptionBudget;
    }
    case MaterialCategory::Metallic: {
        bool all = true;
        for_valid_cells(b, [&](const Rgb& v) {
            if (v.maxCoeff() <= kDiffuseBound)
                all = false;
        });
        return all;
    }
    case MaterialCategory::LowSpecular:
    case MaterialCategory::MidSpecular:
    case MaterialCategory::HighSpecular: {
        double m = brdf_stats(b).max.maxCoeff();
        if (cat == MaterialCategory::LowSpecular)
            return m >= kDiffuseBound && m < kSpecularLow;
        if (cat == MaterialCategory::MidSpecular)
            return m >= kSpecularLow && m < kSpecularHigh;
        return m >= kSpecularHigh;
    }
    case MaterialCategory::Plastic: {
        // White specular part: wherever the cell exceeds the diffuse
        // bound, the channels must agree within 5% of the global max.
        double tol = kPlasticTolerance * brdf_stats(b).max.maxCoeff();
        bool white = true;
        for_valid_cells(b, [&](const Rgb& v) {
            if (v.maxCoeff() > kDiffuseBound &&
                v.maxCoeff() - v.minCoeff() >= tol)
                white = false;
        });
        return white;
    }
    case MaterialCategory::Mirror: {
        try {
            return lobe_width(b) < kMirrorWidth;
        } catch (const ZeroPeak&) {
            return false; // no lobe at all
        }
    }
    }
    return false;
}

std::vector<MaterialCategory> classify(const BrdfEvaluable& b) {
    std::vector<MaterialCategory> out;
    for (MaterialCategory cat : kAllCategories)
        if (satisfies(b, cat))
            out.push_back(cat);
    return out;
}

namespace {

int nearest_center(const Eigen::Ref<const MatrixXd>& centers,
                   const Eigen::RowVectorXd& x, double* dist2_out = nullptr) {
    int best = 0;
    double best_d = (centers.row(0) - x).squaredNorm();
    for (int c = 1; c < centers.rows(); ++c) {
        double d = (centers.row(c) - x).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    if (dist2_out)
        *dist2_out = best_d;
    return best;
}

} // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, uint64_t seed) {
    const int n = static_cast<int>(points.rows());
    if (k < 1 || n < k)
        throw ConfigError("kmeans needs n >= k >= 1");

    Rng rng(seed);
    MatrixXd centers(k, points.cols());
    centers.row(0) = points.row(static_cast<int>(rng.below(uint64_t(n))));
    VectorXd d2(n);
    for (int c = 1; c < k; ++c) {
        for (int i = 0; i < n; ++i)
            nearest_center(centers.topRows(c), points.row(i), &d2[i]);
        double total = d2.sum();
        int pick;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            pick = n - 1;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += d2[i];
                if (r < acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<int>(rng.below(uint64_t(n)));
        }
        centers.row(c) = points.row(pick);
    }

    KMeansResult res;
    res.assignment.assign(n, -1);
    for (int iter = 0; iter < 100; ++iter) {
        ++res.iterations;
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int a = nearest_center(centers, points.row(i));
            if (a != res.assignment[i]) {
                res.assignment[i] = a;
                changed = true;
            }
        }
        if (!changed)
            break;

        MatrixXd sums = MatrixXd::Zero(k, points.cols());
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            sums.row(res.assignment[i]) += points.row(i);
            ++counts[res.assignment[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                centers.row(c) = sums.row(c) / counts[c];
            } else {
                // Re-seed an empty cluster to the point farthest from its
                // current center.
                int far = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    double d =
                        (points.row(i) - centers.row(res.assignment[i]))
                            .squaredNorm();
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                centers.row(c) = points.row(far);
            }
        }
    }

    res.centers = centers;
    res.objective = 0.0;
    for (int i = 0; i < n; ++i)
        res.objective +=
            (points.row(i) - centers.row(res.assignment[i])).squaredNorm();
    return res;
}

ConstrainedSample
constrained_sample(const std::function<NeuralFieldWeights()>& sampler,
                   MaterialCategory cat, int max_attempts) {
    if (max_attempts < 1)
        throw ConfigError("need at least one attempt");
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        NeuralFieldWeights w = sampler();
        MeasuredBrdf tab = nf_export_tabulated(w);
        if (satisfies(MeasuredBrdfView(tab), cat))
            return {std::move(w), attempt};
    }
    throw Exhausted(max_attempts);
}

} // namespace neumat
