#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "neumat/brdf.hpp"
#include "neumat/errors.hpp"
#include "neumat/neural_field.hpp"

namespace neumat {

/// Energy passivity bounds a constant BRDF by 1/pi per channel.
inline constexpr double kDiffuseBound = 1.0 / kPi;
/// Cells allowed to exceed the diffuse bound before a material stops
/// counting as diffuse (absolute count out of the 1,458,000-cell grid).
inline constexpr long kExceptionBudget = 80000;
inline constexpr double kSpecularLow = 100.0;  // low/mid band edge
inline constexpr double kSpecularHigh = 600.0; // mid/high band edge
inline constexpr double kPlasticTolerance = 0.05; // fraction of the max
inline constexpr double kMirrorWidth = 0.349;     // radians

struct BrdfStats {
    Rgb mean = Rgb::Zero();
    Rgb max = Rgb::Zero();
    long valid_cells = 0;
};

enum class MaterialCategory {
    Diffuse,
    Metallic,
    LowSpecular,
    MidSpecular,
    HighSpecular,
    Plastic,
    Mirror,
};

inline constexpr MaterialCategory kAllCategories[] = {
    MaterialCategory::Diffuse,      MaterialCategory::Metallic,
    MaterialCategory::LowSpecular,  MaterialCategory::MidSpecular,
    MaterialCategory::HighSpecular, MaterialCategory::Plastic,
    MaterialCategory::Mirror,
};

const char* category_name(MaterialCategory cat);
std::optional<MaterialCategory> category_from_name(std::string_view name);

/// Per-channel mean and max reflectance over the valid grid cells.
BrdfStats brdf_stats(const BrdfEvaluable& b);

/// Half-peak lobe width: the smallest theta_h grid angle (at
/// theta_d = 0, phi_d = 0) where the channel-max reflectance drops to
/// half the peak at theta_h = 0, or pi/2 if it never does.
/// Throws ZeroPeak when the peak is zero.
double lobe_width(const BrdfEvaluable& b);

/// Category predicates over the tabulated grid; independent, so one
/// material may satisfy several.
bool satisfies(const BrdfEvaluable& b, MaterialCategory cat);

/// Every category the material satisfies, in kAllCategories order.
std::vector<MaterialCategory> classify(const BrdfEvaluable& b);

struct KMeansResult {
    std::vector<int> assignment; // one cluster id per row
    Eigen::MatrixXd centers;     // k x p
    double objective = 0.0;      // sum of squared distances
    int iterations = 0;
};

/// Lloyd iterations from seeded k-means++ starts until assignments
/// stabilize (at most 100 rounds). Empty clusters are re-seeded to the
/// farthest point from its center.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, uint64_t seed);

struct ConstrainedSample {
    NeuralFieldWeights weights;
    int attempts = 0;
};

/// Rejection loop: draw from the sampler, tabulate, test the category.
/// Throws Exhausted(max_attempts) when no draw satisfies it.
ConstrainedSample
constrained_sample(const std::function<NeuralFieldWeights()>& sampler,
                   MaterialCategory cat, int max_attempts);

} // namespace neumat
