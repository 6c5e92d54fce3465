#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "neumat/brdf.hpp"

namespace neumat {

// Fixed field architecture: 6 -> 21 -> 21 -> 3, ReLU hidden, exp output.
inline constexpr int kFieldInput  = 6;
inline constexpr int kFieldHidden = 21;
inline constexpr int kFieldOutput = 3;
inline constexpr int kFieldParamCount =
    kFieldHidden * kFieldInput + kFieldHidden +   // 126 + 21
    kFieldHidden * kFieldHidden + kFieldHidden +  // 441 + 21
    kFieldOutput * kFieldHidden + kFieldOutput;   // 63 + 3
static_assert(kFieldParamCount == 675);

/// Flat parameter vector of one material's neural field. Order: layer-1
/// matrix row-major, layer-1 bias, layer-2 matrix, layer-2 bias, output
/// matrix, output bias.
struct NeuralFieldWeights {
    Eigen::VectorXd flat;

    NeuralFieldWeights() : flat(Eigen::VectorXd::Zero(kFieldParamCount)) {}
    explicit NeuralFieldWeights(Eigen::VectorXd v) : flat(std::move(v)) {
        if (flat.size() != kFieldParamCount)
            throw DimensionMismatch("neural field weights must have " +
                                    std::to_string(kFieldParamCount) +
                                    " entries, got " + std::to_string(flat.size()));
    }
};

struct FitConfig {
    int batch_size = 512;
    int epochs = 100;
    double learning_rate = 5e-3;
    uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// A training/evaluation batch: input features with their loss weights
/// and targets. Features are the Cartesian components of (h, d) at
/// phi_h = 0, so column layout is [h.x h.y h.z d.x d.y d.z]^T.
struct FieldBatch {
    Eigen::Matrix<double, kFieldInput, Eigen::Dynamic> features;
    Eigen::Matrix<double, kFieldOutput, Eigen::Dynamic> targets;
    Eigen::VectorXd cos_theta_i;

    Eigen::Index size() const { return features.cols(); }

    /// Builds a batch from explicit angle/target pairs. Angles must have
    /// an above-horizon reconstruction (halfdiff_to_io supplies theta_i).
    static FieldBatch from_pairs(
        const std::vector<std::pair<HalfDiffAngles, Rgb>>& pairs);
};

/// Feature vector of one cell-center sample.
Eigen::Matrix<double, kFieldInput, 1> field_features(const HalfDiffAngles& a);

/// Copy the template if given, else Glorot-uniform matrices and zero
/// biases drawn deterministically from the seed.
NeuralFieldWeights nf_init(const std::optional<NeuralFieldWeights>& template_w,
                           uint64_t seed);

/// Strictly positive reflectance at the given angles.
Rgb nf_eval(const NeuralFieldWeights& w, const HalfDiffAngles& a);

/// Mean absolute logarithmic loss over batch points and channels:
/// mean |log(1 + target*cos) - log(1 + pred*cos)|.
double nf_loss(const NeuralFieldWeights& w, const FieldBatch& batch);

/// Exact gradient of nf_loss. Subgradient conventions: |.|' at 0 is 0,
/// ReLU' at 0 is 0.
Eigen::VectorXd nf_grad(const NeuralFieldWeights& w, const FieldBatch& batch);

double nf_loss_and_grad(const NeuralFieldWeights& w, const FieldBatch& batch,
                        Eigen::VectorXd* grad);

struct FitResult {
    NeuralFieldWeights weights;     // best-epoch snapshot
    double initial_loss = 0.0;      // full-set loss at init
    std::vector<double> epoch_loss; // mean minibatch loss per epoch
};

/// Adam minibatch fit on every valid grid cell of the target, visited
/// once per epoch in seeded shuffled order. Deterministic given the seed.
/// Throws NonFinite if the loss diverges.
FitResult nf_fit(const MeasuredBrdf& target, const FitConfig& cfg,
                 const NeuralFieldWeights& init);

/// Same fit restricted to an explicit list of grid cells (all must be
/// valid); used by the sparse-grid experiment.
FitResult nf_fit_cells(const MeasuredBrdf& target, const std::vector<int>& cells,
                       const FitConfig& cfg, const NeuralFieldWeights& init);

/// Evaluate the field at every cell center.
MeasuredBrdf nf_export_tabulated(const NeuralFieldWeights& w);

/// Adapter so a field can feed the renderer and metrics directly.
class NeuralFieldBrdf : public BrdfEvaluable {
public:
    explicit NeuralFieldBrdf(NeuralFieldWeights w) : w_(std::move(w)) {}
    Rgb eval(const HalfDiffAngles& a) const override { return nf_eval(w_, a); }
    const NeuralFieldWeights& weights() const { return w_; }

private:
    NeuralFieldWeights w_;
};

} // namespace neumat
