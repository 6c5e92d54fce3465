#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "neumat/dataset.hpp"
#include "neumat/neural_field.hpp"
#include "neumat/transformer.hpp"

namespace neumat {

/// Discrete-time variance schedule. beta[i] is the step-(i+1) variance;
/// abar(t) is the cumulative signal fraction with abar(0) == 1.
class NoiseSchedule {
  public:
    NoiseSchedule() = default;
    explicit NoiseSchedule(Eigen::VectorXd beta);

    int steps() const { return static_cast<int>(beta_.size()); }
    double beta(int t) const;      // t in 1..T
    double abar(int t) const;      // t in 0..T
    const Eigen::VectorXd& betas() const { return beta_; }

  private:
    Eigen::VectorXd beta_;
    Eigen::VectorXd abar_;
};

/// Linear schedule with endpoints scaled by 1000/T so the terminal signal
/// fraction stays below 1% regardless of the step count (the classic
/// 1e-4..0.02 ramp assumes a thousand steps; at T=100 it would leave
/// abar_T around 0.37). Betas are capped at 0.999 for very small T.
NoiseSchedule make_schedule(int steps = 100);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps; t == 0 returns x0.
Eigen::VectorXd forward_marginal(const NoiseSchedule& sched,
                                 const Eigen::VectorXd& x0, int t,
                                 const Eigen::VectorXd& eps);

/// Trained denoiser: architecture, flat parameters, the per-coordinate
/// normalization of the training data, the schedule it was trained
/// against, and the per-epoch loss curve.
struct DenoiserParams {
    DenoiserConfig config;
    Eigen::VectorXd flat;
    Eigen::VectorXd norm_mean;
    Eigen::VectorXd norm_std;
    NoiseSchedule schedule;
    std::vector<double> loss_curve;
};

/// Noise prediction in normalized coordinates (no scaling applied here;
/// train/sample own the normalization).
Eigen::VectorXd denoise(const DenoiserParams& params, const Eigen::VectorXd& x_t,
                        int t, const Condition& cond);

struct HyperTrainConfig {
    int epochs_uncond = 700;
    int epochs_cond = 200;
    int batch_size = 512;
    double lr_start = 5e-4;
    double lr_end = 5e-6;
    double cond_dropout = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    int log_every = 0; // epochs between progress lines; 0 = silent
};

/// Two-phase training over the training split of a fitted weight set:
/// an unconditional phase ignoring labels, then a conditional phase
/// using each material's type id (10% dropped to the null condition).
/// The learning rate decays geometrically across all steps of both
/// phases. Throws NonFinite if the loss diverges.
DenoiserParams train_denoiser(const NeuMerl& dataset, const NoiseSchedule& sched,
                              const DenoiserConfig& cfg,
                              const HyperTrainConfig& tcfg);

/// Deterministic guided sampler. Draws x_T ~ N(0, I) from the seed, then
/// for t = T..1 predicts eps with classifier-free guidance
///   eps_cfg = (1 + w) eps(x, cond, t) - w eps(x, null, t),
/// reconstructs x0_hat = (x_t - sqrt(1-abar_t) eps) / sqrt(abar_t) and
/// steps to x_{t-1} = sqrt(abar_{t-1}) x0_hat + sqrt(1-abar_{t-1}) eps.
/// w == -1 or a null condition short-circuits to a single unconditional
/// evaluation, so those paths are bitwise identical. w < -1 throws
/// GuidanceOutOfRange. The result is de-normalized.
Eigen::VectorXd sample_vector(const DenoiserParams& params,
                              const NoiseSchedule& sched, const Condition& cond,
                              double guidance, uint64_t seed);

/// sample_vector wrapped into field weights; requires data_dim == 675.
NeuralFieldWeights sample_cfg(const DenoiserParams& params,
                              const NoiseSchedule& sched, const Condition& cond,
                              double guidance, uint64_t seed);

NeuralFieldWeights sample_uncond(const DenoiserParams& params,
                                 const NoiseSchedule& sched, uint64_t seed);

/// Checkpoint IO ("NMDF": config, normalization, schedule, parameters,
/// loss curve). Throws HeaderMismatch / Truncated on malformed files.
void write_denoiser(const std::filesystem::path& path, const DenoiserParams& p);
DenoiserParams read_denoiser(const std::filesystem::path& path);

} // namespace neumat
