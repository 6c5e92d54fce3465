#pragma once

#include <cmath>

#include <Eigen/Core>

#include "neumat/errors.hpp"

namespace neumat {

/// Adam with bias-corrected moments. The learning rate is passed per step
/// so callers can drive their own schedules.
class Adam {
public:
    Adam(Eigen::Index dim, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : m_(Eigen::VectorXd::Zero(dim)),
          v_(Eigen::VectorXd::Zero(dim)),
          beta1_(beta1),
          beta2_(beta2),
          eps_(eps) {}

    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
        if (params.size() != m_.size() || grad.size() != m_.size())
            throw DimensionMismatch("optimizer state does not match parameters");
        ++t_;
        m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
        v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
        double c1 = 1.0 - std::pow(beta1_, t_);
        double c2 = 1.0 - std::pow(beta2_, t_);
        params.array() -=
            lr * (m_.array() / c1) /
            ((v_.array() / c2).sqrt() + eps_);
    }

private:
    Eigen::VectorXd m_, v_;
    double beta1_, beta2_, eps_;
    long long t_ = 0;
};

} // namespace neumat
