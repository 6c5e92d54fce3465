#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "neumat/brdf.hpp"

namespace neumat {

/// Wraps an analytic reflectance function as an evaluable BRDF.
class AnalyticBrdf : public BrdfEvaluable {
public:
    explicit AnalyticBrdf(std::function<Rgb(const HalfDiffAngles&)> fn)
        : fn_(std::move(fn)) {}
    Rgb eval(const HalfDiffAngles& a) const override { return fn_(a); }

private:
    std::function<Rgb(const HalfDiffAngles&)> fn_;
};

/// Tabulates an analytic BRDF at the grid cell centers.
MeasuredBrdf tabulate(const BrdfEvaluable& f, std::string name);

MeasuredBrdf make_constant_brdf(const Rgb& value, std::string name);

/// Diffuse floor plus a Gaussian specular lobe in theta_h:
/// f = kd + ks * exp(-(theta_h / width)^2).
struct LobeSpec {
    Rgb kd = Rgb(0.05, 0.05, 0.05);
    Rgb ks = Rgb(1.0, 1.0, 1.0);
    double width = 0.3;
};
MeasuredBrdf make_lobe_brdf(const LobeSpec& spec, std::string name);

/// Smooth seeded random material: random diffuse color, a random lobe and
/// a mild Fresnel-like rise in theta_d. Distinct seeds give distinct
/// materials; useful as a stand-in corpus.
MeasuredBrdf make_random_brdf(uint64_t seed, std::string name);

/// Builds the synthetic materials addressable from the command line:
/// "lambert-<rho>", "lobe-<width>", "random-<seed>". Throws ConfigError
/// for unknown names.
MeasuredBrdf make_named_synthetic(const std::string& name);

} // namespace neumat
