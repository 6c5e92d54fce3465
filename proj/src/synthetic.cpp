#include "neumat/synthetic.hpp"

#include <cmath>
#include <random>

namespace neumat {

MeasuredBrdf tabulate(const BrdfEvaluable& f, std::string name) {
    MeasuredBrdf b;
    b.name = std::move(name);
    for (int i = 0; i < kThetaHBins; ++i)
        for (int j = 0; j < kThetaDBins; ++j)
            for (int k = 0; k < kPhiDBins; ++k) {
                Rgb v = f.eval(cell_center_angles(i, j, k)).max(0.0);
                int cell = cell_id(i, j, k);
                for (int c = 0; c < 3; ++c)
                    b.values[static_cast<size_t>(c) * kGridCells + cell] = v[c];
            }
    return b;
}

MeasuredBrdf make_constant_brdf(const Rgb& value, std::string name) {
    MeasuredBrdf b;
    b.name = std::move(name);
    for (int c = 0; c < 3; ++c) {
        double* plane = b.values.data() + static_cast<size_t>(c) * kGridCells;
        std::fill(plane, plane + kGridCells, std::max(value[c], 0.0));
    }
    return b;
}

MeasuredBrdf make_lobe_brdf(const LobeSpec& spec, std::string name) {
    MeasuredBrdf b;
    b.name = std::move(name);
    // The lobe only depends on theta_h, so fill plane rows.
    for (int i = 0; i < kThetaHBins; ++i) {
        double th = cell_center_angles(i, 0, 0).theta_h;
        double lobe = std::exp(-(th / spec.width) * (th / spec.width));
        for (int c = 0; c < 3; ++c) {
            double v = std::max(spec.kd[c] + spec.ks[c] * lobe, 0.0);
            double* row = b.values.data() + static_cast<size_t>(c) * kGridCells +
                          static_cast<size_t>(i) * kThetaDBins * kPhiDBins;
            std::fill(row, row + kThetaDBins * kPhiDBins, v);
        }
    }
    return b;
}

MeasuredBrdf make_random_brdf(uint64_t seed, std::string name) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Rgb kd(0.02 + 0.3 * uni(rng), 0.02 + 0.3 * uni(rng), 0.02 + 0.3 * uni(rng));
    double gain = 0.2 + 2.3 * uni(rng);
    Rgb ks(gain * (0.4 + 0.6 * uni(rng)), gain * (0.4 + 0.6 * uni(rng)),
           gain * (0.4 + 0.6 * uni(rng)));
    double width = 0.08 + 0.9 * uni(rng);
    double fresnel = 0.5 * uni(rng);
    double phase = kPi * uni(rng);
    double ripple = 0.15 * uni(rng);

    MeasuredBrdf b;
    b.name = std::move(name);
    for (int i = 0; i < kThetaHBins; ++i)
        for (int j = 0; j < kThetaDBins; ++j) {
            auto a = cell_center_angles(i, j, 0);
            double lobe = std::exp(-(a.theta_h / width) * (a.theta_h / width));
            double rise = 1.0 + fresnel * a.theta_d * a.theta_d;
            for (int k = 0; k < kPhiDBins; ++k) {
                double pd = cell_center_angles(i, j, k).phi_d;
                double mod = 1.0 + ripple * std::cos(2.0 * pd + phase);
                int cell = cell_id(i, j, k);
                for (int c = 0; c < 3; ++c) {
                    double v = kd[c] * mod + ks[c] * lobe * rise;
                    b.values[static_cast<size_t>(c) * kGridCells + cell] =
                        std::max(v, 0.0);
                }
            }
        }
    return b;
}

MeasuredBrdf make_named_synthetic(const std::string& name) {
    auto dash = name.find('-');
    std::string kind = dash == std::string::npos ? name : name.substr(0, dash);
    std::string arg = dash == std::string::npos ? "" : name.substr(dash + 1);
    try {
        if (kind == "lambert") {
            double rho = arg.empty() ? 0.5 : std::stod(arg);
            if (rho < 0.0) throw ConfigError("lambert albedo must be nonnegative");
            return make_constant_brdf(Rgb::Constant(rho / kPi), name);
        }
        if (kind == "lobe") {
            LobeSpec spec;
            if (!arg.empty()) spec.width = std::stod(arg);
            if (spec.width <= 0.0) throw ConfigError("lobe width must be positive");
            return make_lobe_brdf(spec, name);
        }
        if (kind == "random") {
            uint64_t seed = arg.empty() ? 0 : std::stoull(arg);
            return make_random_brdf(seed, name);
        }
    } catch (const std::invalid_argument&) {
        throw ConfigError("bad synthetic material argument: " + name);
    } catch (const std::out_of_range&) {
        throw ConfigError("bad synthetic material argument: " + name);
    }
    throw ConfigError("unknown synthetic material: " + name);
}

} // namespace neumat
