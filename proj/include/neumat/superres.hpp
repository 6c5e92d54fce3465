#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neumat/brdf.hpp"
#include "neumat/neural_field.hpp"
#include "neumat/render.hpp"

namespace neumat {

/// Tabulation kept only at every factor-th index in each dimension
/// (starting at index 0), channel-planar like the full table.
struct SparseBrdf {
    int factor = 1;
    int count_h = 0, count_d = 0, count_p = 0; // kept samples per dimension
    std::vector<double> values;                // 3 * count_h*count_d*count_p
    std::string name;

    double at(int channel, int a, int b, int c) const {
        size_t idx = ((static_cast<size_t>(channel) * count_h + a) * count_d + b) *
                         count_p +
                     c;
        return values[idx];
    }
};

/// Keeps every x-th index; x must be one of {1,2,4,8,16,24,32}.
SparseBrdf downsample_grid(const MeasuredBrdf& b, int x);

/// Piecewise-constant reconstruction: a query fetches the kept sample at
/// the floored index in each dimension.
class NnBaselineBrdf : public BrdfEvaluable {
  public:
    explicit NnBaselineBrdf(SparseBrdf sparse);
    Rgb eval(const HalfDiffAngles& a) const override;

  private:
    SparseBrdf s_;
};

/// Full-grid ids of the kept cells that are also valid; the sparse fit
/// trains on exactly these.
std::vector<int> kept_valid_cells(int x);

struct SuperresReport {
    int factor = 1;
    int count_h = 0, count_d = 0, count_p = 0;
    double ssim_baseline = 0.0;
    double ssim_field = 0.0;
    double field_loss = 0.0; // final fit loss on the kept cells
    uint64_t fit_seed = 0;
};

/// Fits a neural field on the kept samples only, renders ground truth,
/// baseline, and field, and reports both SSIMs. Epochs are scaled x4 at
/// factors >= 16 where each epoch sees few samples.
SuperresReport superres_experiment(const MeasuredBrdf& b, int x,
                                   const FitConfig& fit,
                                   const RenderConfig& render);

/// Aligned text table, one row per report.
std::string superres_table(const std::vector<SuperresReport>& rows);

} // namespace neumat
