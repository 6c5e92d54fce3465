#include "neumat/superres.hpp"

#include <cstdio>

#include "neumat/metrics.hpp"

namespace neumat {

namespace {

bool factor_ok(int x) {
    for (int v : {1, 2, 4, 8, 16, 24, 32})
        if (x == v)
            return true;
    return false;
}

} // namespace

SparseBrdf downsample_grid(const MeasuredBrdf& b, int x) {
    if (!factor_ok(x))
        throw ConfigError("unsupported downsampling factor");
    SparseBrdf s;
    s.factor = x;
    s.count_h = 1 + (kThetaHBins - 1) / x;
    s.count_d = 1 + (kThetaDBins - 1) / x;
    s.count_p = 1 + (kPhiDBins - 1) / x;
    s.name = b.name;
    s.values.resize(3ull * s.count_h * s.count_d * s.count_p);
    size_t idx = 0;
    for (int ch = 0; ch < 3; ++ch)
        for (int a = 0; a < s.count_h; ++a)
            for (int d = 0; d < s.count_d; ++d)
                for (int p = 0; p < s.count_p; ++p)
                    s.values[idx++] = b.at(ch, a * x, d * x, p * x);
    return s;
}

NnBaselineBrdf::NnBaselineBrdf(SparseBrdf sparse) : s_(std::move(sparse)) {}

Rgb NnBaselineBrdf::eval(const HalfDiffAngles& a) const {
    auto [i, j, k] = grid_index(a);
    int ai = std::min(i / s_.factor, s_.count_h - 1);
    int aj = std::min(j / s_.factor, s_.count_d - 1);
    int ak = std::min(k / s_.factor, s_.count_p - 1);
    return Rgb(s_.at(0, ai, aj, ak), s_.at(1, ai, aj, ak), s_.at(2, ai, aj, ak));
}

std::vector<int> kept_valid_cells(int x) {
    if (!factor_ok(x))
        throw ConfigError("unsupported downsampling factor");
    const auto& grid = GridGeometry::instance();
    std::vector<int> cells;
    for (int i = 0; i < kThetaHBins; i += x)
        for (int j = 0; j < kThetaDBins; j += x)
            for (int k = 0; k < kPhiDBins; k += x) {
                int cell = cell_id(i, j, k);
                if (grid.valid(cell))
                    cells.push_back(cell);
            }
    return cells;
}

SuperresReport superres_experiment(const MeasuredBrdf& b, int x,
                                   const FitConfig& fit,
                                   const RenderConfig& render) {
    SparseBrdf sparse = downsample_grid(b, x);
    NnBaselineBrdf baseline(sparse);

    FitConfig cfg = fit;
    if (x >= 16)
        cfg.epochs *= 4; // few samples per epoch at high sparsity
    FitResult fr = nf_fit_cells(b, kept_valid_cells(x), cfg,
                                nf_init(std::nullopt, cfg.seed));

    Image truth = render_sphere(MeasuredBrdfView(b), render);
    Image nn = render_sphere(baseline, render);
    NeuralFieldBrdf field(fr.weights);
    Image nf = render_sphere(field, render);

    SuperresReport rep;
    rep.factor = x;
    rep.count_h = sparse.count_h;
    rep.count_d = sparse.count_d;
    rep.count_p = sparse.count_p;
    rep.ssim_baseline = ssim(truth, nn);
    rep.ssim_field = ssim(truth, nf);
    rep.field_loss = fr.epoch_loss.empty() ? fr.initial_loss
                                           : fr.epoch_loss.back();
    rep.fit_seed = cfg.seed;
    return rep;
}

std::string superres_table(const std::vector<SuperresReport>& rows) {
    std::string out = "factor   samples        ssim-nn   ssim-field\n";
    char line[128];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%-8d %3dx%3dx%3d  %9.4f  %9.4f\n",
                      r.factor, r.count_h, r.count_d, r.count_p,
                      r.ssim_baseline, r.ssim_field);
        out += line;
    }
    return out;
}

} // namespace neumat
