#include <doctest.h>

#include <cmath>

#include "neumat/metrics.hpp"
#include "neumat/rng.hpp"
#include "neumat/superres.hpp"
#include "neumat/synthetic.hpp"

using namespace neumat;

TEST_CASE("downsampling keeps every x-th sample") {
    MeasuredBrdf b = make_random_brdf(3, "rand");

    SparseBrdf full = downsample_grid(b, 1);
    CHECK(full.count_h == 90);
    CHECK(full.count_d == 90);
    CHECK(full.count_p == 180);
    CHECK(full.values.size() == b.values.size());

    struct Want {
        int x, h, d, p;
    };
    for (Want w : {Want{16, 6, 6, 12}, Want{32, 3, 3, 6}, Want{24, 4, 4, 8},
                   Want{8, 12, 12, 23}}) {
        SparseBrdf s = downsample_grid(b, w.x);
        CHECK(s.count_h == w.h);
        CHECK(s.count_d == w.d);
        CHECK(s.count_p == w.p);
        CHECK(s.count_h == 1 + (kThetaHBins - 1) / w.x);
        CHECK(s.count_p == 1 + (kPhiDBins - 1) / w.x);

        Rng rng(11);
        for (int probe = 0; probe < 50; ++probe) {
            int a = static_cast<int>(rng.below(uint64_t(s.count_h)));
            int d = static_cast<int>(rng.below(uint64_t(s.count_d)));
            int p = static_cast<int>(rng.below(uint64_t(s.count_p)));
            int ch = static_cast<int>(rng.below(3));
            CHECK(s.at(ch, a, d, p) == b.at(ch, a * w.x, d * w.x, p * w.x));
        }
    }

    CHECK_THROWS_AS(downsample_grid(b, 3), ConfigError);
    CHECK_THROWS_AS(downsample_grid(b, 0), ConfigError);
}

TEST_CASE("nearest neighbor floors the query index") {
    MeasuredBrdf b = make_random_brdf(4, "rand");
    const int x = 16;
    NnBaselineBrdf nn(downsample_grid(b, x));

    Rng rng(12);
    for (int probe = 0; probe < 200; ++probe) {
        int i = static_cast<int>(rng.below(kThetaHBins));
        int j = static_cast<int>(rng.below(kThetaDBins));
        int k = static_cast<int>(rng.below(kPhiDBins));
        Rgb got = nn.eval(cell_center_angles(i, j, k));
        Rgb want = b.rgb(cell_id((i / x) * x, (j / x) * x, (k / x) * x));
        CHECK((got - want).abs().maxCoeff() == 0.0);
    }

    // Top indices floor to the last kept sample.
    Rgb edge = nn.eval(cell_center_angles(89, 89, 179));
    Rgb want = b.rgb(cell_id(80, 80, 176));
    CHECK((edge - want).abs().maxCoeff() == 0.0);

    // Factor 1 reproduces the table bit for bit.
    NnBaselineBrdf same(downsample_grid(b, 1));
    for (int probe = 0; probe < 50; ++probe) {
        int i = static_cast<int>(rng.below(kThetaHBins));
        int j = static_cast<int>(rng.below(kThetaDBins));
        int k = static_cast<int>(rng.below(kPhiDBins));
        Rgb got = same.eval(cell_center_angles(i, j, k));
        CHECK((got - b.rgb(cell_id(i, j, k))).abs().maxCoeff() == 0.0);
    }
}

TEST_CASE("kept cell lists respect factor and validity") {
    const auto& grid = GridGeometry::instance();
    std::vector<int> all = kept_valid_cells(1);
    CHECK(all.size() == size_t(grid.valid_count()));

    std::vector<int> sparse = kept_valid_cells(16);
    CHECK(sparse.size() < 432); // 6*6*12 minus below-horizon cells
    CHECK(sparse.size() > 100);
    for (int cell : sparse) {
        CHECK(grid.valid(cell));
        int i = cell / (kThetaDBins * kPhiDBins);
        int rem = cell % (kThetaDBins * kPhiDBins);
        CHECK(i % 16 == 0);
        CHECK((rem / kPhiDBins) % 16 == 0);
        CHECK((rem % kPhiDBins) % 16 == 0);
    }
}

TEST_CASE("sparse fits never read removed cells") {
    MeasuredBrdf clean = make_lobe_brdf(LobeSpec{}, "lobe");
    MeasuredBrdf dirty = clean;
    const int x = 16;
    std::vector<int> kept = kept_valid_cells(x);
    std::vector<char> is_kept(kGridCells, 0);
    for (int cell : kept)
        is_kept[cell] = 1;
    for (int cell = 0; cell < kGridCells; ++cell)
        if (!is_kept[cell])
            for (int ch = 0; ch < 3; ++ch)
                dirty.values[size_t(ch) * kGridCells + cell] = 42.0;

    FitConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 9;
    FitResult a = nf_fit_cells(clean, kept, cfg, nf_init(std::nullopt, cfg.seed));
    FitResult b = nf_fit_cells(dirty, kept, cfg, nf_init(std::nullopt, cfg.seed));
    CHECK((a.weights.flat - b.weights.flat).norm() == 0.0);
    CHECK(a.epoch_loss == b.epoch_loss);
}

TEST_CASE("experiment report carries counts and bounded scores") {
    MeasuredBrdf b = make_lobe_brdf(LobeSpec{}, "lobe");
    FitConfig fit;
    fit.epochs = 3; // scaled to 12 by the factor rule
    fit.seed = 2;
    RenderConfig rc;
    rc.width = 64;
    rc.height = 64;

    SuperresReport rep = superres_experiment(b, 16, fit, rc);
    CHECK(rep.factor == 16);
    CHECK(rep.count_h == 6);
    CHECK(rep.count_d == 6);
    CHECK(rep.count_p == 12);
    CHECK(rep.ssim_baseline >= -1.0);
    CHECK(rep.ssim_baseline <= 1.0);
    CHECK(rep.ssim_field >= -1.0);
    CHECK(rep.ssim_field <= 1.0);
    CHECK(rep.fit_seed == 2);
    CHECK(std::isfinite(rep.field_loss));

    // Factor 1 baseline is the ground truth itself.
    FitConfig quick;
    quick.epochs = 1;
    SuperresReport same = superres_experiment(b, 1, quick, rc);
    CHECK(same.ssim_baseline == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(same.count_h == 90);

    std::string table = superres_table({same, rep});
    CHECK(table.find("factor") != std::string::npos);
    CHECK(table.find("6x  6x 12") != std::string::npos);
}
