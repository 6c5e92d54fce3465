#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "neumat/hyperdiffusion.hpp"
#include "neumat/rng.hpp"

using namespace neumat;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

DenoiserConfig tiny_config() {
    DenoiserConfig cfg;
    cfg.data_dim = 7; // forces one zero-padded token
    cfg.token_size = 3;
    cfg.d_model = 8;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.ffn_mult = 2;
    cfg.n_types = 3;
    cfg.text_dim = 2;
    cfg.image_dim = 2;
    return cfg;
}

VectorXd normals(Rng& rng, int n) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i)
        v[i] = rng.normal();
    return v;
}

// Initialization plus a small dense perturbation so the output projection
// is nonzero and gradients reach every layer.
VectorXd perturbed_params(const DenoiserConfig& cfg, uint64_t seed) {
    VectorXd flat = init_denoiser(cfg, seed);
    Rng rng(seed + 100);
    for (Eigen::Index i = 0; i < flat.size(); ++i)
        flat[i] += 0.05 * rng.normal();
    return flat;
}

double forward_only_loss(const ParamLayout& layout, const VectorXd& flat,
                         const std::vector<DiffusionItem>& batch) {
    double loss = 0.0;
    for (const auto& item : batch)
        loss += (tf_denoise(layout, flat, item.x_t, item.t, item.cond) - item.eps)
                    .squaredNorm();
    return loss / (double(batch.size()) * layout.data_dim);
}

} // namespace

TEST_CASE("noise schedule accumulates the signal fraction") {
    VectorXd beta(1);
    beta[0] = 0.02;
    NoiseSchedule one(beta);
    CHECK(one.steps() == 1);
    CHECK(one.abar(0) == 1.0);
    CHECK(one.abar(1) == 1.0 - 0.02);
    CHECK(one.beta(1) == 0.02);

    VectorXd b3(3);
    b3 << 0.1, 0.2, 0.2;
    NoiseSchedule s3(b3);
    CHECK(s3.abar(1) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s3.abar(2) == doctest::Approx(0.72).epsilon(1e-15));
    CHECK(s3.abar(3) == doctest::Approx(0.576).epsilon(1e-15));
}

TEST_CASE("default schedule ends below one percent signal") {
    NoiseSchedule s = make_schedule(100);
    REQUIRE(s.steps() == 100);
    double prod = 1.0;
    for (int t = 100; t >= 1; --t) // reverse order: independent accumulation
        prod *= 1.0 - s.beta(t);
    CHECK(s.abar(100) == doctest::Approx(prod).epsilon(1e-12));
    CHECK(s.abar(100) < 0.01);
    for (int t = 1; t <= 100; ++t) {
        CHECK(s.beta(t) > 0.0);
        CHECK(s.beta(t) < 1.0);
        if (t > 1)
            CHECK(s.beta(t) >= s.beta(t - 1));
        CHECK(s.abar(t) < s.abar(t - 1));
    }

    // At a thousand steps the ramp is the classic 1e-4..0.02.
    NoiseSchedule ref = make_schedule(1000);
    CHECK(ref.beta(1) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(ref.beta(1000) == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(ref.abar(1000) < 0.01);

    // Very short schedules stay valid thanks to the beta cap.
    for (int T : {1, 2, 5, 20})
        CHECK(make_schedule(T).abar(T) < 0.01);
}

TEST_CASE("schedule rejects malformed betas") {
    CHECK_THROWS_AS(NoiseSchedule{VectorXd{}}, InvalidSchedule);
    VectorXd zero(1);
    zero[0] = 0.0;
    CHECK_THROWS_AS(NoiseSchedule{zero}, InvalidSchedule);
    VectorXd one(1);
    one[0] = 1.0;
    CHECK_THROWS_AS(NoiseSchedule{one}, InvalidSchedule);
    VectorXd dec(2);
    dec << 0.3, 0.2;
    CHECK_THROWS_AS(NoiseSchedule{dec}, InvalidSchedule);
    CHECK_THROWS_AS(make_schedule(0), InvalidSchedule);

    NoiseSchedule s = make_schedule(10);
    CHECK_THROWS_AS(s.abar(-1), ConfigError);
    CHECK_THROWS_AS(s.abar(11), ConfigError);
    CHECK_THROWS_AS(s.beta(0), ConfigError);
}

TEST_CASE("forward marginal blends signal and noise") {
    VectorXd b2(2);
    b2 << 0.1, 0.2;
    NoiseSchedule s(b2);
    Rng rng(11);
    VectorXd x0 = normals(rng, 5);
    VectorXd eps = normals(rng, 5);

    VectorXd same = forward_marginal(s, x0, 0, eps);
    CHECK((same - x0).norm() == 0.0);

    VectorXd x2 = forward_marginal(s, x0, 2, eps);
    double ab = 0.9 * 0.8;
    for (int i = 0; i < 5; ++i)
        CHECK(x2[i] == doctest::Approx(std::sqrt(ab) * x0[i] +
                                       std::sqrt(1.0 - ab) * eps[i])
                           .epsilon(1e-15));

    VectorXd zero = VectorXd::Zero(5);
    VectorXd pure = forward_marginal(s, zero, 1, eps);
    // 1 - (1 - 0.1) is not exactly 0.1 in binary, hence the tolerance
    CHECK((pure - std::sqrt(0.1) * eps).norm() < 1e-15);

    CHECK_THROWS_AS(forward_marginal(s, x0, 1, VectorXd::Zero(4)),
                    DimensionMismatch);
}

TEST_CASE("stepwise chain agrees with the closed-form marginal") {
    // Composing the per-step kernel x_t = sqrt(1-b_t) x_{t-1} + sqrt(b_t) xi
    // must reproduce the marginal N(sqrt(abar) x0, (1-abar) I).
    NoiseSchedule s = make_schedule(100);
    const int dim = 4, n = 4000;
    VectorXd x0(dim);
    x0 << 1.5, -0.7, 0.3, 2.0;
    Rng rng(2024);

    for (int t : {1, 50, 100}) {
        MatrixXd sum = MatrixXd::Zero(dim, 2); // col 0: sum, col 1: sum sq
        for (int draw = 0; draw < n; ++draw) {
            VectorXd x = x0;
            for (int step = 1; step <= t; ++step) {
                double b = s.beta(step);
                for (int c = 0; c < dim; ++c)
                    x[c] = std::sqrt(1.0 - b) * x[c] +
                           std::sqrt(b) * rng.normal();
            }
            sum.col(0) += x;
            sum.col(1) += x.cwiseProduct(x);
        }
        double ab = s.abar(t);
        double var = 1.0 - ab;
        double mean_sd = std::sqrt(var / n);
        double var_sd = var * std::sqrt(2.0 / (n - 1));
        for (int c = 0; c < dim; ++c) {
            double mean = sum(c, 0) / n;
            double sample_var = sum(c, 1) / n - mean * mean;
            CHECK(std::abs(mean - std::sqrt(ab) * x0[c]) < 3.0 * mean_sd);
            CHECK(std::abs(sample_var - var) < 3.0 * var_sd + 1e-12);
        }
    }
}

TEST_CASE("parameter layout covers every tensor exactly once") {
    DenoiserConfig cfg = tiny_config();
    ParamLayout L(cfg);
    CHECK(L.n_weight_tokens == 3);
    CHECK(L.n_tokens == 5);
    CHECK(L.head_dim == 4);

    const int d = 8, ts = 3, S = 5, ffn = 16, types = 3;
    int expected = d * ts + d;            // input projection
    expected += d * S;                    // positions
    expected += 2 * (d * d + d);          // time MLP
    expected += d * types + d;            // type table + null vector
    expected += d * 2 + d * 2;            // text and image adapters
    expected += 2 * (4 * (d * d + d)     // attention
                     + 2 * d             // LN1
                     + ffn * d + ffn     // FFN in
                     + d * ffn + d       // FFN out
                     + 2 * d);           // LN2
    expected += ts * d + ts;              // output projection
    CHECK(L.total == expected);
    CHECK(denoiser_param_count(cfg) == expected);

    DenoiserConfig full; // the production shape
    ParamLayout fl(full);
    CHECK(fl.n_weight_tokens == 25);
    CHECK(fl.n_tokens == 27);

    DenoiserConfig odd = cfg;
    odd.d_model = 9;
    CHECK_THROWS_AS(ParamLayout{odd}, ConfigError);
    DenoiserConfig heads = cfg;
    heads.n_heads = 3;
    CHECK_THROWS_AS(ParamLayout{heads}, ConfigError);
    DenoiserConfig toks = cfg;
    toks.token_size = 0;
    CHECK_THROWS_AS(ParamLayout{toks}, ConfigError);
}

TEST_CASE("fresh denoiser predicts zero noise") {
    DenoiserConfig cfg = tiny_config();
    ParamLayout L(cfg);
    VectorXd flat = init_denoiser(cfg, 3);
    Rng rng(4);
    VectorXd x = normals(rng, cfg.data_dim);
    VectorXd emb(2);
    emb << 0.4, -1.1;
    for (const Condition& cond :
         {Condition::null(), Condition::type(1), Condition::text(emb),
          Condition::image(emb)})
        for (int t : {1, 50})
            CHECK(tf_denoise(L, flat, x, t, cond).norm() == 0.0);
}

TEST_CASE("denoiser is a pure function of its inputs") {
    DenoiserConfig cfg = tiny_config();
    ParamLayout L(cfg);
    VectorXd flat = perturbed_params(cfg, 9);
    Rng rng(10);
    VectorXd x = normals(rng, cfg.data_dim);

    VectorXd a = tf_denoise(L, flat, x, 7, Condition::type(2));
    VectorXd b = tf_denoise(L, flat, x, 7, Condition::type(2));
    CHECK((a - b).norm() == 0.0);
    CHECK(a.allFinite());
    CHECK(a.norm() > 0.0);

    // Other inputs actually change the answer.
    CHECK((a - tf_denoise(L, flat, x, 8, Condition::type(2))).norm() > 0.0);
    CHECK((a - tf_denoise(L, flat, x, 7, Condition::type(0))).norm() > 0.0);
    CHECK((a - tf_denoise(L, flat, x, 7, Condition::null())).norm() > 0.0);

    CHECK((init_denoiser(cfg, 5) - init_denoiser(cfg, 5)).norm() == 0.0);
    CHECK((init_denoiser(cfg, 5) - init_denoiser(cfg, 6)).norm() > 0.0);

    CHECK_THROWS_AS(tf_denoise(L, flat, VectorXd::Zero(6), 1, Condition::null()),
                    DimensionMismatch);
    CHECK_THROWS_AS(tf_denoise(L, flat, x, 1, Condition::type(3)), ConfigError);
    CHECK_THROWS_AS(tf_denoise(L, flat, x, 1, Condition::text(VectorXd::Zero(5))),
                    DimensionMismatch);
}

TEST_CASE("analytic gradient matches finite differences") {
    DenoiserConfig cfg = tiny_config();
    ParamLayout L(cfg);
    VectorXd flat = perturbed_params(cfg, 21);

    Rng rng(22);
    VectorXd emb_t(2), emb_i(2);
    emb_t << 0.3, -0.8;
    emb_i << 1.2, 0.4;
    std::vector<DiffusionItem> batch(4);
    const Condition conds[4] = {Condition::null(), Condition::type(2),
                                Condition::text(emb_t), Condition::image(emb_i)};
    const int ts[4] = {1, 3, 7, 50};
    for (int i = 0; i < 4; ++i) {
        batch[i].x_t = normals(rng, cfg.data_dim);
        batch[i].eps = normals(rng, cfg.data_dim);
        batch[i].t = ts[i];
        batch[i].cond = conds[i];
    }

    VectorXd grad;
    double loss = tf_loss_and_grad(L, flat, batch, grad);
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(forward_only_loss(L, flat, batch))
                      .epsilon(1e-12));

    // Probe a stride sample plus the first entry of every named tensor.
    std::vector<int> probes;
    for (int i = 0; i < L.total; i += 13)
        probes.push_back(i);
    for (int off : {L.in_w, L.in_b, L.pos, L.time_w1, L.time_b1, L.time_w2,
                    L.time_b2, L.type_table, L.null_vec, L.text_w, L.image_w,
                    L.out_w, L.out_b})
        probes.push_back(off);
    for (const auto& blk : L.blocks)
        for (int off : {blk.wq, blk.bq, blk.wk, blk.wv, blk.wo, blk.ln1_g,
                        blk.ln1_b, blk.w1, blk.b1, blk.w2, blk.b2, blk.ln2_g,
                        blk.ln2_b})
            probes.push_back(off);

    const double h = 1e-5;
    double worst = 0.0;
    for (int i : probes) {
        VectorXd bumped = flat;
        bumped[i] = flat[i] + h;
        double up = forward_only_loss(L, bumped, batch);
        bumped[i] = flat[i] - h;
        double down = forward_only_loss(L, bumped, batch);
        double fd = (up - down) / (2.0 * h);
        double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-7});
        worst = std::max(worst, std::abs(fd - grad[i]) / denom);
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("training reduces the loss and is reproducible") {
    Rng rng(31);
    NeuMerl data;
    for (int m = 0; m < 8; ++m) {
        VectorXd w = 0.3 * normals(rng, kFieldParamCount);
        w.array() += 0.1 * m;
        data.weights.emplace_back(w);
        MaterialMeta meta;
        meta.name = "m" + std::to_string(m);
        if (m % 2 == 0)
            meta.type_id = m % 4;
        data.meta.push_back(meta);
        data.train_indices.push_back(m);
    }

    DenoiserConfig cfg;
    cfg.data_dim = kFieldParamCount;
    cfg.token_size = 135;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.ffn_mult = 2;

    NoiseSchedule sched = make_schedule(10);
    HyperTrainConfig tcfg;
    tcfg.epochs_uncond = 30;
    tcfg.epochs_cond = 10;
    tcfg.batch_size = 8;
    tcfg.lr_start = 1e-3;
    tcfg.lr_end = 1e-4;
    tcfg.seed = 5;

    DenoiserParams p = train_denoiser(data, sched, cfg, tcfg);
    REQUIRE(p.loss_curve.size() == 40);
    for (double l : p.loss_curve)
        CHECK(std::isfinite(l));
    double tail = 0.0;
    for (size_t i = 35; i < 40; ++i)
        tail += p.loss_curve[i];
    CHECK(tail / 5.0 < p.loss_curve.front());
    CHECK(p.norm_mean.size() == kFieldParamCount);
    CHECK((p.norm_std.array() > 0.0).all());

    DenoiserParams q = train_denoiser(data, sched, cfg, tcfg);
    CHECK((p.flat - q.flat).norm() == 0.0);
    CHECK(p.loss_curve == q.loss_curve);

    NeuMerl empty;
    CHECK_THROWS_AS(train_denoiser(empty, sched, cfg, tcfg), EmptySet);
    DenoiserConfig wrong = cfg;
    wrong.data_dim = 7;
    CHECK_THROWS_AS(train_denoiser(data, sched, wrong, tcfg),
                    DimensionMismatch);
}

TEST_CASE("guided sampling short-circuits cleanly") {
    DenoiserConfig cfg = tiny_config();
    DenoiserParams p;
    p.config = cfg;
    p.flat = perturbed_params(cfg, 41);
    Rng rng(42);
    p.norm_mean = normals(rng, cfg.data_dim);
    p.norm_std = normals(rng, cfg.data_dim).array().abs() + 0.5;
    NoiseSchedule sched = make_schedule(20);

    Condition cond = Condition::type(1);
    for (uint64_t seed : {1u, 2u, 3u}) {
        VectorXd neg = sample_vector(p, sched, cond, -1.0, seed);
        VectorXd null = sample_vector(p, sched, Condition::null(), 0.0, seed);
        CHECK((neg - null).norm() == 0.0);
    }

    VectorXd plain = sample_vector(p, sched, cond, 0.0, 7);
    VectorXd uncond = sample_vector(p, sched, Condition::null(), 0.0, 7);
    VectorXd pushed = sample_vector(p, sched, cond, 2.0, 7);
    CHECK((plain - uncond).norm() > 0.0);   // conditioning has an effect
    CHECK((pushed - plain).norm() > 0.0);   // and so does guidance
    CHECK(pushed.allFinite());

    CHECK((sample_vector(p, sched, cond, 2.0, 7) - pushed).norm() == 0.0);
    CHECK((sample_vector(p, sched, cond, 2.0, 8) - pushed).norm() > 0.0);

    CHECK_THROWS_AS(sample_vector(p, sched, cond, -1.5, 1),
                    GuidanceOutOfRange);
}

TEST_CASE("zero denoiser unrolls to the scaled prior draw") {
    DenoiserConfig cfg = tiny_config();
    DenoiserParams p;
    p.config = cfg;
    p.flat = init_denoiser(cfg, 50); // output projection is zero
    p.norm_mean = VectorXd::LinSpaced(cfg.data_dim, -1.0, 2.0);
    p.norm_std = VectorXd::LinSpaced(cfg.data_dim, 0.5, 3.0);
    NoiseSchedule sched = make_schedule(100);

    uint64_t seed = 77;
    VectorXd got = sample_vector(p, sched, Condition::type(0), 1.5, seed);

    Rng rng(seed);
    VectorXd z(cfg.data_dim);
    for (int i = 0; i < cfg.data_dim; ++i)
        z[i] = rng.normal();
    VectorXd expect = p.norm_mean.array() +
                      p.norm_std.array() * (z / std::sqrt(sched.abar(100))).array();
    for (int i = 0; i < cfg.data_dim; ++i)
        CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-10));
}

TEST_CASE("sampling at production size yields field weights") {
    DenoiserConfig cfg;
    cfg.data_dim = kFieldParamCount;
    cfg.token_size = 135;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.ffn_mult = 2;
    DenoiserParams p;
    p.config = cfg;
    p.flat = init_denoiser(cfg, 60);
    p.norm_mean = VectorXd::Zero(kFieldParamCount);
    p.norm_std = VectorXd::Ones(kFieldParamCount);
    NoiseSchedule sched = make_schedule(5);

    NeuralFieldWeights w = sample_uncond(p, sched, 9);
    NeuralFieldWeights v = sample_cfg(p, sched, Condition::null(), 0.0, 9);
    CHECK((w.flat - v.flat).norm() == 0.0);
    CHECK(w.flat.size() == kFieldParamCount);

    DenoiserParams tiny;
    tiny.config = tiny_config();
    tiny.flat = init_denoiser(tiny.config, 61);
    tiny.norm_mean = VectorXd::Zero(7);
    tiny.norm_std = VectorXd::Ones(7);
    CHECK_THROWS_AS(sample_cfg(tiny, sched, Condition::null(), 0.0, 1),
                    DimensionMismatch);
}

TEST_CASE("checkpoints round trip bitwise") {
    DenoiserConfig cfg = tiny_config();
    DenoiserParams p;
    p.config = cfg;
    p.flat = perturbed_params(cfg, 70);
    Rng rng(71);
    p.norm_mean = normals(rng, cfg.data_dim);
    p.norm_std = normals(rng, cfg.data_dim).array().abs() + 0.1;
    p.schedule = make_schedule(7);
    p.loss_curve = {0.5, 0.41, 0.33};

    auto dir = std::filesystem::temp_directory_path() / "neumat_nmdf_test";
    std::filesystem::create_directories(dir);
    auto path = dir / "model.nmdf";
    write_denoiser(path, p);

    DenoiserParams q = read_denoiser(path);
    CHECK(q.config.data_dim == cfg.data_dim);
    CHECK(q.config.token_size == cfg.token_size);
    CHECK(q.config.d_model == cfg.d_model);
    CHECK(q.config.n_layers == cfg.n_layers);
    CHECK(q.config.n_heads == cfg.n_heads);
    CHECK(q.config.ffn_mult == cfg.ffn_mult);
    CHECK(q.config.n_types == cfg.n_types);
    CHECK(q.config.text_dim == cfg.text_dim);
    CHECK(q.config.image_dim == cfg.image_dim);
    CHECK((q.flat - p.flat).norm() == 0.0);
    CHECK((q.norm_mean - p.norm_mean).norm() == 0.0);
    CHECK((q.norm_std - p.norm_std).norm() == 0.0);
    CHECK((q.schedule.betas() - p.schedule.betas()).norm() == 0.0);
    CHECK(q.loss_curve == p.loss_curve);

    // A reloaded model behaves identically.
    NoiseSchedule sched = make_schedule(6);
    VectorXd a = sample_vector(p, sched, Condition::type(1), 0.5, 3);
    VectorXd b = sample_vector(q, sched, Condition::type(1), 0.5, 3);
    CHECK((a - b).norm() == 0.0);

    auto bad = dir / "bad.nmdf";
    {
        std::ofstream out(bad, std::ios::binary);
        out.write("NOPE", 4);
    }
    CHECK_THROWS_AS(read_denoiser(bad), HeaderMismatch);

    std::filesystem::resize_file(path, 40);
    CHECK_THROWS_AS(read_denoiser(path), Truncated);

    std::filesystem::remove_all(dir);
}
