#include "neumat/hyperdiffusion.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "neumat/optim.hpp"
#include "neumat/rng.hpp"

namespace neumat {

using Eigen::MatrixXd;
using Eigen::VectorXd;

NoiseSchedule::NoiseSchedule(Eigen::VectorXd beta) : beta_(std::move(beta)) {
    const auto T = beta_.size();
    if (T < 1)
        throw InvalidSchedule("schedule needs at least one step");
    abar_.resize(T);
    double prod = 1.0;
    double prev = 0.0;
    for (Eigen::Index i = 0; i < T; ++i) {
        double b = beta_[i];
        if (!(b > 0.0 && b < 1.0))
            throw InvalidSchedule("beta outside (0, 1)");
        if (b < prev)
            throw InvalidSchedule("beta must be nondecreasing");
        prev = b;
        prod *= 1.0 - b;
        abar_[i] = prod;
    }
}

double NoiseSchedule::beta(int t) const {
    if (t < 1 || t > steps())
        throw ConfigError("schedule step out of range");
    return beta_[t - 1];
}

double NoiseSchedule::abar(int t) const {
    if (t < 0 || t > steps())
        throw ConfigError("schedule step out of range");
    return t == 0 ? 1.0 : abar_[t - 1];
}

NoiseSchedule make_schedule(int steps) {
    if (steps < 1)
        throw InvalidSchedule("schedule needs at least one step");
    const double scale = 1000.0 / steps;
    const double lo = 1e-4 * scale, hi = 0.02 * scale;
    VectorXd beta(steps);
    for (int i = 0; i < steps; ++i) {
        double f = steps > 1 ? double(i) / (steps - 1) : 1.0;
        beta[i] = std::min(lo + f * (hi - lo), 0.999);
    }
    return NoiseSchedule(beta);
}

Eigen::VectorXd forward_marginal(const NoiseSchedule& sched,
                                 const Eigen::VectorXd& x0, int t,
                                 const Eigen::VectorXd& eps) {
    if (x0.size() != eps.size())
        throw DimensionMismatch("sample and noise sizes differ");
    if (t == 0)
        return x0;
    double ab = sched.abar(t);
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Eigen::VectorXd denoise(const DenoiserParams& params, const Eigen::VectorXd& x_t,
                        int t, const Condition& cond) {
    ParamLayout layout(params.config);
    return tf_denoise(layout, params.flat, x_t, t, cond);
}

namespace {

VectorXd draw_normal(Rng& rng, int n) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i)
        v[i] = rng.normal();
    return v;
}

} // namespace

DenoiserParams train_denoiser(const NeuMerl& dataset, const NoiseSchedule& sched,
                              const DenoiserConfig& cfg,
                              const HyperTrainConfig& tcfg) {
    if (cfg.data_dim != kFieldParamCount)
        throw DimensionMismatch("denoiser data_dim must match the field");
    if (dataset.train_indices.empty())
        throw EmptySet("no training materials");
    if (sched.steps() < 1)
        throw InvalidSchedule("schedule needs at least one step");
    if (tcfg.batch_size < 1 || tcfg.lr_start <= 0.0 || tcfg.lr_end <= 0.0)
        throw ConfigError("bad training config");

    const MatrixXd data = dataset.train_matrix();
    const int n = static_cast<int>(data.rows());
    const int dim = cfg.data_dim;

    DenoiserParams out;
    out.config = cfg;
    out.schedule = sched;
    out.norm_mean = data.colwise().mean();
    out.norm_std.resize(dim);
    for (int c = 0; c < dim; ++c) {
        double var = (data.col(c).array() - out.norm_mean[c]).square().mean();
        double sd = std::sqrt(var);
        out.norm_std[c] = sd > 1e-12 ? sd : 1.0;
    }
    MatrixXd normed = data.rowwise() - out.norm_mean.transpose();
    for (int c = 0; c < dim; ++c)
        normed.col(c) /= out.norm_std[c];

    std::vector<Condition> conds(n);
    for (int i = 0; i < n; ++i) {
        const auto& meta = dataset.meta[dataset.train_indices[i]];
        conds[i] = meta.type_id ? Condition::type(*meta.type_id) : Condition::null();
    }

    ParamLayout layout(cfg);
    out.flat = init_denoiser(cfg, tcfg.seed);
    Adam opt(layout.total, tcfg.beta1, tcfg.beta2, tcfg.adam_eps);
    Rng rng(tcfg.seed + 1);

    const int T = sched.steps();
    const int steps_per_epoch = (n + tcfg.batch_size - 1) / tcfg.batch_size;
    const long total_epochs = long(tcfg.epochs_uncond) + tcfg.epochs_cond;
    const long total_steps = total_epochs * steps_per_epoch;
    const double decay = total_steps > 1
                             ? std::pow(tcfg.lr_end / tcfg.lr_start,
                                        1.0 / double(total_steps - 1))
                             : 1.0;
    double lr = tcfg.lr_start;

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i)
        order[i] = i;

    VectorXd grad;
    std::vector<DiffusionItem> batch;
    out.loss_curve.reserve(total_epochs);
    for (long epoch = 0; epoch < total_epochs; ++epoch) {
        const bool conditional = epoch >= tcfg.epochs_uncond;
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (int start = 0; start < n; start += tcfg.batch_size) {
            int count = std::min(tcfg.batch_size, n - start);
            batch.clear();
            batch.reserve(count);
            for (int b = 0; b < count; ++b) {
                int row = order[start + b];
                DiffusionItem item;
                item.t = static_cast<int>(rng.below(T)) + 1;
                item.eps = draw_normal(rng, dim);
                item.x_t = forward_marginal(sched, normed.row(row).transpose(),
                                            item.t, item.eps);
                if (conditional) {
                    item.cond = conds[row];
                    if (item.cond.kind != Condition::Kind::Null &&
                        rng.uniform() < tcfg.cond_dropout)
                        item.cond = Condition::null();
                }
                batch.push_back(std::move(item));
            }
            double loss = tf_loss_and_grad(layout, out.flat, batch, grad);
            if (!std::isfinite(loss))
                throw NonFinite("diffusion training diverged");
            opt.step(out.flat, grad, lr);
            lr *= decay;
            epoch_loss += loss * count;
        }
        out.loss_curve.push_back(epoch_loss / n);
        if (tcfg.log_every > 0 && (epoch % tcfg.log_every == 0 ||
                                   epoch + 1 == total_epochs))
            std::fprintf(stderr, "epoch %ld/%ld (%s) loss %.6f\n", epoch + 1,
                         total_epochs, conditional ? "cond" : "uncond",
                         out.loss_curve.back());
    }
    return out;
}

Eigen::VectorXd sample_vector(const DenoiserParams& params,
                              const NoiseSchedule& sched, const Condition& cond,
                              double guidance, uint64_t seed) {
    if (guidance < -1.0)
        throw GuidanceOutOfRange("guidance weight must be >= -1");
    if (sched.steps() < 1)
        throw InvalidSchedule("schedule needs at least one step");
    ParamLayout layout(params.config);
    if (params.flat.size() != layout.total)
        throw DimensionMismatch("denoiser parameter size mismatch");
    if (params.norm_mean.size() != layout.data_dim ||
        params.norm_std.size() != layout.data_dim)
        throw DimensionMismatch("normalization size mismatch");

    // w == -1 and an absent condition both reduce to the plain
    // unconditional update; route them through the identical code path so
    // the equivalence is exact, not just within rounding. w == 0 needs only
    // the conditional branch.
    const bool single_eval =
        cond.kind == Condition::Kind::Null || guidance == -1.0 || guidance == 0.0;
    const Condition null_cond = Condition::null();
    const Condition& single = guidance == -1.0 ? null_cond : cond;

    Rng rng(seed);
    VectorXd x = draw_normal(rng, layout.data_dim);
    const int T = sched.steps();
    for (int t = T; t >= 1; --t) {
        VectorXd eps;
        if (single_eval) {
            eps = tf_denoise(layout, params.flat, x, t, single);
        } else {
            VectorXd e_c = tf_denoise(layout, params.flat, x, t, cond);
            VectorXd e_n = tf_denoise(layout, params.flat, x, t, null_cond);
            eps = (1.0 + guidance) * e_c - guidance * e_n;
        }
        double ab = sched.abar(t);
        double ab_prev = sched.abar(t - 1);
        VectorXd x0_hat = (x - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
        x = std::sqrt(ab_prev) * x0_hat + std::sqrt(1.0 - ab_prev) * eps;
    }
    return params.norm_mean.array() + params.norm_std.array() * x.array();
}

NeuralFieldWeights sample_cfg(const DenoiserParams& params,
                              const NoiseSchedule& sched, const Condition& cond,
                              double guidance, uint64_t seed) {
    if (params.config.data_dim != kFieldParamCount)
        throw DimensionMismatch("denoiser does not produce field weights");
    return NeuralFieldWeights(sample_vector(params, sched, cond, guidance, seed));
}

NeuralFieldWeights sample_uncond(const DenoiserParams& params,
                                 const NoiseSchedule& sched, uint64_t seed) {
    return sample_cfg(params, sched, Condition::null(), 0.0, seed);
}

namespace {

void put_u32(std::ofstream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}

void put_i32(std::ofstream& out, int32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}

void put_f64s(std::ofstream& out, const double* p, size_t n) {
    out.write(reinterpret_cast<const char*>(p), std::streamsize(n * 8));
}

uint32_t get_u32(std::ifstream& in) {
    uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in)
        throw Truncated("denoiser checkpoint ends early");
    return v;
}

int32_t get_i32(std::ifstream& in) {
    int32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in)
        throw Truncated("denoiser checkpoint ends early");
    return v;
}

void get_f64s(std::ifstream& in, double* p, size_t n) {
    in.read(reinterpret_cast<char*>(p), std::streamsize(n * 8));
    if (!in)
        throw Truncated("denoiser checkpoint ends early");
}

} // namespace

void write_denoiser(const std::filesystem::path& path, const DenoiserParams& p) {
    ParamLayout layout(p.config);
    if (p.flat.size() != layout.total)
        throw DimensionMismatch("denoiser parameter size mismatch");
    if (p.norm_mean.size() != layout.data_dim ||
        p.norm_std.size() != layout.data_dim)
        throw DimensionMismatch("normalization size mismatch");

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    out.write("NMDF", 4);
    put_u32(out, 1);
    const auto& c = p.config;
    for (int v : {c.data_dim, c.token_size, c.d_model, c.n_layers, c.n_heads,
                  c.ffn_mult, c.n_types, c.text_dim, c.image_dim})
        put_i32(out, v);
    put_f64s(out, p.norm_mean.data(), size_t(layout.data_dim));
    put_f64s(out, p.norm_std.data(), size_t(layout.data_dim));
    put_u32(out, uint32_t(p.schedule.steps()));
    put_f64s(out, p.schedule.betas().data(), size_t(p.schedule.steps()));
    put_u32(out, uint32_t(layout.total));
    put_f64s(out, p.flat.data(), size_t(layout.total));
    put_u32(out, uint32_t(p.loss_curve.size()));
    put_f64s(out, p.loss_curve.data(), p.loss_curve.size());
    if (!out)
        throw Error("failed writing " + path.string());
}

DenoiserParams read_denoiser(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot read " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "NMDF", 4) != 0)
        throw HeaderMismatch("not a denoiser checkpoint");
    if (get_u32(in) != 1)
        throw HeaderMismatch("unsupported checkpoint version");

    DenoiserParams p;
    auto& c = p.config;
    c.data_dim = get_i32(in);
    c.token_size = get_i32(in);
    c.d_model = get_i32(in);
    c.n_layers = get_i32(in);
    c.n_heads = get_i32(in);
    c.ffn_mult = get_i32(in);
    c.n_types = get_i32(in);
    c.text_dim = get_i32(in);
    c.image_dim = get_i32(in);
    ParamLayout layout(c); // validates the stored config

    p.norm_mean.resize(layout.data_dim);
    get_f64s(in, p.norm_mean.data(), size_t(layout.data_dim));
    p.norm_std.resize(layout.data_dim);
    get_f64s(in, p.norm_std.data(), size_t(layout.data_dim));

    uint32_t T = get_u32(in);
    if (T > 0) {
        VectorXd beta(T);
        get_f64s(in, beta.data(), T);
        p.schedule = NoiseSchedule(beta);
    }

    uint32_t count = get_u32(in);
    if (count != uint32_t(layout.total))
        throw HeaderMismatch("checkpoint parameter count mismatch");
    p.flat.resize(layout.total);
    get_f64s(in, p.flat.data(), size_t(layout.total));

    uint32_t curve = get_u32(in);
    p.loss_curve.resize(curve);
    if (curve > 0)
        get_f64s(in, p.loss_curve.data(), curve);
    return p;
}

} // namespace neumat
