#include "neumat/transformer.hpp"

#include <cmath>

#include "neumat/rng.hpp"

namespace neumat {

namespace {

constexpr double kLnEps = 1e-5;

using Eigen::MatrixXd;
using Eigen::VectorXd;

using ConstMat = Eigen::Map<const MatrixXd>;
using ConstVec = Eigen::Map<const VectorXd>;
using MutMat = Eigen::Map<MatrixXd>;
using MutVec = Eigen::Map<VectorXd>;

ConstMat cmat(const VectorXd& flat, int off, int rows, int cols) {
    return ConstMat(flat.data() + off, rows, cols);
}
ConstVec cvec(const VectorXd& flat, int off, int n) {
    return ConstVec(flat.data() + off, n);
}
MutMat mmat(VectorXd& flat, int off, int rows, int cols) {
    return MutMat(flat.data() + off, rows, cols);
}
MutVec mvec(VectorXd& flat, int off, int n) {
    return MutVec(flat.data() + off, n);
}

// Standard sinusoidal embedding of the integer step index.
VectorXd time_sinusoid(int t, int dim) {
    VectorXd s(dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * (2.0 * i / dim));
        s[2 * i] = std::sin(t * freq);
        s[2 * i + 1] = std::cos(t * freq);
    }
    return s;
}

// Per-column layer norm; returns the normalized columns and fills the
// inverse stddevs so the backward pass can reuse them.
MatrixXd layer_norm(const MatrixXd& x, ConstVec gamma, ConstVec beta,
                    MatrixXd& xhat, VectorXd& inv_std) {
    const auto cols = x.cols();
    const auto d = x.rows();
    xhat.resize(d, cols);
    inv_std.resize(cols);
    MatrixXd out(d, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        double mu = x.col(c).mean();
        double var = (x.col(c).array() - mu).square().mean();
        double istd = 1.0 / std::sqrt(var + kLnEps);
        inv_std[c] = istd;
        xhat.col(c) = (x.col(c).array() - mu) * istd;
        out.col(c) = gamma.cwiseProduct(xhat.col(c)) + beta;
    }
    return out;
}

// dL/dx given dL/dy for the column-wise layer norm above.
MatrixXd layer_norm_backward(const MatrixXd& dy, const MatrixXd& xhat,
                             const VectorXd& inv_std, ConstVec gamma,
                             MutVec g_gamma, MutVec g_beta) {
    MatrixXd dx(dy.rows(), dy.cols());
    for (Eigen::Index c = 0; c < dy.cols(); ++c) {
        g_beta += dy.col(c);
        g_gamma += dy.col(c).cwiseProduct(xhat.col(c));
        VectorXd dxh = gamma.cwiseProduct(dy.col(c));
        double m1 = dxh.mean();
        double m2 = dxh.cwiseProduct(xhat.col(c)).mean();
        dx.col(c) = inv_std[c] * (dxh.array() - m1 - xhat.col(c).array() * m2);
    }
    return dx;
}

struct BlockCache {
    MatrixXd x_in, q, k, v;
    std::vector<MatrixXd> attn; // per head, S x S, rows index queries
    MatrixXd concat;            // merged head outputs
    MatrixXd xhat1, y1, ffn_pre;
    MatrixXd xhat2, y2;
    VectorXd istd1, istd2;
};

struct ForwardCache {
    VectorXd time_sin, time_pre, time_hidden;
    MatrixXd x0; // token matrix entering the stack
    std::vector<BlockCache> blocks;
};

void check_condition(const ParamLayout& L, const Condition& cond) {
    switch (cond.kind) {
    case Condition::Kind::Null:
        return;
    case Condition::Kind::TypeId:
        if (cond.type_id < 0 || cond.type_id >= L.n_types)
            throw ConfigError("condition type id out of range");
        return;
    case Condition::Kind::Text:
        if (L.text_dim == 0)
            throw ConfigError("denoiser has no text adapter");
        if (cond.embedding.size() != L.text_dim)
            throw DimensionMismatch("text embedding size mismatch");
        return;
    case Condition::Kind::Image:
        if (L.image_dim == 0)
            throw ConfigError("denoiser has no image adapter");
        if (cond.embedding.size() != L.image_dim)
            throw DimensionMismatch("image embedding size mismatch");
        return;
    }
}

VectorXd forward(const ParamLayout& L, const VectorXd& flat, const VectorXd& x,
                 int t, const Condition& cond, ForwardCache* cache) {
    if (x.size() != L.data_dim)
        throw DimensionMismatch("denoiser input size mismatch");
    check_condition(L, cond);

    const int d = L.d_model, S = L.n_tokens, ts = L.token_size;
    auto pos = cmat(flat, L.pos, d, S);

    MatrixXd x0(d, S);

    VectorXd tsin = time_sinusoid(t, d);
    VectorXd tpre = cmat(flat, L.time_w1, d, d) * tsin + cvec(flat, L.time_b1, d);
    VectorXd thid = tpre.cwiseMax(0.0);
    x0.col(0) = cmat(flat, L.time_w2, d, d) * thid + cvec(flat, L.time_b2, d) +
                pos.col(0);

    VectorXd cvecond;
    switch (cond.kind) {
    case Condition::Kind::Null:
        cvecond = cvec(flat, L.null_vec, d);
        break;
    case Condition::Kind::TypeId:
        cvecond = cmat(flat, L.type_table, d, L.n_types).col(cond.type_id);
        break;
    case Condition::Kind::Text:
        cvecond = cmat(flat, L.text_w, d, L.text_dim) * cond.embedding;
        break;
    case Condition::Kind::Image:
        cvecond = cmat(flat, L.image_w, d, L.image_dim) * cond.embedding;
        break;
    }
    x0.col(1) = cvecond + pos.col(1);

    auto in_w = cmat(flat, L.in_w, d, ts);
    auto in_b = cvec(flat, L.in_b, d);
    VectorXd seg = VectorXd::Zero(ts);
    for (int j = 0; j < L.n_weight_tokens; ++j) {
        int lo = j * ts;
        int n = std::min(ts, L.data_dim - lo);
        seg.setZero();
        seg.head(n) = x.segment(lo, n);
        x0.col(2 + j) = in_w * seg + in_b + pos.col(2 + j);
    }

    if (cache) {
        cache->time_sin = tsin;
        cache->time_pre = tpre;
        cache->time_hidden = thid;
        cache->x0 = x0;
        cache->blocks.resize(L.n_layers);
    }

    const int H = L.n_heads, dh = L.head_dim;
    const double scale = 1.0 / std::sqrt(double(dh));
    MatrixXd xc = x0;
    for (int l = 0; l < L.n_layers; ++l) {
        const auto& B = L.blocks[l];
        BlockCache local;
        BlockCache& bc = cache ? cache->blocks[l] : local;
        bc.x_in = xc;
        bc.q = cmat(flat, B.wq, d, d) * xc;
        bc.q.colwise() += cvec(flat, B.bq, d);
        bc.k = cmat(flat, B.wk, d, d) * xc;
        bc.k.colwise() += cvec(flat, B.bk, d);
        bc.v = cmat(flat, B.wv, d, d) * xc;
        bc.v.colwise() += cvec(flat, B.bv, d);

        bc.attn.resize(H);
        bc.concat.resize(d, S);
        for (int h = 0; h < H; ++h) {
            auto qh = bc.q.middleRows(h * dh, dh);
            auto kh = bc.k.middleRows(h * dh, dh);
            auto vh = bc.v.middleRows(h * dh, dh);
            MatrixXd scores = (qh.transpose() * kh) * scale; // (query, key)
            MatrixXd& attn = bc.attn[h];
            attn.resize(S, S);
            for (int i = 0; i < S; ++i) {
                VectorXd row = scores.row(i);
                row.array() -= row.maxCoeff();
                VectorXd e = row.array().exp();
                attn.row(i) = e / e.sum();
            }
            bc.concat.middleRows(h * dh, dh) = vh * attn.transpose();
        }
        MatrixXd o = cmat(flat, B.wo, d, d) * bc.concat;
        o.colwise() += cvec(flat, B.bo, d);

        MatrixXd r1 = xc + o;
        bc.y1 = layer_norm(r1, cvec(flat, B.ln1_g, d), cvec(flat, B.ln1_b, d),
                           bc.xhat1, bc.istd1);

        bc.ffn_pre = cmat(flat, B.w1, L.ffn, d) * bc.y1;
        bc.ffn_pre.colwise() += cvec(flat, B.b1, L.ffn);
        MatrixXd hidden = bc.ffn_pre.cwiseMax(0.0);
        MatrixXd f = cmat(flat, B.w2, d, L.ffn) * hidden;
        f.colwise() += cvec(flat, B.b2, d);

        MatrixXd r2 = bc.y1 + f;
        bc.y2 = layer_norm(r2, cvec(flat, B.ln2_g, d), cvec(flat, B.ln2_b, d),
                           bc.xhat2, bc.istd2);
        xc = bc.y2;
    }

    auto out_w = cmat(flat, L.out_w, ts, d);
    auto out_b = cvec(flat, L.out_b, ts);
    VectorXd out(L.data_dim);
    for (int j = 0; j < L.n_weight_tokens; ++j) {
        VectorXd tok = out_w * xc.col(2 + j) + out_b;
        int lo = j * ts;
        int n = std::min(ts, L.data_dim - lo);
        out.segment(lo, n) = tok.head(n);
    }
    return out;
}

// Accumulates parameter gradients for one item given dL/d(output).
void backward(const ParamLayout& L, const VectorXd& flat,
              const ForwardCache& cache, const VectorXd& x,
              const Condition& cond, const VectorXd& d_out, VectorXd& grad) {
    const int d = L.d_model, S = L.n_tokens, ts = L.token_size;
    const int H = L.n_heads, dh = L.head_dim;
    const double scale = 1.0 / std::sqrt(double(dh));

    const MatrixXd& y_last =
        L.n_layers > 0 ? cache.blocks[L.n_layers - 1].y2 : cache.x0;

    MatrixXd dx = MatrixXd::Zero(d, S);
    {
        auto out_w = cmat(flat, L.out_w, ts, d);
        auto g_out_w = mmat(grad, L.out_w, ts, d);
        auto g_out_b = mvec(grad, L.out_b, ts);
        VectorXd dtok = VectorXd::Zero(ts);
        for (int j = 0; j < L.n_weight_tokens; ++j) {
            int lo = j * ts;
            int n = std::min(ts, L.data_dim - lo);
            dtok.setZero();
            dtok.head(n) = d_out.segment(lo, n);
            g_out_w += dtok * y_last.col(2 + j).transpose();
            g_out_b += dtok;
            dx.col(2 + j) += out_w.transpose() * dtok;
        }
    }

    for (int l = L.n_layers - 1; l >= 0; --l) {
        const auto& B = L.blocks[l];
        const BlockCache& bc = cache.blocks[l];

        MatrixXd dr2 = layer_norm_backward(dx, bc.xhat2, bc.istd2,
                                           cvec(flat, B.ln2_g, d),
                                           mvec(grad, B.ln2_g, d),
                                           mvec(grad, B.ln2_b, d));
        MatrixXd dy1 = dr2;

        MatrixXd hidden = bc.ffn_pre.cwiseMax(0.0);
        mmat(grad, B.w2, d, L.ffn) += dr2 * hidden.transpose();
        mvec(grad, B.b2, d) += dr2.rowwise().sum();
        MatrixXd dhid = cmat(flat, B.w2, d, L.ffn).transpose() * dr2;
        MatrixXd dpre =
            (bc.ffn_pre.array() > 0.0).select(dhid, MatrixXd::Zero(L.ffn, S));
        mmat(grad, B.w1, L.ffn, d) += dpre * bc.y1.transpose();
        mvec(grad, B.b1, L.ffn) += dpre.rowwise().sum();
        dy1 += cmat(flat, B.w1, L.ffn, d).transpose() * dpre;

        MatrixXd dr1 = layer_norm_backward(dy1, bc.xhat1, bc.istd1,
                                           cvec(flat, B.ln1_g, d),
                                           mvec(grad, B.ln1_g, d),
                                           mvec(grad, B.ln1_b, d));
        dx = dr1; // residual branch
        MatrixXd d_o = dr1;

        mmat(grad, B.wo, d, d) += d_o * bc.concat.transpose();
        mvec(grad, B.bo, d) += d_o.rowwise().sum();
        MatrixXd dconcat = cmat(flat, B.wo, d, d).transpose() * d_o;

        MatrixXd dq(d, S), dk(d, S), dv(d, S);
        for (int h = 0; h < H; ++h) {
            auto qh = bc.q.middleRows(h * dh, dh);
            auto kh = bc.k.middleRows(h * dh, dh);
            auto vh = bc.v.middleRows(h * dh, dh);
            const MatrixXd& attn = bc.attn[h];
            auto d_oh = dconcat.middleRows(h * dh, dh);

            dv.middleRows(h * dh, dh) = d_oh * attn;
            MatrixXd dattn = d_oh.transpose() * vh; // (query, key)
            MatrixXd dscores(S, S);
            for (int i = 0; i < S; ++i) {
                double dot = dattn.row(i).dot(attn.row(i));
                dscores.row(i) = attn.row(i).cwiseProduct(
                    (dattn.row(i).array() - dot).matrix());
            }
            dscores *= scale;
            dq.middleRows(h * dh, dh) = kh * dscores.transpose();
            dk.middleRows(h * dh, dh) = qh * dscores;
        }

        mmat(grad, B.wq, d, d) += dq * bc.x_in.transpose();
        mvec(grad, B.bq, d) += dq.rowwise().sum();
        mmat(grad, B.wk, d, d) += dk * bc.x_in.transpose();
        mvec(grad, B.bk, d) += dk.rowwise().sum();
        mmat(grad, B.wv, d, d) += dv * bc.x_in.transpose();
        mvec(grad, B.bv, d) += dv.rowwise().sum();

        dx += cmat(flat, B.wq, d, d).transpose() * dq;
        dx += cmat(flat, B.wk, d, d).transpose() * dk;
        dx += cmat(flat, B.wv, d, d).transpose() * dv;
    }

    mmat(grad, L.pos, d, S) += dx;

    {
        VectorXd dt = dx.col(0);
        mmat(grad, L.time_w2, d, d) += dt * cache.time_hidden.transpose();
        mvec(grad, L.time_b2, d) += dt;
        VectorXd dhid = cmat(flat, L.time_w2, d, d).transpose() * dt;
        VectorXd dpre = (cache.time_pre.array() > 0.0)
                            .select(dhid, VectorXd::Zero(d));
        mmat(grad, L.time_w1, d, d) += dpre * cache.time_sin.transpose();
        mvec(grad, L.time_b1, d) += dpre;
    }

    {
        VectorXd dc = dx.col(1);
        switch (cond.kind) {
        case Condition::Kind::Null:
            mvec(grad, L.null_vec, d) += dc;
            break;
        case Condition::Kind::TypeId:
            mmat(grad, L.type_table, d, L.n_types).col(cond.type_id) += dc;
            break;
        case Condition::Kind::Text:
            mmat(grad, L.text_w, d, L.text_dim) += dc * cond.embedding.transpose();
            break;
        case Condition::Kind::Image:
            mmat(grad, L.image_w, d, L.image_dim) +=
                dc * cond.embedding.transpose();
            break;
        }
    }

    {
        auto g_in_w = mmat(grad, L.in_w, d, ts);
        auto g_in_b = mvec(grad, L.in_b, d);
        VectorXd seg = VectorXd::Zero(ts);
        for (int j = 0; j < L.n_weight_tokens; ++j) {
            int lo = j * ts;
            int n = std::min(ts, L.data_dim - lo);
            seg.setZero();
            seg.head(n) = x.segment(lo, n);
            g_in_w += dx.col(2 + j) * seg.transpose();
            g_in_b += dx.col(2 + j);
        }
    }
}

void glorot(MutMat m, Rng& rng, int fan_in, int fan_out) {
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            m(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
}

void gaussian(MutMat m, Rng& rng, double stddev) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            m(r, c) = rng.normal() * stddev;
}

} // namespace

ParamLayout::ParamLayout(const DenoiserConfig& cfg) {
    if (cfg.data_dim < 1 || cfg.token_size < 1 || cfg.d_model < 2 ||
        cfg.n_layers < 1 || cfg.n_heads < 1 || cfg.ffn_mult < 1 ||
        cfg.n_types < 1 || cfg.text_dim < 0 || cfg.image_dim < 0)
        throw ConfigError("bad denoiser config");
    if (cfg.d_model % cfg.n_heads != 0)
        throw ConfigError("d_model must be divisible by n_heads");
    if (cfg.d_model % 2 != 0)
        throw ConfigError("d_model must be even");

    data_dim = cfg.data_dim;
    token_size = cfg.token_size;
    d_model = cfg.d_model;
    n_layers = cfg.n_layers;
    n_heads = cfg.n_heads;
    ffn = cfg.ffn_mult * cfg.d_model;
    n_types = cfg.n_types;
    text_dim = cfg.text_dim;
    image_dim = cfg.image_dim;
    n_weight_tokens = (data_dim + token_size - 1) / token_size;
    n_tokens = 2 + n_weight_tokens;
    head_dim = d_model / n_heads;

    int off = 0;
    auto take = [&off](int n) {
        int at = off;
        off += n;
        return at;
    };
    const int d = d_model;
    in_w = take(d * token_size);
    in_b = take(d);
    pos = take(d * n_tokens);
    time_w1 = take(d * d);
    time_b1 = take(d);
    time_w2 = take(d * d);
    time_b2 = take(d);
    type_table = take(d * n_types);
    null_vec = take(d);
    text_w = take(d * text_dim);
    image_w = take(d * image_dim);
    blocks.resize(n_layers);
    for (auto& b : blocks) {
        b.wq = take(d * d);
        b.bq = take(d);
        b.wk = take(d * d);
        b.bk = take(d);
        b.wv = take(d * d);
        b.bv = take(d);
        b.wo = take(d * d);
        b.bo = take(d);
        b.ln1_g = take(d);
        b.ln1_b = take(d);
        b.w1 = take(ffn * d);
        b.b1 = take(ffn);
        b.w2 = take(d * ffn);
        b.b2 = take(d);
        b.ln2_g = take(d);
        b.ln2_b = take(d);
    }
    out_w = take(token_size * d);
    out_b = take(token_size);
    total = off;
}

int denoiser_param_count(const DenoiserConfig& cfg) {
    return ParamLayout(cfg).total;
}

Eigen::VectorXd init_denoiser(const DenoiserConfig& cfg, uint64_t seed) {
    ParamLayout L(cfg);
    VectorXd flat = VectorXd::Zero(L.total);
    Rng rng(seed);
    const int d = L.d_model;

    glorot(mmat(flat, L.in_w, d, L.token_size), rng, L.token_size, d);
    gaussian(mmat(flat, L.pos, d, L.n_tokens), rng, 0.02);
    glorot(mmat(flat, L.time_w1, d, d), rng, d, d);
    glorot(mmat(flat, L.time_w2, d, d), rng, d, d);
    gaussian(mmat(flat, L.type_table, d, L.n_types), rng, 0.02);
    if (L.text_dim > 0)
        glorot(mmat(flat, L.text_w, d, L.text_dim), rng, L.text_dim, d);
    if (L.image_dim > 0)
        glorot(mmat(flat, L.image_w, d, L.image_dim), rng, L.image_dim, d);
    for (const auto& b : L.blocks) {
        glorot(mmat(flat, b.wq, d, d), rng, d, d);
        glorot(mmat(flat, b.wk, d, d), rng, d, d);
        glorot(mmat(flat, b.wv, d, d), rng, d, d);
        glorot(mmat(flat, b.wo, d, d), rng, d, d);
        mvec(flat, b.ln1_g, d).setOnes();
        mvec(flat, b.ln2_g, d).setOnes();
        glorot(mmat(flat, b.w1, L.ffn, d), rng, d, L.ffn);
        glorot(mmat(flat, b.w2, d, L.ffn), rng, L.ffn, d);
    }
    // out_w / out_b stay zero: a fresh denoiser predicts zero noise.
    return flat;
}

Eigen::VectorXd tf_denoise(const ParamLayout& layout, const Eigen::VectorXd& flat,
                           const Eigen::VectorXd& x, int t,
                           const Condition& cond) {
    if (flat.size() != layout.total)
        throw DimensionMismatch("denoiser parameter size mismatch");
    return forward(layout, flat, x, t, cond, nullptr);
}

double tf_loss_and_grad(const ParamLayout& layout, const Eigen::VectorXd& flat,
                        const std::vector<DiffusionItem>& batch,
                        Eigen::VectorXd& grad) {
    if (flat.size() != layout.total)
        throw DimensionMismatch("denoiser parameter size mismatch");
    if (batch.empty())
        throw EmptySet("empty training batch");
    grad = VectorXd::Zero(layout.total);
    const double denom = double(batch.size()) * layout.data_dim;
    double loss = 0.0;
    for (const auto& item : batch) {
        ForwardCache cache;
        VectorXd pred = forward(layout, flat, item.x_t, item.t, item.cond, &cache);
        VectorXd resid = pred - item.eps;
        loss += resid.squaredNorm();
        VectorXd d_out = (2.0 / denom) * resid;
        backward(layout, flat, cache, item.x_t, item.cond, d_out, grad);
    }
    return loss / denom;
}

} // namespace neumat
