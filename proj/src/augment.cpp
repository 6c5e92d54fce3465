#include "neumat/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

#include <Eigen/Eigenvalues>

#include "neumat/rng.hpp"

namespace neumat {

namespace {

constexpr Eigen::Index kChunkRows = 32768;

// log(1 + f) tabulation as a cells x 3 column block
Eigen::MatrixXd log_planes(const MeasuredBrdf& b) {
    Eigen::Map<const Eigen::MatrixXd> v(b.values.data(), kGridCells, 3);
    return v.array().log1p();
}

// planes^T * planes accumulated in double
Eigen::MatrixXd plane_gram(const Eigen::MatrixXf& planes) {
    Eigen::MatrixXd acc =
        Eigen::MatrixXd::Zero(planes.cols(), planes.cols());
    Eigen::MatrixXd buf;
    for (Eigen::Index r0 = 0; r0 < planes.rows(); r0 += kChunkRows) {
        Eigen::Index len = std::min(kChunkRows, planes.rows() - r0);
        buf = planes.middleRows(r0, len).cast<double>();
        acc.noalias() += buf.transpose() * buf;
    }
    return acc;
}

// planes^T * x accumulated in double
Eigen::MatrixXd plane_dots(const Eigen::MatrixXf& planes,
                           const Eigen::Ref<const Eigen::MatrixXd>& x) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(planes.cols(), x.cols());
    Eigen::MatrixXd buf;
    for (Eigen::Index r0 = 0; r0 < planes.rows(); r0 += kChunkRows) {
        Eigen::Index len = std::min(kChunkRows, planes.rows() - r0);
        buf = planes.middleRows(r0, len).cast<double>();
        acc.noalias() += buf.transpose() * x.middleRows(r0, len);
    }
    return acc;
}

// Descending eigenpairs of a symmetric matrix, eigenvalues clamped at 0.
void eigh_descending(const Eigen::MatrixXd& sym, Eigen::VectorXd& values,
                     Eigen::MatrixXd& vectors) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success)
        throw NonFinite("eigendecomposition failed");
    const Eigen::Index n = sym.rows();
    values.resize(n);
    vectors.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        values[i] = std::max(0.0, es.eigenvalues()[n - 1 - i]);
        vectors.col(i) = es.eigenvectors().col(n - 1 - i);
    }
}

} // namespace

struct PcaModel::PlaneBasis {
    Eigen::MatrixXf planes;                        // cells x (3 * n_base)
    Eigen::Matrix<int, Eigen::Dynamic, 3> samples; // plane id per output slot
    Eigen::MatrixXd mean_w;                        // plane weights of the mean
    Eigen::MatrixXd dual;                          // samples x k
    Eigen::VectorXd rowmean_raw;
    double grand_raw = 0.0;
};

MeasuredBrdf apply_rgb_permutation(const MeasuredBrdf& b, int perm) {
    if (perm < 0 || perm >= 6)
        throw ConfigError("permutation index out of range");
    MeasuredBrdf out;
    out.name = perm == 0 ? b.name
                         : b.name + "-" + kRgbPermutationNames[perm];
    out.type_id = b.type_id;
    const auto& p = kRgbPermutations[perm];
    for (int s = 0; s < 3; ++s)
        std::copy_n(b.values.begin() +
                        static_cast<size_t>(p[s]) * kGridCells,
                    kGridCells,
                    out.values.begin() + static_cast<size_t>(s) * kGridCells);
    return out;
}

std::vector<MeasuredBrdf> rgb_permutations(const MeasuredBrdf& b) {
    std::vector<MeasuredBrdf> out;
    out.reserve(6);
    for (int p = 0; p < 6; ++p) out.push_back(apply_rgb_permutation(b, p));
    return out;
}

// ---- PcaModel ----

void PcaModel::require_fitted() const {
    if (!fitted()) throw ConfigError("PCA model not fitted");
}

bool PcaModel::material_space() const {
    return basis_ != nullptr ||
           (fitted() && mean_.size() == 3 * static_cast<Eigen::Index>(kGridCells));
}

Eigen::Index PcaModel::dim() const {
    require_fitted();
    return basis_ ? 3 * static_cast<Eigen::Index>(kGridCells) : mean_.size();
}

PcaModel PcaModel::fit(const Eigen::MatrixXd& data, int k) {
    const Eigen::Index n = data.rows();
    const Eigen::Index d = data.cols();
    if (n < 2) throw RankDeficient("need at least two samples");
    if (k < 1 || k > std::min<Eigen::Index>(n - 1, d))
        throw RankDeficient("component count must satisfy 1 <= k <= min(n-1, D)");

    PcaModel m;
    m.k_ = k;
    m.mean_ = data.colwise().mean().transpose();
    Eigen::MatrixXd xc = data.rowwise() - m.mean_.transpose();
    double spread = xc.cwiseAbs().maxCoeff();
    if (spread <= 1e-12 * std::max(1.0, m.mean_.cwiseAbs().maxCoeff()))
        throw RankDeficient("all samples identical");

    Eigen::VectorXd lambda;
    Eigen::MatrixXd vecs;
    m.comps_.resize(k, d);
    m.vars_.resize(k);
    if (d <= 4096) {
        // covariance route: the full orthonormal basis exists, so
        // zero-variance directions are fine
        eigh_descending(xc.transpose() * xc / double(n - 1), lambda, vecs);
        for (int i = 0; i < k; ++i) {
            m.vars_[i] = lambda[i];
            m.comps_.row(i) = vecs.col(i).transpose();
        }
    } else {
        // Gram route: components come from the data span, so k must stay
        // within the effective rank
        eigh_descending(xc * xc.transpose(), lambda, vecs);
        Eigen::Index rank = 0;
        for (Eigen::Index i = 0; i < n; ++i)
            if (lambda[i] > lambda[0] * 1e-10) ++rank;
        if (k > rank)
            throw RankDeficient("component count exceeds effective rank " +
                                std::to_string(rank));
        for (int i = 0; i < k; ++i) {
            m.vars_[i] = lambda[i] / double(n - 1);
            m.comps_.row(i) =
                (xc.transpose() * vecs.col(i)).transpose() / std::sqrt(lambda[i]);
        }
    }

    m.train_proj_ = xc * m.comps_.transpose();
    for (int i = 0; i < k; ++i) {
        // canonical sign: strongest training projection positive; for
        // zero-variance directions, first significant basis entry positive
        Eigen::Index a = 0;
        double v = m.train_proj_.col(i).cwiseAbs().maxCoeff(&a);
        double s = 0.0;
        if (v > 1e-12 * (1.0 + std::sqrt(m.vars_[i] * double(n)))) {
            s = m.train_proj_(a, i);
        } else {
            for (Eigen::Index j = 0; j < d; ++j)
                if (std::abs(m.comps_(i, j)) > 1e-12) {
                    s = m.comps_(i, j);
                    break;
                }
        }
        if (s < 0) {
            m.comps_.row(i) *= -1.0;
            m.train_proj_.col(i) *= -1.0;
        }
    }
    return m;
}

PcaModel PcaModel::fit_materials(const MaterialProvider& base, int k,
                                 bool permutation_closure) {
    const int n = base.count;
    if (n < 1 || (!permutation_closure && n < 2))
        throw RankDeficient("need at least two samples");
    const int planes_n = 3 * n;
    const int samples_n = permutation_closure ? 6 * n : n;
    if (k < 1 || k > samples_n - 1)
        throw RankDeficient("component count must satisfy 1 <= k <= n_samples-1");

    auto basis = std::make_shared<PlaneBasis>();
    basis->planes.resize(kGridCells, planes_n);
    for (int u = 0; u < n; ++u) {
        MeasuredBrdf b = base.load(u);
        Eigen::Map<const Eigen::MatrixXd> v(b.values.data(), kGridCells, 3);
        basis->planes.middleCols(3 * u, 3) =
            v.array().log1p().cast<float>().matrix();
    }

    basis->samples.resize(samples_n, 3);
    if (permutation_closure) {
        for (int u = 0; u < n; ++u)
            for (int p = 0; p < 6; ++p)
                for (int s = 0; s < 3; ++s)
                    basis->samples(6 * u + p, s) = 3 * u + kRgbPermutations[p][s];
    } else {
        for (int u = 0; u < n; ++u)
            for (int s = 0; s < 3; ++s) basis->samples(u, s) = 3 * u + s;
    }

    basis->mean_w = Eigen::MatrixXd::Zero(planes_n, 3);
    for (int a = 0; a < samples_n; ++a)
        for (int s = 0; s < 3; ++s)
            basis->mean_w(basis->samples(a, s), s) += 1.0 / samples_n;

    Eigen::MatrixXd gp = plane_gram(basis->planes);
    Eigen::MatrixXd g(samples_n, samples_n);
    for (int a = 0; a < samples_n; ++a)
        for (int b = a; b < samples_n; ++b) {
            double acc = 0.0;
            for (int s = 0; s < 3; ++s)
                acc += gp(basis->samples(a, s), basis->samples(b, s));
            g(a, b) = acc;
            g(b, a) = acc;
        }

    basis->rowmean_raw = g.rowwise().mean();
    basis->grand_raw = basis->rowmean_raw.mean();
    Eigen::MatrixXd gc = g;
    gc.colwise() -= basis->rowmean_raw;
    gc.rowwise() -= basis->rowmean_raw.transpose();
    gc.array() += basis->grand_raw;

    Eigen::VectorXd lambda;
    Eigen::MatrixXd vecs;
    eigh_descending(gc, lambda, vecs);
    Eigen::Index rank = 0;
    for (int i = 0; i < samples_n; ++i)
        if (lambda[i] > lambda[0] * 1e-10) ++rank;
    if (lambda[0] <= 0.0) throw RankDeficient("all samples identical");
    if (k > rank)
        throw RankDeficient("component count exceeds effective rank " +
                            std::to_string(rank));

    PcaModel m;
    m.k_ = k;
    m.vars_.resize(k);
    m.train_proj_.resize(samples_n, k);
    basis->dual.resize(samples_n, k);
    for (int i = 0; i < k; ++i) {
        double root = std::sqrt(lambda[i]);
        basis->dual.col(i) = vecs.col(i) / root;
        m.train_proj_.col(i) = vecs.col(i) * root;
        m.vars_[i] = lambda[i] / double(samples_n - 1);
        Eigen::Index a = 0;
        m.train_proj_.col(i).cwiseAbs().maxCoeff(&a);
        if (m.train_proj_(a, i) < 0) {
            basis->dual.col(i) *= -1.0;
            m.train_proj_.col(i) *= -1.0;
        }
    }
    m.basis_ = std::move(basis);
    return m;
}

PcaModel PcaModel::from_parts(Eigen::VectorXd mean, Eigen::MatrixXd components,
                              Eigen::VectorXd variances) {
    if (components.rows() != variances.size() ||
        components.cols() != mean.size() || components.rows() < 1)
        throw DimensionMismatch("inconsistent PCA part shapes");
    Eigen::MatrixXd gram = components * components.transpose();
    gram.diagonal().array() -= 1.0;
    if (gram.cwiseAbs().maxCoeff() > 1e-6)
        throw ConfigError("components are not orthonormal");
    for (Eigen::Index i = 0; i < variances.size(); ++i) {
        if (variances[i] < 0)
            throw ConfigError("negative component variance");
        if (i > 0 && variances[i] > variances[i - 1] + 1e-12)
            throw ConfigError("variances must be nonincreasing");
    }
    PcaModel m;
    m.k_ = static_cast<int>(components.rows());
    m.mean_ = std::move(mean);
    m.comps_ = std::move(components);
    m.vars_ = std::move(variances);
    return m;
}

Eigen::VectorXd PcaModel::mean() const {
    require_fitted();
    if (!basis_) return mean_;
    return reconstruct(Eigen::VectorXd::Zero(k_));
}

Eigen::MatrixXd PcaModel::components() const {
    require_fitted();
    if (!basis_) return comps_;
    // collapse each component to plane weights, then expand chunk-wise in
    // double so the orthonormality invariant survives the float basis
    const Eigen::Index planes_n = basis_->planes.cols();
    const Eigen::Index samples_n = basis_->samples.rows();
    Eigen::MatrixXd wall(planes_n, 3 * k_);
    for (int i = 0; i < k_; ++i) {
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(planes_n, 3);
        for (Eigen::Index a = 0; a < samples_n; ++a)
            for (int s = 0; s < 3; ++s)
                w(basis_->samples(a, s), s) += basis_->dual(a, i);
        w -= basis_->dual.col(i).sum() * basis_->mean_w;
        wall.middleCols(3 * i, 3) = w;
    }
    Eigen::MatrixXd out(k_, dim());
    Eigen::MatrixXd buf, prod;
    for (Eigen::Index r0 = 0; r0 < kGridCells; r0 += kChunkRows) {
        Eigen::Index len = std::min(kChunkRows,
                                    static_cast<Eigen::Index>(kGridCells) - r0);
        buf = basis_->planes.middleRows(r0, len).cast<double>();
        prod.noalias() = buf * wall; // len x 3k
        for (int i = 0; i < k_; ++i)
            for (int s = 0; s < 3; ++s)
                out.block(i, s * static_cast<Eigen::Index>(kGridCells) + r0,
                          1, len) = prod.col(3 * i + s).transpose();
    }
    return out;
}

Eigen::VectorXd
PcaModel::project_planes(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    const Eigen::Index samples_n = basis_->samples.rows();
    Eigen::MatrixXd dots = plane_dots(basis_->planes, x);
    Eigen::VectorXd raw(samples_n);
    for (Eigen::Index a = 0; a < samples_n; ++a) {
        double acc = 0.0;
        for (int s = 0; s < 3; ++s) acc += dots(basis_->samples(a, s), s);
        raw[a] = acc;
    }
    double x_dot_mean = (basis_->mean_w.array() * dots.array()).sum();
    Eigen::VectorXd centered = raw.array() - x_dot_mean -
                               basis_->rowmean_raw.array() +
                               basis_->grand_raw;
    return basis_->dual.transpose() * centered;
}

Eigen::MatrixXd PcaModel::reconstruct_planes(const Eigen::VectorXd& z) const {
    const Eigen::Index planes_n = basis_->planes.cols();
    const Eigen::Index samples_n = basis_->samples.rows();
    Eigen::VectorXd w = basis_->dual * z;
    Eigen::MatrixXd pw = Eigen::MatrixXd::Zero(planes_n, 3);
    for (Eigen::Index a = 0; a < samples_n; ++a)
        for (int s = 0; s < 3; ++s) pw(basis_->samples(a, s), s) += w[a];
    pw += (1.0 - w.sum()) * basis_->mean_w;
    Eigen::MatrixXf out = basis_->planes * pw.cast<float>().eval();
    return out.cast<double>();
}

Eigen::VectorXd PcaModel::project(const Eigen::VectorXd& x) const {
    require_fitted();
    if (x.size() != dim())
        throw DimensionMismatch("project: expected dimension " +
                                std::to_string(dim()) + ", got " +
                                std::to_string(x.size()));
    if (basis_) {
        Eigen::Map<const Eigen::MatrixXd> view(x.data(), kGridCells, 3);
        return project_planes(view);
    }
    return comps_ * (x - mean_);
}

Eigen::VectorXd PcaModel::reconstruct(const Eigen::VectorXd& z) const {
    require_fitted();
    if (z.size() != k_)
        throw DimensionMismatch("reconstruct: expected " + std::to_string(k_) +
                                " coefficients, got " + std::to_string(z.size()));
    if (basis_) {
        Eigen::MatrixXd planes = reconstruct_planes(z);
        Eigen::VectorXd out(dim());
        Eigen::Map<Eigen::MatrixXd>(out.data(), kGridCells, 3) = planes;
        return out;
    }
    return mean_ + comps_.transpose() * z;
}

Eigen::VectorXd PcaModel::project_material(const MeasuredBrdf& b) const {
    require_fitted();
    if (dim() != 3 * static_cast<Eigen::Index>(kGridCells))
        throw DimensionMismatch("model is not material-scale");
    Eigen::MatrixXd x = log_planes(b);
    if (basis_) return project_planes(x);
    return comps_ *
           (Eigen::Map<const Eigen::VectorXd>(x.data(), x.size()) - mean_);
}

MeasuredBrdf PcaModel::reconstruct_material(const Eigen::VectorXd& z,
                                            std::string name) const {
    require_fitted();
    if (dim() != 3 * static_cast<Eigen::Index>(kGridCells))
        throw DimensionMismatch("model is not material-scale");
    Eigen::MatrixXd planes;
    if (basis_) {
        if (z.size() != k_)
            throw DimensionMismatch("reconstruct: expected " +
                                    std::to_string(k_) + " coefficients");
        planes = reconstruct_planes(z);
    } else {
        Eigen::VectorXd v = reconstruct(z);
        planes = Eigen::Map<const Eigen::MatrixXd>(v.data(), kGridCells, 3);
    }
    MeasuredBrdf out;
    out.name = std::move(name);
    Eigen::Map<Eigen::MatrixXd> dst(out.values.data(), kGridCells, 3);
    dst.array() = planes.array().expm1().max(0.0);
    return out;
}

Eigen::VectorXd PcaModel::draw_latent(uint64_t seed) const {
    require_fitted();
    Rng rng(seed);
    Eigen::VectorXd z(k_);
    for (int i = 0; i < k_; ++i) z[i] = rng.normal() * std::sqrt(vars_[i]);
    return z;
}

// ---- free functions ----

PcaModel pca_fit(const std::vector<Eigen::VectorXd>& data, int k) {
    if (data.size() < 2) throw RankDeficient("need at least two samples");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(data.size()), data[0].size());
    for (size_t i = 0; i < data.size(); ++i) {
        if (data[i].size() != m.cols())
            throw DimensionMismatch("sample dimensions differ");
        m.row(static_cast<Eigen::Index>(i)) = data[i];
    }
    return PcaModel::fit(m, k);
}

Eigen::VectorXd pca_project(const PcaModel& m, const Eigen::VectorXd& x) {
    return m.project(x);
}

Eigen::VectorXd pca_reconstruct(const PcaModel& m, const Eigen::VectorXd& z) {
    return m.reconstruct(z);
}

MeasuredBrdf pca_interpolate(const PcaModel& m, const MeasuredBrdf& a,
                             const MeasuredBrdf& b, double t) {
    Eigen::VectorXd z =
        (1.0 - t) * m.project_material(a) + t * m.project_material(b);
    return m.reconstruct_material(z, a.name + "+" + b.name);
}

MeasuredBrdf pca_sample(const PcaModel& m, uint64_t seed) {
    return m.reconstruct_material(m.draw_latent(seed),
                                  "pca-sample-" + std::to_string(seed));
}

// ---- dataset expansion ----

std::vector<MaterialMeta> build_augmerl(const MaterialProvider& base,
                                        const AugmentOptions& opt,
                                        const AugmentSink& sink) {
    const int n = base.count;
    if (n < 1) throw EmptySet("no base materials");
    const int permuted = 6 * n;

    // candidate unordered pairs of permuted items, different bases only
    std::vector<std::pair<int, int>> pairs;
    for (int a = 0; a < permuted; ++a)
        for (int b = a + 1; b < permuted; ++b)
            if (a / 6 != b / 6) pairs.emplace_back(a, b);
    int want = opt.pair_count < 0 ? 3 * permuted : opt.pair_count;
    want = std::min(want, static_cast<int>(pairs.size()));
    const int total = permuted + want;

    std::vector<MaterialMeta> metas;
    metas.reserve(total);

    int index = 0;
    for (int u = 0; u < n; ++u) {
        MeasuredBrdf b = base.load(u);
        MaterialMeta bm = base.meta ? base.meta(u) : MaterialMeta{};
        if (bm.name.empty())
            bm.name = b.name.empty() ? "material-" + std::to_string(u) : b.name;
        for (int p = 0; p < 6; ++p) {
            MeasuredBrdf out = apply_rgb_permutation(b, p);
            MaterialMeta m;
            m.name = p == 0
                         ? bm.name
                         : bm.name + "-" + kRgbPermutationNames[p];
            m.type_id = bm.type_id;
            m.description =
                p == 0 ? bm.description
                       : std::string("channel permutation ") +
                             kRgbPermutationNames[p] + " of " + bm.name;
            m.provenance.kind = "permuted";
            m.provenance.parent_a = bm.name;
            m.provenance.permutation = kRgbPermutationNames[p];
            out.name = m.name;
            out.type_id = m.type_id;
            metas.push_back(std::move(m));
            sink(AugmentedItem{index, total, metas.back(), out});
            ++index;
        }
    }

    if (want > 0) {
        // rank of the centered closure is bounded by 5n-1 (one alternating
        // dependency per base), so clamp the default component count for
        // small bases
        int k = std::min(opt.pca_components, 5 * n - 1);
        PcaModel pca = PcaModel::fit_materials(base, k, true);
        const Eigen::MatrixXd& z_train = pca.train_projections();

        Rng rng(opt.seed);
        rng.shuffle(pairs);
        for (int q = 0; q < want; ++q) {
            auto [a, b] = pairs[q];
            double t = rng.uniform();
            while (t == 0.0) t = rng.uniform();
            Eigen::VectorXd z = (1.0 - t) * z_train.row(a).transpose() +
                                t * z_train.row(b).transpose();
            char name[32];
            std::snprintf(name, sizeof name, "interp-%04d", q);
            MeasuredBrdf out = pca.reconstruct_material(z, name);
            MaterialMeta m;
            m.name = name;
            if (metas[a].type_id && metas[b].type_id &&
                *metas[a].type_id == *metas[b].type_id)
                m.type_id = metas[a].type_id;
            auto desc = [&](int i) {
                return metas[i].description.empty() ? metas[i].name
                                                    : metas[i].description;
            };
            m.description = "a mixture of " + desc(a) + " and " + desc(b);
            m.provenance.kind = "interpolated";
            m.provenance.parent_a = metas[a].name;
            m.provenance.parent_b = metas[b].name;
            m.provenance.t = t;
            out.type_id = m.type_id;
            metas.push_back(std::move(m));
            sink(AugmentedItem{index, total, metas.back(), out});
            ++index;
        }
    }
    return metas;
}

std::vector<MaterialMeta> write_augmerl(const MaterialProvider& base,
                                        const AugmentOptions& opt,
                                        const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto metas = build_augmerl(base, opt, [&](const AugmentedItem& it) {
        save_merl_file(it.brdf, (dir / (it.meta.name + ".binary")).string());
    });
    write_sidecar(dir / "materials.json", metas);
    return metas;
}

} // namespace neumat
