#include "neumat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace neumat {

namespace {

void check_same_shape(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw DimensionMismatch("image sizes differ");
    if (static_cast<long long>(a.width) * a.height < 2)
        throw DimensionMismatch("image statistics need at least 2 pixels");
}

constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace

double rmse(const Image& a, const Image& b) {
    check_same_shape(a, b);
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - b.data[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.data.size()));
}

double psnr(const Image& a, const Image& b) {
    double r = rmse(a, b);
    if (r == 0.0) return kInf;
    return 10.0 * std::log10(1.0 / (r * r));
}

double ssim(const Image& a, const Image& b) {
    check_same_shape(a, b);
    const double n = static_cast<double>(a.width) * a.height;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        double sa = 0.0, sb = 0.0;
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                sa += a.at(x, y, c);
                sb += b.at(x, y, c);
            }
        double mu_a = sa / n, mu_b = sb / n;
        double va = 0.0, vb = 0.0, cov_ab = 0.0;
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                double da = a.at(x, y, c) - mu_a;
                double db = b.at(x, y, c) - mu_b;
                va += da * da;
                vb += db * db;
                cov_ab += da * db;
            }
        va /= n - 1.0;
        vb /= n - 1.0;
        cov_ab /= n - 1.0;
        total += (2.0 * mu_a * mu_b + c1) * (2.0 * cov_ab + c2) /
                 ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
    }
    return total / 3.0;
}

double neg_psnr(const Image& a, const Image& b) { return -psnr(a, b); }
double neg_ssim(const Image& a, const Image& b) { return -ssim(a, b); }

namespace {

// Compact per-material tabulation over valid cells (float storage,
// double reductions).
struct ValidTable {
    Eigen::VectorXf r, g, b;
};

ValidTable tabulate_valid(const BrdfEvaluable& f) {
    const auto& geo = GridGeometry::instance();
    const auto& cells = geo.valid_cells();
    ValidTable t;
    t.r.resize(cells.size());
    t.g.resize(cells.size());
    t.b.resize(cells.size());
    for (size_t idx = 0; idx < cells.size(); ++idx) {
        int cell = cells[idx];
        int k = cell % kPhiDBins;
        int rem = cell / kPhiDBins;
        int j = rem % kThetaDBins;
        int i = rem / kThetaDBins;
        Rgb v = f.eval(cell_center_angles(i, j, k));
        t.r[idx] = static_cast<float>(v[0]);
        t.g[idx] = static_cast<float>(v[1]);
        t.b[idx] = static_cast<float>(v[2]);
    }
    return t;
}

double reduce_l1(const ValidTable& a, const ValidTable& b) {
    double acc = 0.0;
    auto add = [&acc](const Eigen::VectorXf& x, const Eigen::VectorXf& y) {
        acc += (x - y).cwiseAbs().cast<double>().sum();
    };
    add(a.r, b.r);
    add(a.g, b.g);
    add(a.b, b.b);
    return acc / (3.0 * a.r.size());
}

double reduce_l1_log(const ValidTable& a, const ValidTable& b) {
    double acc = 0.0;
    auto add = [&acc](const Eigen::VectorXf& x, const Eigen::VectorXf& y) {
        for (Eigen::Index i = 0; i < x.size(); ++i)
            acc += std::abs(std::log1p(static_cast<double>(x[i])) -
                            std::log1p(static_cast<double>(y[i])));
    };
    add(a.r, b.r);
    add(a.g, b.g);
    add(a.b, b.b);
    return acc / (3.0 * a.r.size());
}

double reduce_msl(const ValidTable& a, const ValidTable& b,
                  const std::vector<double>& cos_i) {
    double acc = 0.0;
    auto add = [&](const Eigen::VectorXf& x, const Eigen::VectorXf& y) {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            double d = std::log1p(static_cast<double>(x[i]) * cos_i[i]) -
                       std::log1p(static_cast<double>(y[i]) * cos_i[i]);
            acc += d * d;
        }
    };
    add(a.r, b.r);
    add(a.g, b.g);
    add(a.b, b.b);
    return acc / (3.0 * a.r.size());
}

std::vector<double> valid_cos_theta_i() {
    const auto& geo = GridGeometry::instance();
    std::vector<double> out;
    out.reserve(geo.valid_cells().size());
    for (int cell : geo.valid_cells()) out.push_back(geo.cos_theta_i(cell));
    return out;
}

} // namespace

double d_brdf_l1(const BrdfEvaluable& f, const BrdfEvaluable& g) {
    return reduce_l1(tabulate_valid(f), tabulate_valid(g));
}

double d_brdf_l1_log(const BrdfEvaluable& f, const BrdfEvaluable& g) {
    return reduce_l1_log(tabulate_valid(f), tabulate_valid(g));
}

double d_msl(const BrdfEvaluable& f, const BrdfEvaluable& g) {
    return reduce_msl(tabulate_valid(f), tabulate_valid(g), valid_cos_theta_i());
}

const char* to_string(BrdfDistance::Tag tag) {
    switch (tag) {
        case BrdfDistance::Tag::brdf_l1: return "BRDF-L1";
        case BrdfDistance::Tag::brdf_l1_log: return "BRDF-L1-Log";
        case BrdfDistance::Tag::msl: return "MSL";
        case BrdfDistance::Tag::rmse: return "RMSE";
        case BrdfDistance::Tag::neg_psnr: return "NegPSNR";
        case BrdfDistance::Tag::neg_ssim: return "NegSSIM";
    }
    return "?";
}

double BrdfDistance::operator()(const BrdfEvaluable& f, const BrdfEvaluable& g) const {
    switch (tag) {
        case Tag::brdf_l1: return d_brdf_l1(f, g);
        case Tag::brdf_l1_log: return d_brdf_l1_log(f, g);
        case Tag::msl: return d_msl(f, g);
        case Tag::rmse: return rmse(render_sphere(f, render), render_sphere(g, render));
        case Tag::neg_psnr: return neg_psnr(render_sphere(f, render), render_sphere(g, render));
        case Tag::neg_ssim: return neg_ssim(render_sphere(f, render), render_sphere(g, render));
    }
    throw Error("unknown distance tag");
}

Eigen::MatrixXd pairwise_distance(const std::vector<const BrdfEvaluable*>& A,
                                  const std::vector<const BrdfEvaluable*>& B,
                                  const BrdfDistance& d) {
    Eigen::MatrixXd out(A.size(), B.size());
    if (A.empty() || B.empty()) return out;

    if (d.image_backed()) {
        std::vector<Image> ia, ib;
        ia.reserve(A.size());
        ib.reserve(B.size());
        for (const auto* f : A) ia.push_back(render_sphere(*f, d.render));
        for (const auto* g : B) ib.push_back(render_sphere(*g, d.render));
        for (size_t i = 0; i < A.size(); ++i)
            for (size_t j = 0; j < B.size(); ++j) {
                double v = 0.0;
                switch (d.tag) {
                    case BrdfDistance::Tag::rmse: v = rmse(ia[i], ib[j]); break;
                    case BrdfDistance::Tag::neg_psnr: v = neg_psnr(ia[i], ib[j]); break;
                    default: v = neg_ssim(ia[i], ib[j]); break;
                }
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            }
        return out;
    }

    std::vector<ValidTable> ta, tb;
    ta.reserve(A.size());
    tb.reserve(B.size());
    for (const auto* f : A) ta.push_back(tabulate_valid(*f));
    for (const auto* g : B) tb.push_back(tabulate_valid(*g));
    std::vector<double> cos_i;
    if (d.tag == BrdfDistance::Tag::msl) cos_i = valid_cos_theta_i();
    for (size_t i = 0; i < A.size(); ++i)
        for (size_t j = 0; j < B.size(); ++j) {
            double v = 0.0;
            switch (d.tag) {
                case BrdfDistance::Tag::brdf_l1: v = reduce_l1(ta[i], tb[j]); break;
                case BrdfDistance::Tag::brdf_l1_log: v = reduce_l1_log(ta[i], tb[j]); break;
                default: v = reduce_msl(ta[i], tb[j], cos_i); break;
            }
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    return out;
}

double mmd(const Eigen::MatrixXd& d_rs) {
    if (d_rs.rows() == 0 || d_rs.cols() == 0)
        throw EmptySet("mmd needs nonempty reference and synthesized sets");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < d_rs.rows(); ++i) acc += d_rs.row(i).minCoeff();
    return acc / static_cast<double>(d_rs.rows());
}

double cov(const Eigen::MatrixXd& d_rs) {
    if (d_rs.rows() == 0 || d_rs.cols() == 0)
        throw EmptySet("cov needs nonempty reference and synthesized sets");
    std::set<Eigen::Index> covered;
    for (Eigen::Index j = 0; j < d_rs.cols(); ++j) {
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < d_rs.rows(); ++i)
            if (d_rs(i, j) < d_rs(best, j)) best = i; // ties keep the lowest index
        covered.insert(best);
    }
    return static_cast<double>(covered.size()) / static_cast<double>(d_rs.rows());
}

double one_nna(const Eigen::MatrixXd& d_rr, const Eigen::MatrixXd& d_rs,
               const Eigen::MatrixXd& d_ss) {
    const Eigen::Index n = d_rr.rows(), m = d_ss.rows();
    if (n == 0 || m == 0) throw EmptySet("one_nna needs nonempty sets");
    if (d_rr.cols() != n || d_ss.cols() != m || d_rs.rows() != n || d_rs.cols() != m)
        throw DimensionMismatch("distance matrix shapes disagree");

    // Global indexing: reference block first, then synthesized.
    auto dist = [&](Eigen::Index a, Eigen::Index b) {
        if (a < n)
            return b < n ? d_rr(a, b) : d_rs(a, b - n);
        return b < n ? d_rs(b, a - n) : d_ss(a - n, b - n);
    };

    Eigen::Index total = n + m, correct = 0;
    for (Eigen::Index x = 0; x < total; ++x) {
        Eigen::Index nn = -1;
        double best = kInf;
        for (Eigen::Index y = 0; y < total; ++y) {
            if (y == x) continue;
            double v = dist(x, y);
            if (nn < 0 || v < best) {
                best = v;
                nn = y;
            }
        }
        if ((x < n) == (nn < n)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

double mmd(const std::vector<const BrdfEvaluable*>& R,
           const std::vector<const BrdfEvaluable*>& S, const BrdfDistance& d) {
    if (R.empty() || S.empty())
        throw EmptySet("distributional metrics need nonempty sets");
    return mmd(pairwise_distance(R, S, d));
}

double cov(const std::vector<const BrdfEvaluable*>& R,
           const std::vector<const BrdfEvaluable*>& S, const BrdfDistance& d) {
    if (R.empty() || S.empty())
        throw EmptySet("distributional metrics need nonempty sets");
    return cov(pairwise_distance(R, S, d));
}

double one_nna(const std::vector<const BrdfEvaluable*>& R,
               const std::vector<const BrdfEvaluable*>& S, const BrdfDistance& d) {
    if (R.empty() || S.empty())
        throw EmptySet("distributional metrics need nonempty sets");
    return one_nna(pairwise_distance(R, R, d), pairwise_distance(R, S, d),
                   pairwise_distance(S, S, d));
}

} // namespace neumat
