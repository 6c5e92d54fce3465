#include "neumat/neural_field.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "neumat/optim.hpp"
#include "neumat/rng.hpp"

namespace neumat {

namespace {

// Flat layout offsets.
constexpr int kW1 = 0;
constexpr int kB1 = kW1 + kFieldHidden * kFieldInput;
constexpr int kW2 = kB1 + kFieldHidden;
constexpr int kB2 = kW2 + kFieldHidden * kFieldHidden;
constexpr int kW3 = kB2 + kFieldHidden;
constexpr int kB3 = kW3 + kFieldOutput * kFieldHidden;
static_assert(kB3 + kFieldOutput == kFieldParamCount);

using W1Map = Eigen::Map<const Eigen::Matrix<double, kFieldHidden, kFieldInput, Eigen::RowMajor>>;
using W2Map = Eigen::Map<const Eigen::Matrix<double, kFieldHidden, kFieldHidden, Eigen::RowMajor>>;
using W3Map = Eigen::Map<const Eigen::Matrix<double, kFieldOutput, kFieldHidden, Eigen::RowMajor>>;
using B1Map = Eigen::Map<const Eigen::Matrix<double, kFieldHidden, 1>>;
using B3Map = Eigen::Map<const Eigen::Matrix<double, kFieldOutput, 1>>;

struct Views {
    W1Map w1;
    B1Map b1;
    W2Map w2;
    B1Map b2;
    W3Map w3;
    B3Map b3;
    explicit Views(const Eigen::VectorXd& flat)
        : w1(flat.data() + kW1),
          b1(flat.data() + kB1),
          w2(flat.data() + kW2),
          b2(flat.data() + kB2),
          w3(flat.data() + kW3),
          b3(flat.data() + kB3) {}
};

using FeatMatrix = Eigen::Matrix<double, kFieldInput, Eigen::Dynamic>;
using OutMatrix  = Eigen::Matrix<double, kFieldOutput, Eigen::Dynamic>;
using HidMatrix  = Eigen::Matrix<double, kFieldHidden, Eigen::Dynamic>;

struct Forward {
    HidMatrix z1, h1, z2, h2;
    OutMatrix z3, p;
};

void forward_pass(const Views& v, const FeatMatrix& x, Forward& f) {
    f.z1 = (v.w1 * x).colwise() + v.b1;
    f.h1 = f.z1.cwiseMax(0.0);
    f.z2 = (v.w2 * f.h1).colwise() + v.b2;
    f.h2 = f.z2.cwiseMax(0.0);
    f.z3 = (v.w3 * f.h2).colwise() + v.b3;
    f.p = f.z3.array().exp();
}

// Loss residuals: log(1 + target*cos) - log(1 + pred*cos), as a 3xB array.
Eigen::ArrayXXd residuals(const OutMatrix& pred, const OutMatrix& pre_target,
                          const Eigen::VectorXd& cos_i) {
    Eigen::ArrayXXd pc =
        (pred.array().rowwise() * cos_i.transpose().array()).log1p();
    return pre_target.array() - pc;
}

OutMatrix log1p_weighted(const OutMatrix& values, const Eigen::VectorXd& cos_i) {
    return (values.array().rowwise() * cos_i.transpose().array())
        .log1p()
        .matrix();
}

double loss_grad_impl(const Eigen::VectorXd& flat, const FeatMatrix& x,
                      const OutMatrix& pre_target, const Eigen::VectorXd& cos_i,
                      Eigen::VectorXd* grad) {
    Views v(flat);
    Forward f;
    forward_pass(v, x, f);
    Eigen::ArrayXXd r = residuals(f.p, pre_target, cos_i);
    const double denom = static_cast<double>(r.size());
    double loss = r.abs().sum() / denom;
    if (!grad) return loss;

    grad->setZero(kFieldParamCount);
    // d|r|/d pre_pred = -sign(r); sign(0) = 0.
    Eigen::ArrayXXd s =
        (r > 0.0).cast<double>() - (r < 0.0).cast<double>();
    Eigen::ArrayXXd dpre = -s / denom;
    // pre_pred = log1p(p * c): d/dp = c / (1 + p*c).
    Eigen::ArrayXXd pc = f.p.array().rowwise() * cos_i.transpose().array();
    Eigen::ArrayXXd dp = dpre.rowwise() * cos_i.transpose().array() / (1.0 + pc);
    OutMatrix dz3 = (dp * f.p.array()).matrix(); // exp output

    HidMatrix dh2 = v.w3.transpose() * dz3;
    HidMatrix dz2 = (dh2.array() * (f.z2.array() > 0.0).cast<double>()).matrix();
    HidMatrix dh1 = v.w2.transpose() * dz2;
    HidMatrix dz1 = (dh1.array() * (f.z1.array() > 0.0).cast<double>()).matrix();

    using RowW1 = Eigen::Matrix<double, kFieldHidden, kFieldInput, Eigen::RowMajor>;
    using RowW2 = Eigen::Matrix<double, kFieldHidden, kFieldHidden, Eigen::RowMajor>;
    using RowW3 = Eigen::Matrix<double, kFieldOutput, kFieldHidden, Eigen::RowMajor>;
    Eigen::Map<RowW1>(grad->data() + kW1) = dz1 * x.transpose();
    Eigen::Map<Eigen::VectorXd>(grad->data() + kB1, kFieldHidden) = dz1.rowwise().sum();
    Eigen::Map<RowW2>(grad->data() + kW2) = dz2 * f.h1.transpose();
    Eigen::Map<Eigen::VectorXd>(grad->data() + kB2, kFieldHidden) = dz2.rowwise().sum();
    Eigen::Map<RowW3>(grad->data() + kW3) = dz3 * f.h2.transpose();
    Eigen::Map<Eigen::VectorXd>(grad->data() + kB3, kFieldOutput) = dz3.rowwise().sum();
    return loss;
}

// Cell-center features and cosine weights for every valid grid cell,
// shared by all fits in the process.
struct GridFeatures {
    FeatMatrix features;      // 6 x n_valid
    Eigen::VectorXd cos_i;    // n_valid
    std::vector<int> cells;   // grid cell id per column

    static const GridFeatures& instance() {
        static GridFeatures g;
        return g;
    }

private:
    GridFeatures() {
        const auto& geo = GridGeometry::instance();
        cells = geo.valid_cells();
        features.resize(kFieldInput, static_cast<Eigen::Index>(cells.size()));
        cos_i.resize(static_cast<Eigen::Index>(cells.size()));
        for (size_t n = 0; n < cells.size(); ++n) {
            int cell = cells[n];
            int k = cell % kPhiDBins;
            int rem = cell / kPhiDBins;
            features.col(static_cast<Eigen::Index>(n)) = field_features(
                cell_center_angles(rem / kThetaDBins, rem % kThetaDBins, k));
            cos_i[static_cast<Eigen::Index>(n)] = geo.cos_theta_i(cell);
        }
    }
};

void check_fit_config(const FitConfig& cfg) {
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be positive");
    if (cfg.epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (cfg.learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
        throw ConfigError("adam betas must lie in [0, 1)");
    if (cfg.eps <= 0.0) throw ConfigError("adam eps must be positive");
}

FitResult fit_on_columns(const FeatMatrix& feats, const OutMatrix& pre_target,
                         const Eigen::VectorXd& cos_i, const FitConfig& cfg,
                         const NeuralFieldWeights& init) {
    check_fit_config(cfg);
    const Eigen::Index n = feats.cols();
    if (n == 0) throw EmptySet("no training cells");

    FitResult result;
    result.weights = init;

    // Full-set loss in chunks (keeps activations small).
    auto full_loss = [&](const Eigen::VectorXd& flat) {
        const Eigen::Index chunk = 8192;
        double acc = 0.0;
        for (Eigen::Index s = 0; s < n; s += chunk) {
            Eigen::Index len = std::min(chunk, n - s);
            FeatMatrix xb = feats.middleCols(s, len);
            OutMatrix tb = pre_target.middleCols(s, len);
            Eigen::VectorXd cb = cos_i.segment(s, len);
            acc += loss_grad_impl(flat, xb, tb, cb, nullptr) *
                   static_cast<double>(len);
        }
        return acc / static_cast<double>(n);
    };
    result.initial_loss = full_loss(init.flat);

    if (cfg.epochs == 0) return result;

    Eigen::VectorXd w = init.flat;
    Adam opt(kFieldParamCount, cfg.beta1, cfg.beta2, cfg.eps);
    Rng rng(cfg.seed);
    std::vector<Eigen::Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    Eigen::VectorXd grad(kFieldParamCount);
    FeatMatrix xb;
    OutMatrix tb;
    Eigen::VectorXd cb;
    double best = result.initial_loss;
    Eigen::VectorXd best_w = w;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_acc = 0.0;
        for (Eigen::Index s = 0; s < n; s += cfg.batch_size) {
            Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, n - s);
            xb.resize(kFieldInput, len);
            tb.resize(kFieldOutput, len);
            cb.resize(len);
            for (Eigen::Index c = 0; c < len; ++c) {
                Eigen::Index src = order[static_cast<size_t>(s + c)];
                xb.col(c) = feats.col(src);
                tb.col(c) = pre_target.col(src);
                cb[c] = cos_i[src];
            }
            double loss = loss_grad_impl(w, xb, tb, cb, &grad);
            if (!std::isfinite(loss))
                throw NonFinite("fit loss diverged at epoch " + std::to_string(epoch));
            epoch_acc += loss * static_cast<double>(len);
            opt.step(w, grad, cfg.learning_rate);
        }
        double epoch_loss = epoch_acc / static_cast<double>(n);
        result.epoch_loss.push_back(epoch_loss);
        if (epoch_loss < best) {
            best = epoch_loss;
            best_w = w;
        }
    }

    // Guarantee final <= initial on the full set; fall back to init if the
    // tracked snapshot does not hold up under a consistent measurement.
    if (full_loss(best_w) <= result.initial_loss)
        result.weights = NeuralFieldWeights(std::move(best_w));
    return result;
}

OutMatrix gather_pre_targets(const MeasuredBrdf& target,
                             const std::vector<int>& cells,
                             const Eigen::VectorXd& cos_i) {
    OutMatrix t(kFieldOutput, static_cast<Eigen::Index>(cells.size()));
    for (size_t i = 0; i < cells.size(); ++i)
        t.col(static_cast<Eigen::Index>(i)) = target.rgb(cells[i]).max(0.0).matrix();
    return log1p_weighted(t, cos_i);
}

} // namespace

Eigen::Matrix<double, kFieldInput, 1> field_features(const HalfDiffAngles& a) {
    Eigen::Matrix<double, kFieldInput, 1> f;
    double sd = std::sin(a.theta_d);
    f << std::sin(a.theta_h), 0.0, std::cos(a.theta_h),
         sd * std::cos(a.phi_d), sd * std::sin(a.phi_d), std::cos(a.theta_d);
    return f;
}

FieldBatch FieldBatch::from_pairs(
    const std::vector<std::pair<HalfDiffAngles, Rgb>>& pairs) {
    FieldBatch b;
    b.features.resize(kFieldInput, static_cast<Eigen::Index>(pairs.size()));
    b.targets.resize(kFieldOutput, static_cast<Eigen::Index>(pairs.size()));
    b.cos_theta_i.resize(static_cast<Eigen::Index>(pairs.size()));
    for (size_t i = 0; i < pairs.size(); ++i) {
        auto idx = static_cast<Eigen::Index>(i);
        b.features.col(idx) = field_features(pairs[i].first);
        b.targets.col(idx) = pairs[i].second.matrix();
        b.cos_theta_i[idx] = halfdiff_to_io(pairs[i].first).wi.z();
    }
    return b;
}

NeuralFieldWeights nf_init(const std::optional<NeuralFieldWeights>& template_w,
                           uint64_t seed) {
    if (template_w) return *template_w;
    NeuralFieldWeights w;
    Rng rng(seed);
    auto fill = [&](int offset, int count, int fan_in, int fan_out) {
        double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (int i = 0; i < count; ++i)
            w.flat[offset + i] = rng.uniform(-bound, bound);
    };
    fill(kW1, kFieldHidden * kFieldInput, kFieldInput, kFieldHidden);
    fill(kW2, kFieldHidden * kFieldHidden, kFieldHidden, kFieldHidden);
    fill(kW3, kFieldOutput * kFieldHidden, kFieldHidden, kFieldOutput);
    return w;
}

Rgb nf_eval(const NeuralFieldWeights& w, const HalfDiffAngles& a) {
    Views v(w.flat);
    Eigen::Matrix<double, kFieldInput, 1> x = field_features(a);
    Eigen::Matrix<double, kFieldHidden, 1> h1 = ((v.w1 * x) + v.b1).cwiseMax(0.0);
    Eigen::Matrix<double, kFieldHidden, 1> h2 = ((v.w2 * h1) + v.b2).cwiseMax(0.0);
    Eigen::Matrix<double, kFieldOutput, 1> z3 = (v.w3 * h2) + v.b3;
    return z3.array().exp();
}

double nf_loss(const NeuralFieldWeights& w, const FieldBatch& batch) {
    OutMatrix pre_t = log1p_weighted(batch.targets, batch.cos_theta_i);
    return loss_grad_impl(w.flat, batch.features, pre_t, batch.cos_theta_i, nullptr);
}

Eigen::VectorXd nf_grad(const NeuralFieldWeights& w, const FieldBatch& batch) {
    Eigen::VectorXd g(kFieldParamCount);
    nf_loss_and_grad(w, batch, &g);
    return g;
}

double nf_loss_and_grad(const NeuralFieldWeights& w, const FieldBatch& batch,
                        Eigen::VectorXd* grad) {
    OutMatrix pre_t = log1p_weighted(batch.targets, batch.cos_theta_i);
    return loss_grad_impl(w.flat, batch.features, pre_t, batch.cos_theta_i, grad);
}

FitResult nf_fit(const MeasuredBrdf& target, const FitConfig& cfg,
                 const NeuralFieldWeights& init) {
    const auto& gf = GridFeatures::instance();
    OutMatrix pre_t = gather_pre_targets(target, gf.cells, gf.cos_i);
    return fit_on_columns(gf.features, pre_t, gf.cos_i, cfg, init);
}

FitResult nf_fit_cells(const MeasuredBrdf& target, const std::vector<int>& cells,
                       const FitConfig& cfg, const NeuralFieldWeights& init) {
    const auto& geo = GridGeometry::instance();
    FeatMatrix feats(kFieldInput, static_cast<Eigen::Index>(cells.size()));
    Eigen::VectorXd cos_i(static_cast<Eigen::Index>(cells.size()));
    for (size_t n = 0; n < cells.size(); ++n) {
        int cell = cells[n];
        if (cell < 0 || cell >= kGridCells || !geo.valid(cell))
            throw ConfigError("training cell " + std::to_string(cell) +
                              " is not a valid grid cell");
        int k = cell % kPhiDBins;
        int rem = cell / kPhiDBins;
        feats.col(static_cast<Eigen::Index>(n)) = field_features(
            cell_center_angles(rem / kThetaDBins, rem % kThetaDBins, k));
        cos_i[static_cast<Eigen::Index>(n)] = geo.cos_theta_i(cell);
    }
    OutMatrix pre_t = gather_pre_targets(target, cells, cos_i);
    return fit_on_columns(feats, pre_t, cos_i, cfg, init);
}

MeasuredBrdf nf_export_tabulated(const NeuralFieldWeights& w) {
    MeasuredBrdf out;
    out.name = "field";
    Views v(w.flat);
    const auto& gf = GridFeatures::instance();
    const Eigen::Index n = gf.features.cols();
    const Eigen::Index chunk = 8192;
    Forward f;
    for (Eigen::Index s = 0; s < n; s += chunk) {
        Eigen::Index len = std::min(chunk, n - s);
        FeatMatrix xb = gf.features.middleCols(s, len);
        forward_pass(v, xb, f);
        for (Eigen::Index c = 0; c < len; ++c) {
            int cell = gf.cells[static_cast<size_t>(s + c)];
            for (int ch = 0; ch < 3; ++ch)
                out.values[static_cast<size_t>(ch) * kGridCells + cell] = f.p(ch, c);
        }
    }
    // Cells without a valid reconstruction still get the field's value so
    // the table is total; evaluate them directly.
    const auto& geo = GridGeometry::instance();
    for (int cell = 0; cell < kGridCells; ++cell) {
        if (geo.valid(cell)) continue;
        int k = cell % kPhiDBins;
        int rem = cell / kPhiDBins;
        Rgb val = nf_eval(w, cell_center_angles(rem / kThetaDBins, rem % kThetaDBins, k));
        for (int ch = 0; ch < 3; ++ch)
            out.values[static_cast<size_t>(ch) * kGridCells + cell] = val[ch];
    }
    return out;
}

} // namespace neumat
