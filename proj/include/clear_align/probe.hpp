#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "actstore.hpp"
#include "numkit.hpp"

namespace clear_align {

struct ProbeConfig {
    std::size_t iterations = 500;
    double lr = 0.1;
    double l2 = 0.0;
    // z-score features with training-split statistics before fitting
    bool standardize = true;
};

struct LinearProbe {
    Vector weights;
    double bias = 0.0;
    Vector mean;    // standardization applied before the linear map
    Vector scale;
    std::size_t iterations = 0;
    double lr = 0.0;
    double final_loss = 0.0;
    bool trained = false;
};

// Token-mean pooling: (B*T) x d slab to B x d.
inline Matrix pool_tokens(const Matrix& slab, std::size_t B, std::size_t T) {
    if (std::size_t(slab.rows()) != B * T) throw ShapeError("pool_tokens: slab rows != B*T");
    Matrix out(Eigen::Index(B), slab.cols());
    for (std::size_t i = 0; i < B; ++i)
        out.row(Eigen::Index(i)) = slab.middleRows(Eigen::Index(i * T), Eigen::Index(T)).colwise().mean();
    return out;
}

struct LogisticEval {
    double loss;
    Vector grad_w;
    double grad_b;
};

// Mean logistic loss (+ l2/2 |w|^2) and its gradient.
inline LogisticEval logistic_loss_grad(const Matrix& X, const std::vector<int>& y, const Vector& w, double b,
                                       double l2 = 0.0) {
    const double n = double(X.rows());
    const Vector z = (X * w).array() + b;
    Vector resid(z.size());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        // log(1 + exp(-z)) for y=1, log(1 + exp(z)) for y=0, computed stably
        const double s = y[std::size_t(i)] ? -z[i] : z[i];
        loss += s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
        resid[i] = 1.0 / (1.0 + std::exp(-z[i])) - double(y[std::size_t(i)]);
    }
    LogisticEval e;
    e.loss = loss / n + 0.5 * l2 * w.squaredNorm();
    e.grad_w = X.transpose() * resid / n + l2 * w;
    e.grad_b = resid.sum() / n;
    return e;
}

inline Matrix apply_standardization(const LinearProbe& p, const Matrix& X) {
    Matrix Z = X;
    Z.rowwise() -= p.mean.transpose();
    Z.array().rowwise() /= p.scale.transpose().array();
    return Z;
}

inline LinearProbe train_probe(const Matrix& X, const std::vector<int>& y, const ProbeConfig& cfg = {}) {
    if (std::size_t(X.rows()) != y.size()) throw ShapeError("probe rows and labels differ in length");
    const auto n1 = std::count(y.begin(), y.end(), 1);
    if (n1 == 0 || n1 == Eigen::Index(y.size())) throw ConfigError("probe training needs both classes present");

    LinearProbe p;
    p.mean = Vector::Zero(X.cols());
    p.scale = Vector::Ones(X.cols());
    if (cfg.standardize) {
        p.mean = X.colwise().mean().transpose();
        const Matrix centered = X.rowwise() - p.mean.transpose();
        p.scale = (centered.colwise().squaredNorm() / double(X.rows())).cwiseSqrt().transpose();
        p.scale.array() += 1e-12;
    }
    const Matrix Z = apply_standardization(p, X);
    p.weights = Vector::Zero(X.cols());
    p.bias = 0.0;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const auto e = logistic_loss_grad(Z, y, p.weights, p.bias, cfg.l2);
        p.weights -= cfg.lr * e.grad_w;
        p.bias -= cfg.lr * e.grad_b;
    }
    p.final_loss = logistic_loss_grad(Z, y, p.weights, p.bias, cfg.l2).loss;
    p.iterations = cfg.iterations;
    p.lr = cfg.lr;
    p.trained = true;
    return p;
}

inline double probe_error(const LinearProbe& p, const Matrix& X, const std::vector<int>& y) {
    if (!p.trained) throw ConfigError("probe used before training");
    if (y.empty()) throw ConfigError("probe evaluation set is empty");
    const Vector z = (apply_standardization(p, X) * p.weights).array() + p.bias;
    std::size_t wrong = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) wrong += int(z[i] > 0.0) != y[std::size_t(i)];
    return double(wrong) / double(y.size());
}

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

inline Split stratified_split(const std::vector<int>& y, double train_fraction, RngStream& rng) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0,1)");
    Split s;
    for (int cls : {1, 0}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y[i] == cls) idx.push_back(i);
        rng.shuffle(idx.begin(), idx.end());
        const auto n_train = std::size_t(std::llround(train_fraction * double(idx.size())));
        s.train.insert(s.train.end(), idx.begin(), idx.begin() + std::ptrdiff_t(n_train));
        s.test.insert(s.test.end(), idx.begin() + std::ptrdiff_t(n_train), idx.end());
    }
    return s;
}

namespace detail {
inline Matrix take_rows(const Matrix& X, const std::vector<std::size_t>& idx) { return gather_rows(X, idx); }
inline std::vector<int> take(const std::vector<int>& y, const std::vector<std::size_t>& idx) {
    std::vector<int> out;
    for (auto i : idx) out.push_back(y[i]);
    return out;
}
} // namespace detail

struct HeldOutError {
    double error;
    std::size_t n_train;
    std::size_t n_test;
};

inline HeldOutError probe_error_split(const Matrix& X, const std::vector<int>& y, double train_fraction,
                                      RngStream& rng, const ProbeConfig& cfg = {}) {
    const Split s = stratified_split(y, train_fraction, rng);
    const auto probe = train_probe(detail::take_rows(X, s.train), detail::take(y, s.train), cfg);
    return {probe_error(probe, detail::take_rows(X, s.test), detail::take(y, s.test)), s.train.size(), s.test.size()};
}

// Stratified k-fold cross-validated error: every instance is scored once.
inline double probe_error_cv(const Matrix& X, const std::vector<int>& y, std::size_t folds, RngStream& rng,
                             const ProbeConfig& cfg = {}) {
    if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
    std::vector<std::size_t> fold_of(y.size());
    for (int cls : {1, 0}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y[i] == cls) idx.push_back(i);
        rng.shuffle(idx.begin(), idx.end());
        for (std::size_t j = 0; j < idx.size(); ++j) fold_of[idx[j]] = j % folds;
    }
    std::size_t wrong = 0;
    for (std::size_t k = 0; k < folds; ++k) {
        std::vector<std::size_t> tr, te;
        for (std::size_t i = 0; i < y.size(); ++i) (fold_of[i] == k ? te : tr).push_back(i);
        if (te.empty()) continue;
        const auto probe = train_probe(detail::take_rows(X, tr), detail::take(y, tr), cfg);
        wrong += std::size_t(std::llround(probe_error(probe, detail::take_rows(X, te), detail::take(y, te)) * double(te.size())));
    }
    return double(wrong) / double(y.size());
}

inline std::vector<int> positive_indicator(const LayeredActivations& acts) {
    std::vector<int> y;
    for (Label l : acts.labels) y.push_back(l == Label::positive ? 1 : 0);
    return y;
}

struct ProbeCurve {
    std::vector<double> errors;
    std::vector<std::size_t> n_train;
    std::vector<std::size_t> n_test;
};

// One probe per layer on a stratified split; each layer gets its own stream
// so the curve does not depend on evaluation order.
inline ProbeCurve probe_curve(const LayeredActivations& acts, double train_fraction, std::uint64_t seed,
                              const ProbeConfig& cfg = {}, const std::vector<int>* labels = nullptr) {
    if (acts.L < 1) throw ConfigError("probe_curve needs at least one layer");
    const std::vector<int> y = labels ? *labels : positive_indicator(acts);
    ProbeCurve c;
    for (std::size_t l = 0; l < acts.L; ++l) {
        RngStream rng(seed, 0x9B0BE000ull + l);
        const auto r = probe_error_split(pool_tokens(acts.slabs[l], acts.B, acts.T), y, train_fraction, rng, cfg);
        c.errors.push_back(r.error);
        c.n_train.push_back(r.n_train);
        c.n_test.push_back(r.n_test);
    }
    return c;
}

} // namespace clear_align
