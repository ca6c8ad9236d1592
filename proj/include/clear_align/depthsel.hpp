#pragma once

#include <cstddef>

#include "numkit.hpp"

namespace clear_align {

// Logits are stored as log(alpha) directly; only log(alpha) enters the
// relaxation, so no positivity constraint is needed.
struct DepthPreference {
    Vector logits;
    double tau_max = 1.0;
    double tau_min = 0.1;
    std::size_t T_max = 600;

    DepthPreference() = default;
    DepthPreference(Eigen::Index L, double tmax, double tmin, std::size_t horizon)
        : logits(Vector::Zero(L)), tau_max(tmax), tau_min(tmin), T_max(horizon) {
        validate();
    }

    void validate() const {
        if (!(tau_max >= tau_min && tau_min > 0)) throw ConfigError("need tau_max >= tau_min > 0");
        if (T_max == 0) throw ConfigError("T_max must be >= 1");
        if (!logits.allFinite()) throw ConfigError("depth logits are not finite");
    }
};

struct AnnealResult {
    double tau;
    bool clamped;   // t was past T_max
};

inline AnnealResult anneal(const DepthPreference& pref, std::size_t t) {
    if (t > pref.T_max) return {pref.tau_min, true};
    return {pref.tau_max - (pref.tau_max - pref.tau_min) * double(t) / double(pref.T_max), false};
}

struct LayerDistribution {
    Vector p;
    double tau = 1.0;
    Vector g;   // noise used, kept for the Step 2 replay
};

inline Vector noisy_softmax(const Vector& logits, const Vector& g, double tau) {
    if (!(tau > 0)) throw ConfigError("temperature must be > 0");
    if (g.size() != logits.size()) throw ShapeError("noise length does not match logits");
    Vector z = (logits + g) / tau;
    z.array() -= z.maxCoeff();
    Vector p = z.array().exp();
    return p / p.sum();
}

inline LayerDistribution distribution_with_noise(const DepthPreference& pref, double tau, const Vector& g) {
    return {noisy_softmax(pref.logits, g, tau), tau, g};
}

inline LayerDistribution sample_layer_distribution(const DepthPreference& pref, double tau, RngStream& rng) {
    return distribution_with_noise(pref, tau, gumbel_draw(rng, pref.logits.size()));
}

// Vector-Jacobian product of p = softmax((logits + g)/tau).
inline Vector distribution_grad(const LayerDistribution& dist, const Vector& upstream) {
    if (upstream.size() != dist.p.size()) throw ShapeError("upstream length does not match L");
    const double mean = dist.p.dot(upstream);
    return (dist.p.array() * (upstream.array() - mean) / dist.tau).matrix();
}

// argmax with ties going to the smallest index.
inline std::size_t collapse(const Vector& logits) {
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[Eigen::Index(best)]) best = std::size_t(i);
    return best;
}

inline std::size_t collapse(const DepthPreference& pref) { return collapse(pref.logits); }

inline Vector softmax(const Vector& logits) { return noisy_softmax(logits, Vector::Zero(logits.size()), 1.0); }

} // namespace clear_align
