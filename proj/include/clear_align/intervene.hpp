#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "actstore.hpp"
#include "conceptsig.hpp"
#include "probe.hpp"
#include "sae.hpp"

namespace clear_align {

// v_tar = decode(encode(h) * m_spec), one row per input row.
inline Matrix concept_vectors(const Matrix& h, const SparseAutoencoder& sae, const ConceptMasks& masks) {
    if (masks.m_spec.size() != sae.d_sae()) throw ShapeError("mask length does not match d_sae");
    Matrix f = encode(sae, h);
    f.array().rowwise() *= masks.m_spec.transpose().array();
    return decode(sae, f);
}

inline Matrix erase(const Matrix& h, const SparseAutoencoder& sae, const ConceptMasks& masks, double gamma) {
    if (!std::isfinite(gamma)) throw ConfigError("gamma must be finite");
    if (gamma == 0.0) return h;
    return h - gamma * concept_vectors(h, sae, masks);
}

inline Matrix compose_same_layer(const Matrix& h, const SparseAutoencoder& sae, const std::vector<ConceptMasks>& masks,
                                 const std::vector<double>& gammas) {
    if (masks.size() != gammas.size()) throw ShapeError("compose_same_layer needs one gamma per mask");
    if (masks.empty()) return h;
    const Matrix f = encode(sae, h);
    Matrix out = h;
    for (std::size_t c = 0; c < masks.size(); ++c) {
        if (masks[c].m_spec.size() != sae.d_sae()) throw ShapeError("mask " + std::to_string(c) + " length does not match d_sae");
        Matrix fc = f;
        fc.array().rowwise() *= masks[c].m_spec.transpose().array();
        out -= gammas[c] * decode(sae, fc);
    }
    return out;
}

struct LayerIntervention {
    std::size_t layer = 0;
    double gamma = 0.0;
    const SparseAutoencoder* sae = nullptr;
    const ConceptMasks* masks = nullptr;
};

// Each configured layer is edited independently; nothing downstream is
// recomputed because the activations are a static dataset.
inline LayeredActivations erase_multi_layer(const LayeredActivations& acts, const std::vector<LayerIntervention>& plan) {
    LayeredActivations out = acts;
    for (const auto& step : plan) {
        if (step.layer >= acts.L) throw ConfigError("intervention layer " + std::to_string(step.layer) + " out of range");
        if (!step.sae || !step.masks)
            throw ConfigError("no SAE checkpoint and masks for layer " + std::to_string(step.layer));
        out.slabs[step.layer] = erase(out.slabs[step.layer], *step.sae, *step.masks, step.gamma);
    }
    return out;
}

inline Matrix steering_erase(const Matrix& h, const SteeringVector& sv, double gamma) {
    if (h.cols() != sv.direction.size()) throw ShapeError("steering direction width does not match activations");
    const double nrm = sv.direction.norm();
    if (!(nrm > 0.0)) throw ConfigError("steering vector has zero norm");
    const Vector v = sv.direction / nrm;
    const Vector proj = h * v;
    return h - gamma * proj * v.transpose();
}

// Mean over the given rows of <h_r, dir>^2.
inline double direction_energy(const Matrix& h, const Vector& dir, const std::vector<std::size_t>* rows = nullptr) {
    const Vector proj = h * dir;
    if (!rows) return proj.squaredNorm() / double(proj.size());
    double acc = 0.0;
    for (auto r : *rows) acc += proj[Eigen::Index(r)] * proj[Eigen::Index(r)];
    return acc / double(rows->size());
}

// The gamma that minimizes concept energy on the given rows. Erasure is
// affine in gamma so the energy is a quadratic with this vertex.
inline double calibrated_gamma(const Matrix& h, const Matrix& v_tar, const Vector& concept_dir,
                               const std::vector<std::size_t>& rows) {
    const Vector a = h * concept_dir, b = v_tar * concept_dir;
    double ab = 0.0, bb = 0.0;
    for (auto r : rows) {
        ab += a[Eigen::Index(r)] * b[Eigen::Index(r)];
        bb += b[Eigen::Index(r)] * b[Eigen::Index(r)];
    }
    return bb > 0.0 ? ab / bb : 0.0;
}

struct ErasureReport {
    std::optional<double> concept_energy_before, concept_energy_after;
    std::optional<double> control_energy_before, control_energy_after;
    double probe_error_target_before = 0.5, probe_error_target_after = 0.5;
    std::optional<double> probe_error_control_before, probe_error_control_after;

    double concept_reduction() const { return 1.0 - *concept_energy_after / *concept_energy_before; }
    double control_change() const { return *control_energy_after / *control_energy_before - 1.0; }
};

struct ReportOptions {
    std::size_t cv_folds = 5;
    std::uint64_t seed = 0;
    ProbeConfig probe;
    bool allow_probe_only = false;   // tolerate missing plant metadata
};

inline ErasureReport erasure_report(const LayeredActivations& before, const LayeredActivations& after, std::size_t layer,
                                    const ReportOptions& opt = {}) {
    if (before.L != after.L || before.B != after.B || before.T != after.T || before.d_model != after.d_model)
        throw ShapeError("before and after activations differ in shape");
    if (layer >= before.L) throw ConfigError("report layer out of range");
    const auto plant = plant_of(before);
    if (!plant && !opt.allow_probe_only) throw ConfigError("erasure report needs plant metadata");

    const Matrix& hb = before.slabs[layer];
    const Matrix& ha = after.slabs[layer];
    ErasureReport rep;
    const auto y = positive_indicator(before);
    auto cv = [&](const Matrix& slab, const std::vector<int>& lab, std::uint64_t tag) {
        RngStream rng(opt.seed, tag);
        return probe_error_cv(pool_tokens(slab, before.B, before.T), lab, opt.cv_folds, rng, opt.probe);
    };
    rep.probe_error_target_before = cv(hb, y, 0xE1);
    rep.probe_error_target_after = cv(ha, y, 0xE1);
    if (plant) {
        const auto pos_rows = before.rows_of(before.instances_with(Label::positive));
        rep.concept_energy_before = direction_energy(hb, plant->concept_dir, &pos_rows);
        rep.concept_energy_after = direction_energy(ha, plant->concept_dir, &pos_rows);
        rep.control_energy_before = direction_energy(hb, plant->control_dir);
        rep.control_energy_after = direction_energy(ha, plant->control_dir);
        const auto ctrl = control_present_of(before);
        rep.probe_error_control_before = cv(hb, ctrl, 0xE2);
        rep.probe_error_control_after = cv(ha, ctrl, 0xE2);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Per-layer scoring shared by the brute-force and stride oracles: concept
// energy removed on positives minus the absolute control-energy change, both
// in activation^2 units, maximized over a gamma grid.

struct LayerScore {
    double score = 0.0;
    double gamma = 0.0;
    double concept_removed = 0.0;
    double control_change = 0.0;
};

inline std::vector<double> default_gamma_grid() {
    std::vector<double> g;
    for (int i = 1; i <= 60; ++i) g.push_back(0.05 * i);
    return g;
}

inline LayerScore erasure_score(const Matrix& h, const SparseAutoencoder& sae, const ConceptMasks& masks,
                                const PlantSpec& plant, const std::vector<std::size_t>& pos_rows,
                                const std::vector<double>& grid = default_gamma_grid()) {
    const Matrix v = concept_vectors(h, sae, masks);
    const double c0 = direction_energy(h, plant.concept_dir, &pos_rows);
    const double k0 = direction_energy(h, plant.control_dir);
    LayerScore best;
    best.score = -std::numeric_limits<double>::infinity();
    for (double g : grid) {
        const Matrix hp = h - g * v;
        const double removed = c0 - direction_energy(hp, plant.concept_dir, &pos_rows);
        const double dk = direction_energy(hp, plant.control_dir) - k0;
        const double s = removed - std::abs(dk);
        if (s > best.score) best = {s, g, removed, dk};
    }
    return best;
}

// ---------------------------------------------------------------------------
// SAE erase vs steering at matched concept-energy reduction.

struct MatchedComparison {
    double target_reduction = 0.0;
    double sae_gamma = 0.0, sae_reduction = 0.0, sae_control_change = 0.0;
    double steer_gamma = 0.0, steer_reduction = 0.0, steer_control_change = 0.0;
};

namespace detail {
template <class F>
double bisect_increasing(F f, double target, double lo, double hi) {
    for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}
} // namespace detail

inline MatchedComparison compare_with_steering(const Matrix& h, const SparseAutoencoder& sae, const ConceptMasks& masks,
                                               const SteeringVector& sv, const PlantSpec& plant,
                                               const std::vector<std::size_t>& pos_rows, double max_target = 0.9) {
    const Matrix v = concept_vectors(h, sae, masks);
    const double c0 = direction_energy(h, plant.concept_dir, &pos_rows);
    const double k0 = direction_energy(h, plant.control_dir);
    auto sae_red = [&](double g) { return 1.0 - direction_energy(h - g * v, plant.concept_dir, &pos_rows) / c0; };
    auto steer_red = [&](double g) { return 1.0 - direction_energy(steering_erase(h, sv, g), plant.concept_dir, &pos_rows) / c0; };

    // Both reductions are concave quadratics in gamma; work on the rising branch.
    const double g_sae_peak = std::max(0.0, calibrated_gamma(h, v, plant.concept_dir, pos_rows));
    const Vector vhat = sv.direction.normalized();
    const Matrix steer_dir = (h * vhat) * vhat.transpose();
    const double g_steer_peak = std::clamp(calibrated_gamma(h, steer_dir, plant.concept_dir, pos_rows), 0.0, 1.0);

    MatchedComparison m;
    m.target_reduction = std::min({max_target, sae_red(g_sae_peak), steer_red(g_steer_peak)});
    m.sae_gamma = detail::bisect_increasing(sae_red, m.target_reduction, 0.0, g_sae_peak);
    m.steer_gamma = detail::bisect_increasing(steer_red, m.target_reduction, 0.0, g_steer_peak);
    m.sae_reduction = sae_red(m.sae_gamma);
    m.steer_reduction = steer_red(m.steer_gamma);
    m.sae_control_change = direction_energy(h - m.sae_gamma * v, plant.control_dir) / k0 - 1.0;
    m.steer_control_change = direction_energy(steering_erase(h, sv, m.steer_gamma), plant.control_dir) / k0 - 1.0;
    return m;
}

} // namespace clear_align
