#pragma once

// Shared instances and finite-difference oracles for the unit tests and the
// acceptance binary.

#include <cmath>
#include <cstdint>

#include <clear_align/runconfig.hpp>
#include <clear_align/searchtrain.hpp>

namespace clear_align::testing {

// Planted data generated the way the CLI does it for a given seed.
inline LayeredActivations planted(const nlohmann::json& overrides, std::uint64_t seed) {
    RunConfig cfg;
    cfg.merge(overrides, "fixture");
    const PlantSpec spec = cfg.plant_spec();
    RngStream rng(seed, 0x6E6E);
    return generate_planted(spec, rng);
}

// The evaluation convention used by the family sweeps: basis seed 100+s,
// data stream (100+s, 7), training seed s.
inline LayeredActivations family_data(const std::string& family, std::uint64_t s, nlohmann::json extra = {}) {
    nlohmann::json o = {{"plant.family", family}, {"plant.basis_seed", 100 + s}};
    if (family == "decoy") o["plant.planted_layer"] = 9;
    if (extra.is_object()) o.update(extra);
    RunConfig cfg;
    cfg.merge(o, "fixture");
    RngStream rng(100 + s, 7);
    return generate_planted(cfg.plant_spec(), rng);
}

inline TrainConfig desk_train(std::uint64_t seed) {
    TrainConfig c;
    c.seed = seed;
    return c;
}

// Tiny instance for gradient checks: d_model=8, d_sae=32, L=4, B=8, T=3.
inline LayeredActivations tiny_acts(std::uint64_t seed) {
    return planted({{"plant.L", 4}, {"plant.B", 8}, {"plant.T", 3}, {"plant.d_model", 8}, {"plant.planted_layer", 2},
                    {"plant.sigma", 0.3}, {"plant.basis_seed", seed + 1}},
                   seed);
}

struct GradCheck {
    double sae_rel_error = 0.0;
    double logit_rel_error = 0.0;
};

namespace detail {

inline Vector flat_params(const SparseAutoencoder& s) {
    Vector v(s.W_enc.size() + s.b_enc.size() + s.W_dec.size());
    v << Eigen::Map<const Vector>(s.W_enc.data(), s.W_enc.size()), s.b_enc,
        Eigen::Map<const Vector>(s.W_dec.data(), s.W_dec.size());
    return v;
}

inline SparseAutoencoder from_flat(const Vector& v, const SparseAutoencoder& like) {
    SparseAutoencoder s = like;
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < s.W_enc.size(); ++i) s.W_enc.data()[i] = v[k++];
    for (Eigen::Index i = 0; i < s.b_enc.size(); ++i) s.b_enc[i] = v[k++];
    for (Eigen::Index i = 0; i < s.W_dec.size(); ++i) s.W_dec.data()[i] = v[k++];
    return s;
}

inline double min_abs_preactivation(const SparseAutoencoder& sae, const Matrix& h) {
    return encode_preactivation(sae, h).cwiseAbs().minCoeff();
}

} // namespace detail

// Analytic vs central-difference gradients on one tiny planted instance:
// L_SAE w.r.t. all SAE weights on the mixed positives, and L_CLEAR w.r.t. the
// depth logits with Gumbel noise replayed and masks frozen. The SAE is
// briefly trained first so features are neither all-dead nor all-live, and
// the instance is re-drawn if any pre-activation sits within 1e-4 of the
// ReLU kink.
inline GradCheck gradient_check(std::uint64_t seed) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        const LayeredActivations acts = tiny_acts(seed * 1000 + attempt);
        TrainConfig cfg;
        cfg.seed = seed;
        cfg.d_sae = 32;
        cfg.T_max = 50;
        cfg.batch_size = 8;
        SearchState st(cfg, acts);
        for (int i = 0; i < 20; ++i) st.step();
        const SparseAutoencoder sae = st.sae();

        RngStream rng(seed, 0x6C4);
        const LayerDistribution dist = sample_layer_distribution(st.preference(), 0.5, rng);
        const auto pos_rows = acts.rows_of(acts.instances_with(Label::positive));
        std::vector<Matrix> pos_slabs;
        for (const auto& s : acts.slabs) pos_slabs.push_back(gather_rows(s, pos_rows));
        const Matrix h = mix_slabs(pos_slabs, dist.p);
        if (detail::min_abs_preactivation(sae, h) < 1e-4) continue;
        const ConceptMasks masks = layer_masks(sae, acts, 2);
        const double lambda = 0.3;

        GradCheck out;
        {
            const SaeGrads g = sae_grads(sae, h, lambda);
            SparseAutoencoder gs = sae;
            gs.W_enc = g.W_enc;
            gs.b_enc = g.b_enc;
            gs.W_dec = g.W_dec;
            const Vector numeric = finite_diff_grad(
                [&](const Vector& v) {
                    const SparseAutoencoder s = detail::from_flat(v, sae);
                    const Matrix f = encode(s, h);
                    return sae_loss(h, f, decode(s, f), lambda).total;
                },
                detail::flat_params(sae), 1e-6);
            out.sae_rel_error = relative_error(detail::flat_params(gs), numeric);
        }
        {
            const ClearObjective obj = clear_objective(sae, masks, pos_slabs, dist, lambda, true, true);
            const Vector numeric = finite_diff_grad(
                [&](const Vector& logits) {
                    const LayerDistribution d{noisy_softmax(logits, dist.g, dist.tau), dist.tau, dist.g};
                    return clear_objective(sae, masks, pos_slabs, d, lambda, true, false).value;
                },
                st.preference().logits, 1e-6);
            out.logit_rel_error = relative_error(obj.logit_grad, numeric);
        }
        return out;
    }
}

// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& x) {
        std::vector<std::size_t> idx(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return x[i] < x[j]; });
        std::vector<double> r(x.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * double(i + j) + 1.0;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double n = double(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += ra[i], mb += rb[i];
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

} // namespace clear_align::testing
