#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "actstore.hpp"
#include "conceptsig.hpp"
#include "depthsel.hpp"
#include "intervene.hpp"
#include "probe.hpp"
#include "sae.hpp"

namespace clear_align {

enum class MaskSource { all_negatives, batch_negatives };

struct TrainConfig {
    double lambda = 0.3;
    double lr_theta = 1e-2;
    double lr_alpha = 3e-2;
    std::size_t batch_size = 16;
    std::size_t T_max = 600;
    double tau_max = 1.0;
    double tau_min = 0.1;
    std::uint64_t seed = 0;
    std::size_t d_sae = 256;
    double decoder_cap = 10.0;
    bool disable_con = false;
    std::optional<std::size_t> freeze_layer;
    MaskSource mask_source = MaskSource::all_negatives;
    PoolMode pool = PoolMode::mean;
    // Assert bit-equality of the frozen side in each half-step (costs copies).
    bool check_isolation = false;

    void validate() const {
        if (!(lambda >= 0)) throw ConfigError("train.lambda must be >= 0");
        if (!(lr_theta > 0) || !(lr_alpha > 0)) throw ConfigError("learning rates must be > 0");
        if (batch_size < 2 || batch_size % 2) throw ConfigError("train.batch_size must be even and >= 2");
        if (T_max == 0) throw ConfigError("train.T_max must be >= 1");
        if (!(tau_max >= tau_min && tau_min > 0)) throw ConfigError("need tau_max >= tau_min > 0");
        if (d_sae == 0) throw ConfigError("train.d_sae must be >= 1");
        if (!(decoder_cap > 0)) throw ConfigError("train.decoder_cap must be > 0");
    }
};

// h_mix = sum_l p_l h_l.
inline Matrix mix_slabs(const std::vector<Matrix>& slabs, const Vector& p) {
    if (std::size_t(p.size()) != slabs.size())
        throw ShapeError("mixing weights have length " + std::to_string(p.size()) + " but there are " +
                         std::to_string(slabs.size()) + " layers");
    Matrix out = p[0] * slabs[0];
    for (std::size_t l = 1; l < slabs.size(); ++l) out.noalias() += p[Eigen::Index(l)] * slabs[l];
    return out;
}

inline Matrix mix_activations(const LayeredActivations& acts, const LayerDistribution& dist) {
    return mix_slabs(acts.slabs, dist.p);
}

struct ClearObjective {
    SaeLossReport sae;
    SeparabilityScores scores;
    double l_con = 0.0;
    double value = 0.0;       // L_SAE (+ L_con unless disabled)
    Vector logit_grad;        // empty when not requested
};

// L_CLEAR at mixing weights dist.p over per-layer positive slabs, with the
// SAE and masks held constant. Optionally returns dL/dlogits through the
// replayed relaxation.
inline ClearObjective clear_objective(const SparseAutoencoder& sae, const ConceptMasks& masks,
                                      const std::vector<Matrix>& pos_slabs, const LayerDistribution& dist,
                                      double lambda, bool use_con, bool want_grad) {
    const Matrix h = mix_slabs(pos_slabs, dist.p);
    const Matrix pre = encode_preactivation(sae, h);
    const Matrix f = pre.cwiseMax(0.0);
    const Matrix h_hat = decode(sae, f);
    const double n = double(h.rows());

    ClearObjective out;
    out.sae = sae_loss(h, f, h_hat, lambda);
    out.scores = separability_scores(f, masks);
    out.l_con = contrastive_loss(out.scores);
    out.value = out.sae.total + (use_con ? out.l_con : 0.0);
    if (!want_grad) return out;

    const Matrix g_hat = (2.0 / n) * (h_hat - h);
    Matrix g_pre = g_hat * sae.W_dec;
    g_pre.array() += lambda / n;
    if (use_con) g_pre.rowwise() += contrastive_feature_grad(out.scores, masks, h.rows());
    g_pre = (pre.array() > 0.0).select(g_pre, 0.0);
    const Matrix g_h = g_pre * sae.W_enc - g_hat;

    Vector upstream(Eigen::Index(pos_slabs.size()));
    for (std::size_t l = 0; l < pos_slabs.size(); ++l)
        upstream[Eigen::Index(l)] = g_h.cwiseProduct(pos_slabs[l]).sum();
    out.logit_grad = distribution_grad(dist, upstream);
    return out;
}

struct IterationRecord {
    std::size_t t = 0;
    double tau = 0.0;
    double l_sae = 0.0;
    double l_con = 0.0;
    Vector p;
};

class SearchState {
public:
    // stream_base separates the random streams of independent runs that share
    // a seed (e.g. per-layer oracle trainings).
    SearchState(const TrainConfig& cfg, const LayeredActivations& acts, std::uint64_t stream_base = 0)
        : cfg_(cfg), acts_(acts) {
        cfg_.validate();
        acts_.validate();
        if (acts_.L < 1) throw ConfigError("search needs at least one layer");
        if (cfg_.freeze_layer && *cfg_.freeze_layer >= acts_.L) throw ConfigError("freeze layer out of range");
        pos_ = acts_.instances_with(Label::positive);
        neg_ = acts_.instances_with(Label::negative);
        if (pos_.empty() || neg_.empty()) throw ConfigError("search needs both positive and negative instances");
        if (cfg_.d_sae < acts_.d_model) throw ConfigError("train.d_sae must be >= d_model");

        const RngStream root(cfg_.seed, stream_base);
        RngStream init = root.split(1);
        gumbel_ = root.split(2);
        batch_ = root.split(3);

        sae_ = init_sae(Eigen::Index(acts_.d_model), Eigen::Index(cfg_.d_sae), init);
        opt_ = SaeOptimizer(sae_, cfg_.lr_theta);
        opt_.decoder_cap = cfg_.decoder_cap;
        pref_ = DepthPreference(Eigen::Index(acts_.L), cfg_.tau_max, cfg_.tau_min, cfg_.T_max);
        alpha_opt_ = AdamState<Vector>(pref_.logits, cfg_.lr_alpha);

        const auto neg_rows = acts_.rows_of(neg_);
        for (const auto& s : acts_.slabs) all_neg_.push_back(gather_rows(s, neg_rows));
        pos_cursor_ = pos_.size();
        neg_cursor_ = neg_.size();
    }

    IterationRecord step() {
        IterationRecord rec;
        rec.t = t_;
        const AnnealResult an = anneal(pref_, t_);
        rec.tau = an.tau;

        LayerDistribution dist;
        if (cfg_.freeze_layer) {
            dist.p = Vector::Zero(Eigen::Index(acts_.L));
            dist.p[Eigen::Index(*cfg_.freeze_layer)] = 1.0;
            dist.g = Vector::Zero(Eigen::Index(acts_.L));
            dist.tau = an.tau;
        } else {
            dist = sample_layer_distribution(pref_, an.tau, gumbel_);
        }
        rec.p = dist.p;

        const std::size_t half = cfg_.batch_size / 2;
        const auto pos_rows = acts_.rows_of(draw(pos_, pos_cursor_, half));
        const auto neg_batch = draw(neg_, neg_cursor_, half);
        std::vector<Matrix> pos_slabs;
        pos_slabs.reserve(acts_.L);
        for (const auto& s : acts_.slabs) pos_slabs.push_back(gather_rows(s, pos_rows));
        const Matrix h_mix = mix_slabs(pos_slabs, dist.p);

        // Step 1: theta update, alpha frozen.
        const Vector logits_before = cfg_.check_isolation ? pref_.logits : Vector();
        const SaeGrads grads = sae_grads(sae_, h_mix, cfg_.lambda);
        ++sae_grad_evals_;
        if (!std::isfinite(grads.loss.total)) throw DivergenceError(t_, grads.loss.total, 0.0);
        opt_.step(sae_, grads);
        if (cfg_.check_isolation && !(pref_.logits.array() == logits_before.array()).all())
            throw Error("step isolation violated: Step 1 changed the depth logits", 2);

        // Masks from the negative features under the updated SAE.
        Matrix h_neg;
        if (cfg_.mask_source == MaskSource::all_negatives) {
            h_neg = mix_slabs(all_neg_, dist.p);
        } else {
            const auto neg_rows = acts_.rows_of(neg_batch);
            std::vector<Matrix> neg_slabs;
            for (const auto& s : acts_.slabs) neg_slabs.push_back(gather_rows(s, neg_rows));
            h_neg = mix_slabs(neg_slabs, dist.p);
        }
        masks_ = build_masks(negative_pool(encode(sae_, h_neg), cfg_.pool));

        // Step 2: alpha update, theta frozen, masks constant.
        const SparseAutoencoder sae_before = cfg_.check_isolation ? sae_ : SparseAutoencoder();
        const bool update_alpha = !cfg_.freeze_layer.has_value();
        const ClearObjective obj =
            clear_objective(sae_, masks_, pos_slabs, dist, cfg_.lambda, !cfg_.disable_con, update_alpha);
        rec.l_sae = obj.sae.total;
        rec.l_con = obj.l_con;
        if (!std::isfinite(obj.sae.total) || !std::isfinite(obj.l_con) ||
            (update_alpha && !obj.logit_grad.allFinite()))
            throw DivergenceError(t_, obj.sae.total, obj.l_con);
        if (update_alpha) adam_step(alpha_opt_, pref_.logits, obj.logit_grad);
        if (cfg_.check_isolation &&
            !((sae_.W_enc.array() == sae_before.W_enc.array()).all() &&
              (sae_.b_enc.array() == sae_before.b_enc.array()).all() &&
              (sae_.W_dec.array() == sae_before.W_dec.array()).all()))
            throw Error("step isolation violated: Step 2 changed SAE weights", 2);

        ++t_;
        return rec;
    }

    const SparseAutoencoder& sae() const { return sae_; }
    const DepthPreference& preference() const { return pref_; }
    const ConceptMasks& last_masks() const { return masks_; }
    std::size_t iteration() const { return t_; }
    std::uint64_t sae_grad_evals() const { return sae_grad_evals_; }
    const TrainConfig& config() const { return cfg_; }

private:
    // Next k instances of a pool, reshuffling at each epoch boundary.
    std::vector<std::size_t> draw(std::vector<std::size_t>& pool, std::size_t& cursor, std::size_t k) {
        std::vector<std::size_t> out;
        while (out.size() < k) {
            if (cursor >= pool.size()) {
                batch_.shuffle(pool.begin(), pool.end());
                cursor = 0;
            }
            out.push_back(pool[cursor++]);
        }
        return out;
    }

    TrainConfig cfg_;
    const LayeredActivations& acts_;
    std::vector<std::size_t> pos_, neg_;
    std::size_t pos_cursor_ = 0, neg_cursor_ = 0;
    std::vector<Matrix> all_neg_;
    RngStream gumbel_, batch_;
    SparseAutoencoder sae_;
    SaeOptimizer opt_;
    DepthPreference pref_;
    AdamState<Vector> alpha_opt_;
    ConceptMasks masks_;
    std::size_t t_ = 0;
    std::uint64_t sae_grad_evals_ = 0;
};

// Masks for one layer from all negative rows under a given SAE.
inline ConceptMasks layer_masks(const SparseAutoencoder& sae, const LayeredActivations& acts, std::size_t layer,
                                PoolMode pool = PoolMode::mean) {
    const auto rows = acts.rows_of(acts.instances_with(Label::negative));
    return build_masks(negative_pool(encode(sae, gather_rows(acts.slabs[layer], rows)), pool));
}

struct SearchResult {
    std::size_t l_star = 0;
    Vector logits;
    double max_prob = 0.0;
    SparseAutoencoder sae;
    ConceptMasks masks;   // recomputed at l* under the final SAE
    std::vector<IterationRecord> trace;
    double wall_clock_s = 0.0;
    std::uint64_t sae_grad_evals = 0;
};

inline SearchResult run_search(const TrainConfig& cfg, const LayeredActivations& acts, std::uint64_t stream_base = 0) {
    if (acts.L < 2 && !cfg.freeze_layer) throw ConfigError("search needs at least two layers");
    const auto t0 = std::chrono::steady_clock::now();
    SearchState st(cfg, acts, stream_base);
    SearchResult res;
    res.trace.reserve(cfg.T_max);
    for (std::size_t t = 0; t < cfg.T_max; ++t) res.trace.push_back(st.step());
    res.logits = st.preference().logits;
    res.l_star = cfg.freeze_layer ? *cfg.freeze_layer : collapse(res.logits);
    res.max_prob = softmax(res.logits).maxCoeff();
    res.sae = st.sae();
    res.masks = layer_masks(res.sae, acts, res.l_star, cfg.pool);
    res.sae_grad_evals = st.sae_grad_evals();
    res.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// ---------------------------------------------------------------------------
// Oracles.

struct OracleLayer {
    std::size_t layer = 0;
    bool diverged = false;
    std::string error;
    LayerScore score;
    double probe_error = 0.5;
    SparseAutoencoder sae;
    ConceptMasks masks;
};

struct OracleResult {
    std::string mode;
    std::vector<OracleLayer> layers;   // one per evaluated layer
    std::size_t best_layer = 0;
    bool no_clear_optimum = false;
    std::size_t trainings = 0;
    std::uint64_t sae_grad_evals = 0;
    double wall_clock_s = 0.0;
};

// Flat score tables: the winner's margin over the runner-up is within twice
// the spread of the lower half of the table.
inline bool flat_scores(std::vector<double> scores) {
    if (scores.size() < 2) return true;
    std::sort(scores.begin(), scores.end(), std::greater<>());
    const std::size_t lo = scores.size() / 2;
    const std::vector<double> bottom(scores.begin() + std::ptrdiff_t(lo), scores.end());
    double mean = 0.0;
    for (double s : bottom) mean += s;
    mean /= double(bottom.size());
    double var = 0.0;
    for (double s : bottom) var += (s - mean) * (s - mean);
    const double sd = bottom.size() > 1 ? std::sqrt(var / double(bottom.size() - 1)) : 0.0;
    return scores[0] - scores[1] <= 2.0 * sd;
}

inline OracleLayer train_and_score_layer(const TrainConfig& cfg, const LayeredActivations& acts, const PlantSpec& plant,
                                         std::size_t layer) {
    OracleLayer out;
    out.layer = layer;
    TrainConfig lc = cfg;
    lc.freeze_layer = layer;
    try {
        const SearchResult r = run_search(lc, acts, 0x0AC1E000ull + layer);
        out.sae = r.sae;
        out.masks = r.masks;
        const auto pos_rows = acts.rows_of(acts.instances_with(Label::positive));
        out.score = erasure_score(acts.slabs[layer], out.sae, out.masks, plant, pos_rows);
        RngStream prng(cfg.seed, 0x9B0BE000ull + layer);
        out.probe_error =
            probe_error_split(pool_tokens(acts.slabs[layer], acts.B, acts.T), positive_indicator(acts), 0.8, prng).error;
    } catch (const DivergenceError& e) {
        out.diverged = true;
        out.error = e.what();
    }
    return out;
}

inline OracleResult oracle_over_layers(const TrainConfig& cfg, const LayeredActivations& acts,
                                       const std::vector<std::size_t>& layers, const std::string& mode,
                                       std::size_t jobs = 1) {
    const auto plant = plant_of(acts);
    if (!plant) throw ConfigError("oracle scoring needs plant metadata (concept and control directions)");
    const auto t0 = std::chrono::steady_clock::now();
    OracleResult res;
    res.mode = mode;
    res.layers.resize(layers.size());
    jobs = std::max<std::size_t>(1, std::min(jobs, layers.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < layers.size(); ++i) res.layers[i] = train_and_score_layer(cfg, acts, *plant, layers[i]);
    } else {
        // Layers are dealt round-robin; each writes only its own slot.
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < jobs; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < layers.size(); i += jobs)
                    res.layers[i] = train_and_score_layer(cfg, acts, *plant, layers[i]);
            });
        for (auto& th : pool) th.join();
    }
    res.trainings = layers.size();
    res.sae_grad_evals = layers.size() * cfg.T_max;

    std::vector<double> valid;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& ol : res.layers) {
        if (ol.diverged) continue;
        valid.push_back(ol.score.score);
        if (ol.score.score > best) {
            best = ol.score.score;
            res.best_layer = ol.layer;
        }
    }
    if (valid.empty()) throw Error("every oracle layer diverged", 2);
    res.no_clear_optimum = flat_scores(valid);
    res.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

inline OracleResult brute_force_search(const TrainConfig& cfg, const LayeredActivations& acts, std::size_t jobs = 1) {
    std::vector<std::size_t> layers(acts.L);
    for (std::size_t l = 0; l < acts.L; ++l) layers[l] = l;
    return oracle_over_layers(cfg, acts, layers, "brute", jobs);
}

inline OracleResult stride_search(const TrainConfig& cfg, const LayeredActivations& acts, std::size_t stride = 4,
                                  std::size_t jobs = 1) {
    if (stride == 0) throw ConfigError("stride must be >= 1");
    std::vector<std::size_t> layers;
    for (std::size_t l = 0; l < acts.L; l += stride) layers.push_back(l);
    return oracle_over_layers(cfg, acts, layers, "stride", jobs);
}

} // namespace clear_align
