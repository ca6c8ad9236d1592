// Acceptance run: one PASS/FAIL line per criterion, with the measured numbers
// behind each verdict. Exit status is non-zero if any criterion fails.
//
// Seed convention for the family sweeps (shared with the unit tests): seed s
// uses basis seed 100+s, data stream (100+s, 7) and training seed s.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include <clear_align/intervene.hpp>
#include <clear_align/runio.hpp>

#include "fixtures.hpp"

using namespace clear_align;
using namespace clear_align::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

template <class... A>
std::string fmtv(const char* f, A... a) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, a...);
    return buf;
}

constexpr std::uint64_t kSeeds = 10;

// One search and one brute-force oracle per seed, shared by several criteria.
struct SeedRun {
    SearchResult search;
    OracleResult brute;
};

std::vector<SeedRun> sweep(const std::string& family) {
    std::vector<SeedRun> out;
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        const auto acts = family_data(family, s);
        out.push_back({run_search(desk_train(s), acts), brute_force_search(desk_train(s), acts)});
    }
    return out;
}

std::size_t layer_distance(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

Verdict gradient_correctness() {
    const auto t0 = Clock::now();
    double worst_sae = 0, worst_logit = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto g = gradient_check(s);
        worst_sae = std::max(worst_sae, g.sae_rel_error);
        worst_logit = std::max(worst_logit, g.logit_rel_error);
    }
    const double secs = seconds_since(t0);
    return {worst_sae <= 1e-4 && worst_logit <= 1e-4 && secs < 10.0,
            fmtv("worst rel err SAE %.2e, logits %.2e over 20 seeds in %.2fs", worst_sae, worst_logit, secs)};
}

Verdict gumbel_contract() {
    RngStream rng(2024, 1);
    double worst_sum = 0, worst_shift = 0, min_argmax = 1;
    for (int i = 0; i < 10000; ++i) {
        const Eigen::Index L = 2 + Eigen::Index(rng.uniform_int(23));
        const Vector logits = random_normal(L, 1, rng, 3.0);
        const Vector g = gumbel_draw(rng, L);
        const double tau = rng.uniform(0.001, 2.0);
        const Vector p = noisy_softmax(logits, g, tau);
        worst_sum = std::max(worst_sum, std::abs(p.sum() - 1.0));
        const Vector ps = noisy_softmax((logits.array() + rng.uniform(-100, 100)).matrix(), g, tau);
        worst_shift = std::max(worst_shift, (p - ps).cwiseAbs().maxCoeff());
    }
    // Argmax dominance on draws whose top two perturbed logits differ by at
    // least 0.01; closer pairs need a temperature below 0.001 to separate.
    int checked = 0;
    for (int i = 0; i < 1000; ++i) {
        const Vector logits = random_normal(8, 1, rng);
        const Vector g = gumbel_draw(rng, 8);
        Vector z = logits + g;
        Eigen::Index arg;
        z.maxCoeff(&arg);
        std::sort(z.data(), z.data() + z.size());
        if (z[7] - z[6] < 0.01) continue;
        min_argmax = std::min(min_argmax, noisy_softmax(logits, g, 0.001)[arg]);
        ++checked;
    }
    return {worst_sum <= 1e-12 && worst_shift <= 1e-12 && min_argmax > 0.999,
            fmtv("max |sum-1| %.1e, max shift diff %.1e, min argmax p %.6f over %d draws", worst_sum, worst_shift,
                 min_argmax, checked)};
}

Verdict anneal_exactness() {
    bool ok = true;
    std::string detail;
    for (std::size_t T : {600u, 2500u, 7u}) {
        const DepthPreference pref(12, 1.0, 0.1, T);
        for (std::size_t t : {std::size_t(0), T / 2, T}) {
            const double want = 1.0 - 0.9 * double(t) / double(T);
            const double got = anneal(pref, t).tau;
            ok = ok && got == want;
        }
    }
    const DepthPreference pref(12, 1.0, 0.1, 600);
    detail = fmtv("tau(0)=%.17g tau(300)=%.17g tau(600)=%.17g", anneal(pref, 0).tau, anneal(pref, 300).tau,
                  anneal(pref, 600).tau);
    return {ok, detail};
}

Verdict near_one_hot(const std::vector<SeedRun>& onehot) {
    int hits = 0;
    double slowest = 0;
    std::string probs;
    for (const auto& r : onehot) {
        hits += r.search.max_prob >= 0.9;
        slowest = std::max(slowest, r.search.wall_clock_s);
        probs += fmt(" %.3f", r.search.max_prob);
    }
    return {hits >= 8 && slowest < 60.0, fmtv("%d/10 seeds with max prob >= 0.9 (slowest %.2fs); max probs:", hits, slowest) + probs};
}

Verdict recovery_vs_oracle(const std::vector<SeedRun>& mono, const std::vector<SeedRun>& onehot) {
    auto count = [](const std::vector<SeedRun>& runs, std::string& pairs) {
        int n = 0;
        for (const auto& r : runs) {
            n += layer_distance(r.search.l_star, r.brute.best_layer) <= 1;
            pairs += fmtv(" %zu/%zu", r.search.l_star, r.brute.best_layer);
        }
        return n;
    };
    std::string pm, po;
    const int m = count(mono, pm), o = count(onehot, po);
    return {m >= 8 && o >= 8,
            fmtv("within +-1 of brute force: mono %d/10, onehot %d/10; search/brute mono:", m, o) + pm + "; onehot:" + po};
}

Verdict con_necessity() {
    int full = 0, ablated = 0;
    std::string detail;
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        const auto acts = family_data("decoy", s);
        const auto oracle = brute_force_search(desk_train(s), acts);
        const auto with = run_search(desk_train(s), acts);
        auto cfg = desk_train(s);
        cfg.disable_con = true;
        const auto without = run_search(cfg, acts);
        full += layer_distance(with.l_star, oracle.best_layer) <= 1;
        ablated += layer_distance(without.l_star, oracle.best_layer) <= 1;
        detail += fmtv(" %zu/%zu/%zu", oracle.best_layer, with.l_star, without.l_star);
    }
    return {ablated < full, fmtv("recovery full %d/10, without L_con %d/10; oracle/full/ablated:", full, ablated) + detail};
}

Verdict cost_accounting(const std::vector<SeedRun>& onehot) {
    bool counters = true;
    double search_s = 0, brute_s = 0;
    for (const auto& r : onehot) {
        counters = counters && r.search.sae_grad_evals == 600 && r.brute.sae_grad_evals == 12u * 600u &&
                   r.brute.trainings == 12;
        search_s += r.search.wall_clock_s;
        brute_s += r.brute.wall_clock_s;
    }
    const double ratio = brute_s / search_s;
    return {counters && ratio >= 6.0,
            fmtv("counters %s (search 600, brute 7200); wall-clock brute/search %.2f (%.1fs / %.1fs over 10 seeds)",
                 counters ? "exact" : "WRONG", ratio, brute_s, search_s)};
}

Verdict intervention_efficacy() {
    const auto acts = family_data("onehot", 0);
    const auto run = run_search(desk_train(0), acts);
    const PlantSpec plant = *plant_of(acts);
    const std::size_t l = run.l_star;
    const auto pos_rows = acts.rows_of(acts.instances_with(Label::positive));
    const double gstar =
        calibrated_gamma(acts.slabs[l], concept_vectors(acts.slabs[l], run.sae, run.masks), plant.concept_dir, pos_rows);
    const auto after = erase_multi_layer(acts, {{l, gstar, &run.sae, &run.masks}});
    const auto rep = erasure_report(acts, after, l);
    const double red = rep.concept_reduction(), ctrl = rep.control_change();
    const double ctrl_probe_move = std::abs(*rep.probe_error_control_after - *rep.probe_error_control_before);
    const bool ok = red >= 0.8 && std::abs(ctrl) <= 0.10 && rep.probe_error_target_before <= 0.05 &&
                    rep.probe_error_target_after >= 0.40 && ctrl_probe_move <= 0.05;
    return {ok, fmtv("layer %zu gamma %.3f: concept energy -%.1f%%, control %+.1f%%, target probe %.3f -> %.3f, "
                     "control probe %.3f -> %.3f",
                     l, gstar, 100 * red, 100 * ctrl, rep.probe_error_target_before, rep.probe_error_target_after,
                     *rep.probe_error_control_before, *rep.probe_error_control_after)};
}

Verdict loss_identities() {
    bool ok = contrastive_loss({1.0, 0.0}) == 0.0 && contrastive_loss({37.0, 0.0}) == 0.0;
    double worst_ln2 = 0;
    for (double s : {1.0, 2.5, 10.0, 1e3, 1e6}) worst_ln2 = std::max(worst_ln2, std::abs(contrastive_loss({s, s}) - std::log(2.0)));
    ok = ok && worst_ln2 <= 1e-9;
    RngStream rng(9, 9);
    bool complement = true, identity = true;
    for (int i = 0; i < 100; ++i) {
        const auto m = build_masks(random_normal(64, 1, rng, 2.0).cwiseAbs());
        for (Eigen::Index k = 0; k < 64; ++k) complement = complement && m.m_shared[k] + m.m_spec[k] == 1.0;
        const auto sae = init_sae(8, 64, rng);
        const Matrix h = random_normal(12, 8, rng);
        identity = identity && erase(h, sae, m, 0.0) == h;
    }
    return {ok && complement && identity, fmtv("L_con(S_uni=0)=0, max |L_con-ln2| %.1e, complement %s, erase(gamma=0) %s",
                                               worst_ln2, complement ? "exact" : "BROKEN", identity ? "exact" : "BROKEN")};
}

template <class E, class F>
bool throws(F f) {
    try {
        f();
    } catch (const E&) {
        return true;
    } catch (...) {
        return false;
    }
    return false;
}

Verdict determinism_and_format() {
    const auto acts = family_data("onehot", 3);
    const auto a = run_search(desk_train(3), acts), b = run_search(desk_train(3), acts);
    const bool trace = trace_csv(a.trace, 12) == trace_csv(b.trace, 12);
    const bool result = search_result_json(a).dump(2) == search_result_json(b).dump(2);

    const std::string act_bytes = serialize_activations(acts);
    const auto back = deserialize_activations(act_bytes);
    bool act_rt = serialize_activations(back) == act_bytes && back.labels == acts.labels;
    for (std::size_t l = 0; l < acts.L; ++l) act_rt = act_rt && back.slabs[l] == acts.slabs[l];
    const std::string sae_bytes = serialize_sae(a.sae);
    const auto sae_back = deserialize_sae(sae_bytes);
    const bool sae_rt = serialize_sae(sae_back) == sae_bytes && sae_back.W_enc == a.sae.W_enc &&
                        sae_back.b_enc == a.sae.b_enc && sae_back.W_dec == a.sae.W_dec;
    const std::string mask_bytes = serialize_masks(a.masks);
    const bool mask_rt = serialize_masks(deserialize_masks(mask_bytes)) == mask_bytes;

    auto with_byte = [](std::string s, std::size_t at, char c) {
        s[at] = c;
        return s;
    };
    auto with_u32 = [](std::string s, std::size_t at, std::uint32_t v) {
        std::memcpy(s.data() + at, &v, 4);
        return s;
    };
    const bool rejects =
        throws<FormatError>([&] { deserialize_activations(with_byte(act_bytes, 0, 'X')); }) &&
        throws<FormatError>([&] { deserialize_activations(with_u32(act_bytes, 4, 2)); }) &&
        throws<CorruptionError>([&] { deserialize_activations(act_bytes.substr(0, act_bytes.size() / 2)); }) &&
        throws<CorruptionError>([&] { deserialize_activations(with_byte(act_bytes, 24, 9)); }) &&
        throws<FormatError>([&] { deserialize_sae(with_byte(sae_bytes, 3, 'X')); }) &&
        throws<FormatError>([&] { deserialize_sae(with_u32(sae_bytes, 4, 7)); }) &&
        throws<CorruptionError>([&] { deserialize_sae(sae_bytes.substr(0, sae_bytes.size() - 8)); }) &&
        throws<FormatError>([&] { deserialize_masks(with_byte(mask_bytes, 1, 'X')); }) &&
        throws<CorruptionError>([&] { deserialize_masks(mask_bytes.substr(0, mask_bytes.size() - 1)); });
    const bool ok = trace && result && act_rt && sae_rt && mask_rt && rejects;
    return {ok, fmtv("trace.csv %s, result.json %s, round trips act/sae/mask %d/%d/%d, corrupt headers %s",
                     trace ? "identical" : "DIFFER", result ? "identical" : "DIFFER", int(act_rt), int(sae_rt),
                     int(mask_rt), rejects ? "rejected" : "NOT REJECTED")};
}

Verdict steering_separation() {
    int wins = 0, matched = 0;
    std::string detail;
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        const auto acts = family_data("onehot", s, {{"plant.control_coupling", 0.5}});
        const auto r = run_search(desk_train(s), acts);
        const PlantSpec plant = *plant_of(acts);
        const std::size_t l = r.l_star;
        const auto pos_rows = acts.rows_of(acts.instances_with(Label::positive));
        const auto neg_rows = acts.rows_of(acts.instances_with(Label::negative));
        const auto sv = steering_vector(gather_rows(acts.slabs[l], pos_rows), gather_rows(acts.slabs[l], neg_rows));
        const auto m = compare_with_steering(acts.slabs[l], r.sae, r.masks, sv, plant, pos_rows);
        const bool match = std::abs(m.sae_reduction - m.target_reduction) <= 0.05 * m.target_reduction &&
                           std::abs(m.steer_reduction - m.target_reduction) <= 0.05 * m.target_reduction;
        matched += match;
        wins += match && std::abs(m.steer_control_change) > std::abs(m.sae_control_change);
        detail += fmtv(" [%.2f: %.3f vs %.3f]", m.target_reduction, std::abs(m.sae_control_change),
                       std::abs(m.steer_control_change));
    }
    return {wins >= 8, fmtv("steering damages control more in %d/10 seeds (%d matched); [target: |ctrl| SAE vs steering]:",
                            wins, matched) +
                           detail};
}

} // namespace

int main() {
    const auto t0 = Clock::now();
    int failures = 0;
    auto report = [&](int n, const char* name, const std::function<Verdict()>& f) {
        const auto t = Clock::now();
        const Verdict v = f();
        failures += !v.pass;
        std::printf("%s  %2d  %-34s %s  (%.1fs)\n", v.pass ? "PASS" : "FAIL", n, name, v.detail.c_str(), seconds_since(t));
        std::fflush(stdout);
    };

    report(1, "gradient correctness", gradient_correctness);
    report(2, "gumbel-softmax contract", gumbel_contract);
    report(3, "anneal exactness", anneal_exactness);
    const auto onehot = sweep("onehot");
    const auto mono = sweep("mono");
    report(4, "near-one-hot convergence", [&] { return near_one_hot(onehot); });
    report(5, "planted-layer recovery vs oracle", [&] { return recovery_vs_oracle(mono, onehot); });
    report(6, "contrastive loss necessity", con_necessity);
    report(7, "search-cost accounting", [&] { return cost_accounting(onehot); });
    report(8, "intervention efficacy", intervention_efficacy);
    report(9, "loss identities", loss_identities);
    report(10, "determinism and file formats", determinism_and_format);
    report(11, "steering-baseline separation", steering_separation);
    std::printf("%d of 11 criteria failed; total %.1fs\n", failures, seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
