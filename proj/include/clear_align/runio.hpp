#pragma once

#include <cstdio>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "probe.hpp"
#include "searchtrain.hpp"

namespace clear_align {

// Shortest text that round-trips is not needed here; %.17g is exact and
// stable across runs, which is what the trace files promise.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string trace_csv(const std::vector<IterationRecord>& trace, std::size_t L) {
    std::string out = "iteration,tau,L_SAE,L_con";
    for (std::size_t l = 0; l < L; ++l) out += ",p_" + std::to_string(l);
    out += "\n";
    for (const auto& r : trace) {
        out += std::to_string(r.t) + "," + fmt17(r.tau) + "," + fmt17(r.l_sae) + "," + fmt17(r.l_con);
        for (Eigen::Index l = 0; l < r.p.size(); ++l) out += "," + fmt17(r.p[l]);
        out += "\n";
    }
    return out;
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

// Everything here is a deterministic function of (config, data, seed);
// wall-clock lives in timing.json so result.json can be compared byte-wise.
inline nlohmann::json search_result_json(const SearchResult& r) {
    return {{"l_star", r.l_star},
            {"max_prob", r.max_prob},
            {"final_logits", to_std(r.logits)},
            {"final_softmax", to_std(softmax(r.logits))},
            {"trainings", 1},
            {"sae_grad_evals", r.sae_grad_evals},
            {"iterations", r.trace.size()},
            {"timing_file", "timing.json"}};
}

inline void write_text(const std::filesystem::path& p, const std::string& s) { atomic_write_file(p, s); }

inline void write_search_run(const std::filesystem::path& dir, const SearchResult& r, std::size_t L,
                             const nlohmann::json& config_echo) {
    std::filesystem::create_directories(dir);
    write_text(dir / "config.json", config_echo.dump(2) + "\n");
    write_text(dir / "trace.csv", trace_csv(r.trace, L));
    write_sae(r.sae, dir / "sae.clrs");
    write_masks(r.masks, dir / "masks.clrm");
    write_text(dir / "result.json", search_result_json(r).dump(2) + "\n");
    write_text(dir / "timing.json", nlohmann::json{{"wall_clock_s", r.wall_clock_s}}.dump(2) + "\n");
}

inline std::string layer_file(std::size_t layer, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "layer_%02zu.%s", layer, ext);
    return buf;
}

inline nlohmann::json oracle_result_json(const OracleResult& o, std::size_t L) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& ol : o.layers) {
        nlohmann::json e = {{"layer", ol.layer}, {"diverged", ol.diverged}};
        if (ol.diverged) e["error"] = ol.error;
        else
            e.update({{"score", ol.score.score}, {"gamma", ol.score.gamma}, {"concept_removed", ol.score.concept_removed},
                      {"control_change", ol.score.control_change}, {"probe_error", ol.probe_error},
                      {"checkpoint", layer_file(ol.layer, "clrs")}, {"masks", layer_file(ol.layer, "clrm")}});
        layers.push_back(e);
    }
    return {{"mode", o.mode},         {"num_layers", L},
            {"best_layer", o.best_layer}, {"no_clear_optimum", o.no_clear_optimum},
            {"trainings", o.trainings},   {"sae_grad_evals", o.sae_grad_evals},
            {"layers", layers},           {"timing_file", "timing.json"}};
}

inline void write_oracle_run(const std::filesystem::path& dir, const OracleResult& o, std::size_t L,
                             const nlohmann::json& config_echo) {
    std::filesystem::create_directories(dir);
    write_text(dir / "config.json", config_echo.dump(2) + "\n");
    std::string csv = "layer,score,gamma,concept_removed,control_change,probe_error,diverged\n";
    for (const auto& ol : o.layers) {
        csv += std::to_string(ol.layer) + "," + fmt17(ol.score.score) + "," + fmt17(ol.score.gamma) + "," +
               fmt17(ol.score.concept_removed) + "," + fmt17(ol.score.control_change) + "," + fmt17(ol.probe_error) +
               "," + (ol.diverged ? "1" : "0") + "\n";
        if (!ol.diverged) {
            write_sae(ol.sae, dir / layer_file(ol.layer, "clrs"));
            write_masks(ol.masks, dir / layer_file(ol.layer, "clrm"));
        }
    }
    write_text(dir / "scores.csv", csv);
    write_text(dir / "oracle.json", oracle_result_json(o, L).dump(2) + "\n");
    write_text(dir / "timing.json", nlohmann::json{{"wall_clock_s", o.wall_clock_s}}.dump(2) + "\n");
}

inline std::string probe_curve_csv(const ProbeCurve& c) {
    std::string out = "layer,error,n_train,n_test\n";
    for (std::size_t l = 0; l < c.errors.size(); ++l)
        out += std::to_string(l) + "," + fmt17(c.errors[l]) + "," + std::to_string(c.n_train[l]) + "," +
               std::to_string(c.n_test[l]) + "\n";
    return out;
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
    try {
        return nlohmann::json::parse(read_file(p));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(p.string() + " is not valid JSON: " + e.what());
    }
}

} // namespace clear_align
