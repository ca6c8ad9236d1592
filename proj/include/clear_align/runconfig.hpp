#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "actstore.hpp"
#include "probe.hpp"
#include "searchtrain.hpp"

namespace clear_align {

// Flat dotted-key configuration. Every key has a default; files and
// command-line overrides may only set known keys with a value of the same
// JSON kind as the default.
class RunConfig {
public:
    RunConfig() : values_(defaults()) {}

    static nlohmann::json defaults() {
        return {
            {"seed", 0},
            {"jobs", 1},
            {"plant.family", "onehot"},
            {"plant.planted_layer", 5},
            {"plant.profile", nlohmann::json::array()},
            {"plant.L", 12},
            {"plant.B", 64},
            {"plant.T", 4},
            {"plant.d_model", 32},
            {"plant.sigma", 0.05},
            {"plant.entangle_mix", 0.0},
            {"plant.concept_amplitude", 1.5},
            {"plant.control_amplitude", 3.0},
            {"plant.background_amplitude", 1.0},
            {"plant.n_background", 4},
            {"plant.layer_gain", nlohmann::json::array()},
            {"plant.control_coupling", 0.0},
            {"plant.basis_seed", 1},
            {"train.lambda", 0.3},
            {"train.lr_theta", 1e-2},
            {"train.lr_alpha", 3e-2},
            {"train.batch_size", 16},
            {"train.T_max", 600},
            {"train.tau_max", 1.0},
            {"train.tau_min", 0.1},
            {"train.d_sae", 256},
            {"train.decoder_cap", 10.0},
            {"train.disable_con", false},
            {"train.freeze_layer", -1},
            {"train.mask_source", "all"},
            {"masks.pool", "mean"},
            {"oracle.mode", "brute"},
            {"oracle.stride", 4},
            {"intervene.gammas", nlohmann::json::array()},
            {"intervene.layers", nlohmann::json::array()},
            {"intervene.top_k", 1},
            {"probe.train_fraction", 0.8},
            {"probe.iterations", 500},
            {"probe.lr", 0.1},
            {"probe.l2", 0.0},
            {"probe.standardize", true},
            {"probe.cv_folds", 5},
        };
    }

    // Full-scale optimizer settings for real model activations. The defaults
    // above are tuned for the small planted datasets.
    static nlohmann::json fullscale_preset() {
        return {{"train.lambda", 1e-4}, {"train.lr_theta", 1e-3}, {"train.lr_alpha", 3e-2},
                {"train.batch_size", 16}, {"train.T_max", 2500}};
    }

    // Accepts flat dotted keys or nested objects (flattened on the way in).
    void merge(const nlohmann::json& j, const std::string& origin) {
        std::vector<std::string> bad;
        std::map<std::string, nlohmann::json> flat;
        flatten(j, "", flat);
        for (const auto& [k, v] : flat) {
            if (!values_.contains(k)) {
                bad.push_back(k + " (unknown key)");
                continue;
            }
            if (!same_kind(values_[k], v)) {
                bad.push_back(k + " (expected " + std::string(values_[k].type_name()) + ", got " + v.type_name() + ")");
                continue;
            }
            if (v.is_number_integer() && v.get<long long>() < 0 && k != "train.freeze_layer") {
                bad.push_back(k + " (must be non-negative)");
                continue;
            }
            values_[k] = v;
        }
        if (!bad.empty()) {
            std::string msg = "invalid keys in " + origin + ":";
            for (const auto& b : bad) msg += "\n  " + b;
            throw ConfigError(msg);
        }
    }

    // "--train.lambda 0.5" style overrides. Values are parsed as JSON when
    // they parse, otherwise taken as strings.
    void apply_overrides(const std::vector<std::pair<std::string, std::string>>& kv) {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [k, raw] : kv) {
            nlohmann::json v = nlohmann::json::parse(raw, nullptr, false);
            if (v.is_discarded()) v = raw;
            j[k] = v;
        }
        merge(j, "command-line overrides");
    }

    const nlohmann::json& json() const { return values_; }
    template <class T>
    T get(const std::string& key) const { return values_.at(key).get<T>(); }

    // Canonical text used for hashing and echoing.
    std::string canonical() const { return values_.dump(2); }

    PlantSpec plant_spec() const {
        PlantSpec s;
        s.L = get<std::size_t>("plant.L");
        s.B = get<std::size_t>("plant.B");
        s.T = get<std::size_t>("plant.T");
        s.d_model = get<std::size_t>("plant.d_model");
        s.sigma = get<double>("plant.sigma");
        s.entangle_mix = get<double>("plant.entangle_mix");
        s.concept_amplitude = get<double>("plant.concept_amplitude");
        s.control_amplitude = get<double>("plant.control_amplitude");
        s.background_amplitude = get<double>("plant.background_amplitude");
        s.control_coupling = get<double>("plant.control_coupling");
        s.layer_gain = get<std::vector<double>>("plant.layer_gain");

        const auto family = get<std::string>("plant.family");
        const auto planted = get<std::size_t>("plant.planted_layer");
        s.profile.assign(s.L, 0.0);
        if (family == "onehot" || family == "decoy") {
            if (planted >= s.L) throw ConfigError("plant.planted_layer out of range");
            s.profile[planted] = 1.0;
            if (family == "decoy" && s.layer_gain.empty()) s.layer_gain = decoy_gain(s.L, planted);
        } else if (family == "mono") {
            for (std::size_t l = 0; l < s.L; ++l) s.profile[l] = s.L > 1 ? double(l) / double(s.L - 1) : 1.0;
        } else if (family == "flat") {
            // all zeros: no planted signal
        } else if (family == "custom") {
            s.profile = get<std::vector<double>>("plant.profile");
        } else {
            throw ConfigError("plant.family must be onehot|mono|decoy|flat|custom, got " + family);
        }
        plant_basis(s, get<std::size_t>("plant.n_background"), get<std::uint64_t>("plant.basis_seed"));
        s.validate();
        return s;
    }

    TrainConfig train_config() const {
        TrainConfig c;
        c.lambda = get<double>("train.lambda");
        c.lr_theta = get<double>("train.lr_theta");
        c.lr_alpha = get<double>("train.lr_alpha");
        c.batch_size = get<std::size_t>("train.batch_size");
        c.T_max = get<std::size_t>("train.T_max");
        c.tau_max = get<double>("train.tau_max");
        c.tau_min = get<double>("train.tau_min");
        c.d_sae = get<std::size_t>("train.d_sae");
        c.decoder_cap = get<double>("train.decoder_cap");
        c.disable_con = get<bool>("train.disable_con");
        const auto fl = get<long long>("train.freeze_layer");
        if (fl >= 0) c.freeze_layer = std::size_t(fl);
        const auto ms = get<std::string>("train.mask_source");
        if (ms == "all") c.mask_source = MaskSource::all_negatives;
        else if (ms == "batch") c.mask_source = MaskSource::batch_negatives;
        else throw ConfigError("train.mask_source must be all|batch, got " + ms);
        const auto pool = get<std::string>("masks.pool");
        if (pool == "mean") c.pool = PoolMode::mean;
        else if (pool == "max") c.pool = PoolMode::max;
        else throw ConfigError("masks.pool must be mean|max, got " + pool);
        c.seed = get<std::uint64_t>("seed");
        c.validate();
        return c;
    }

    ProbeConfig probe_config() const {
        ProbeConfig p;
        p.iterations = get<std::size_t>("probe.iterations");
        p.lr = get<double>("probe.lr");
        p.l2 = get<double>("probe.l2");
        p.standardize = get<bool>("probe.standardize");
        return p;
    }

    // Mid-layer dip in activation scale around the layers just before the
    // planted one: the reconstruction-favoured decoy.
    static std::vector<double> decoy_gain(std::size_t L, std::size_t planted) {
        std::vector<double> g(L, 1.0);
        const std::size_t centre = planted >= 4 ? planted - 4 : 0;
        const double dip[3] = {0.6, 0.4, 0.6};
        for (int k = -1; k <= 1; ++k) {
            const long idx = long(centre) + k;
            if (idx >= 0 && idx < long(L) && std::size_t(idx) != planted) g[std::size_t(idx)] = dip[k + 1];
        }
        return g;
    }

private:
    static void flatten(const nlohmann::json& j, const std::string& prefix, std::map<std::string, nlohmann::json>& out) {
        if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
            if (it->is_object()) flatten(*it, key, out);
            else out[key] = *it;
        }
    }

    static bool same_kind(const nlohmann::json& def, const nlohmann::json& v) {
        if (def.is_number()) {
            if (!v.is_number()) return false;
            // integers stay integers; floats accept any number
            if (def.is_number_integer()) return v.is_number_integer();
            return true;
        }
        if (def.is_array()) {
            if (!v.is_array()) return false;
            for (const auto& e : v)
                if (!e.is_number()) return false;
            return true;
        }
        return def.type() == v.type();
    }

    nlohmann::json values_;
};

} // namespace clear_align
