#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "binio.hpp"
#include "numkit.hpp"

namespace clear_align {

enum class Label : std::uint8_t { negative = 0, positive = 1, control = 2 };

struct LayeredActivations {
    std::size_t L = 0, B = 0, T = 0, d_model = 0;
    std::vector<Matrix> slabs;       // L slabs, each (B*T) x d_model
    std::vector<Label> labels;       // one per instance
    nlohmann::json meta;             // null when the file carried no metadata

    std::size_t rows() const { return B * T; }

    std::vector<std::size_t> instances_with(Label lab) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == lab) out.push_back(i);
        return out;
    }

    std::vector<std::size_t> rows_of(const std::vector<std::size_t>& instances) const {
        std::vector<std::size_t> out;
        out.reserve(instances.size() * T);
        for (std::size_t i : instances)
            for (std::size_t t = 0; t < T; ++t) out.push_back(i * T + t);
        return out;
    }

    void validate() const {
        if (slabs.size() != L) throw ShapeError("expected " + std::to_string(L) + " slabs, have " + std::to_string(slabs.size()));
        if (labels.size() != B) throw ShapeError("expected " + std::to_string(B) + " labels");
        for (const auto& s : slabs) {
            if (std::size_t(s.rows()) != B * T || std::size_t(s.cols()) != d_model)
                throw ShapeError("slab " + shape_str(s.rows(), s.cols()) + " does not match B*T x d_model " +
                                 shape_str(Eigen::Index(B * T), Eigen::Index(d_model)));
            if (!s.allFinite()) throw ShapeError("slab contains non-finite values");
        }
        for (Label l : labels)
            if (std::uint8_t(l) > 2) throw ShapeError("invalid label");
    }
};

inline Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(Eigen::Index(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(Eigen::Index(i)) = m.row(Eigen::Index(rows[i]));
    return out;
}

// ---------------------------------------------------------------------------
// Planted generator.
//
// Each token carries one "word": a background atom (or, for token 1 of a
// control-carrying instance, the control direction) with a random amplitude.
// Positives additionally carry the concept direction on token 0, scaled per
// layer by the separability profile. Content is shared by all layers; only
// the Gaussian noise is redrawn per layer.

struct PlantSpec {
    std::size_t L = 12, B = 64, T = 4, d_model = 32;
    Vector concept_dir;
    Vector control_dir;
    Matrix background;                 // K x d_model, orthonormal rows
    std::vector<double> profile;
    double sigma = 0.05;
    double entangle_mix = 0.0;
    double concept_amplitude = 1.5;
    double control_amplitude = 3.0;
    double background_amplitude = 1.0;
    std::vector<double> layer_gain;    // empty means all ones
    double control_coupling = 0.0;

    double gain(std::size_t l) const { return layer_gain.empty() ? 1.0 : layer_gain[l]; }

    std::size_t planted_layer() const {
        return std::size_t(std::max_element(profile.begin(), profile.end()) - profile.begin());
    }

    void validate() const {
        if (L < 1 || B < 2 || T < 2 || d_model < 2) throw ConfigError("plant needs L>=1, B>=2, T>=2, d_model>=2");
        if (B % 2) throw ConfigError("plant.B must be even (half positive, half negative), got " + std::to_string(B));
        if (profile.size() != L) throw ConfigError("plant.profile must have L entries");
        for (double p : profile)
            if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("plant.profile entries must lie in [0,1]");
        if (!layer_gain.empty() && layer_gain.size() != L) throw ConfigError("plant.layer_gain must be empty or have L entries");
        for (double g : layer_gain)
            if (!(g > 0.0) || !std::isfinite(g)) throw ConfigError("plant.layer_gain entries must be positive");
        if (!(sigma > 0.0)) throw ConfigError("plant.sigma must be > 0");
        if (!(entangle_mix >= 0.0 && entangle_mix <= 1.0)) throw ConfigError("plant.entangle_mix must lie in [0,1]");
        if (!(control_coupling >= 0.0 && control_coupling <= 1.0)) throw ConfigError("plant.control_coupling must lie in [0,1]");
        if (std::size_t(concept_dir.size()) != d_model || std::size_t(control_dir.size()) != d_model)
            throw ConfigError("plant directions must have d_model entries");
        if (std::abs(concept_dir.norm() - 1.0) > 1e-10) throw ConfigError("concept direction is not unit norm");
        if (std::abs(control_dir.norm() - 1.0) > 1e-10) throw ConfigError("control direction is not unit norm");
        if (std::abs(concept_dir.dot(control_dir)) > 1e-10) throw ConfigError("concept and control directions are not orthogonal");
        if (background.rows() < 1 || std::size_t(background.cols()) != d_model)
            throw ConfigError("plant needs at least one background atom of width d_model");
    }
};

// Orthonormal concept, control and background directions from a QR of a
// Gaussian matrix.
inline void plant_basis(PlantSpec& spec, std::size_t n_background, std::uint64_t basis_seed) {
    if (spec.d_model < n_background + 2)
        throw ConfigError("d_model too small for concept + control + background atoms");
    RngStream rng(basis_seed, 0xBA515);
    const auto d = Eigen::Index(spec.d_model);
    Matrix g = random_normal(d, d, rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    spec.concept_dir = q.col(0);
    spec.control_dir = q.col(1);
    spec.background = q.middleCols(2, Eigen::Index(n_background)).transpose();
}

inline nlohmann::json plant_to_json(const PlantSpec& s) {
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    std::vector<std::vector<double>> bg;
    for (Eigen::Index r = 0; r < s.background.rows(); ++r) bg.push_back(vec(s.background.row(r).transpose()));
    return {{"L", s.L}, {"B", s.B}, {"T", s.T}, {"d_model", s.d_model},
            {"concept_direction", vec(s.concept_dir)}, {"control_direction", vec(s.control_dir)},
            {"background_atoms", bg}, {"profile", s.profile}, {"sigma", s.sigma},
            {"entangle_mix", s.entangle_mix}, {"concept_amplitude", s.concept_amplitude},
            {"control_amplitude", s.control_amplitude}, {"background_amplitude", s.background_amplitude},
            {"layer_gain", s.layer_gain}, {"control_coupling", s.control_coupling}};
}

inline PlantSpec plant_from_json(const nlohmann::json& j) {
    auto vec = [](const std::vector<double>& v) { return Vector(Eigen::Map<const Vector>(v.data(), Eigen::Index(v.size()))); };
    PlantSpec s;
    s.L = j.at("L"); s.B = j.at("B"); s.T = j.at("T"); s.d_model = j.at("d_model");
    s.concept_dir = vec(j.at("concept_direction").get<std::vector<double>>());
    s.control_dir = vec(j.at("control_direction").get<std::vector<double>>());
    const auto bg = j.at("background_atoms").get<std::vector<std::vector<double>>>();
    s.background.resize(Eigen::Index(bg.size()), Eigen::Index(s.d_model));
    for (std::size_t r = 0; r < bg.size(); ++r) s.background.row(Eigen::Index(r)) = vec(bg[r]).transpose();
    s.profile = j.at("profile").get<std::vector<double>>();
    s.sigma = j.at("sigma"); s.entangle_mix = j.at("entangle_mix");
    s.concept_amplitude = j.at("concept_amplitude"); s.control_amplitude = j.at("control_amplitude");
    s.background_amplitude = j.at("background_amplitude");
    s.layer_gain = j.at("layer_gain").get<std::vector<double>>();
    s.control_coupling = j.at("control_coupling");
    return s;
}

// The plant recorded in a file's metadata, if there is one.
inline std::optional<PlantSpec> plant_of(const LayeredActivations& acts) {
    if (!acts.meta.is_object() || !acts.meta.contains("plant")) return std::nullopt;
    return plant_from_json(acts.meta.at("plant"));
}

inline std::vector<int> control_present_of(const LayeredActivations& acts) {
    if (!acts.meta.is_object() || !acts.meta.contains("control_present"))
        throw ConfigError("activations carry no control_present metadata");
    return acts.meta.at("control_present").get<std::vector<int>>();
}

inline LayeredActivations generate_planted(const PlantSpec& spec, RngStream& rng) {
    spec.validate();
    const std::size_t L = spec.L, B = spec.B, T = spec.T, d = spec.d_model;
    const std::size_t half = B / 2;
    const auto K = std::uint64_t(spec.background.rows());

    LayeredActivations acts;
    acts.L = L; acts.B = B; acts.T = T; acts.d_model = d;
    acts.labels.assign(B, Label::negative);
    for (std::size_t i = 0; i < half; ++i) acts.labels[i] = Label::positive;

    // Exactly balanced control assignment at zero coupling.
    std::vector<int> ctrl(B, 0);
    const auto n_pos_ctrl = std::size_t(std::llround(double(half) * (1.0 + spec.control_coupling) / 2.0));
    const std::size_t n_neg_ctrl = half - n_pos_ctrl;
    std::vector<std::size_t> perm(half);
    for (std::size_t i = 0; i < half; ++i) perm[i] = i;
    rng.shuffle(perm.begin(), perm.end());
    for (std::size_t i = 0; i < n_pos_ctrl; ++i) ctrl[perm[i]] = 1;
    for (std::size_t i = 0; i < half; ++i) perm[i] = i;
    rng.shuffle(perm.begin(), perm.end());
    for (std::size_t i = 0; i < n_neg_ctrl; ++i) ctrl[half + perm[i]] = 1;

    // Control amplitudes are paired across labels (the j-th control-carrying
    // positive and the j-th control-carrying negative share one draw), so the
    // label-conditional control projections differ only by noise.
    std::vector<double> ctrl_amp(std::max(n_pos_ctrl, n_neg_ctrl));
    for (double& a : ctrl_amp) a = spec.control_amplitude * rng.uniform(0.5, 1.5);
    std::size_t next_pos_ctrl = 0, next_neg_ctrl = 0;

    Matrix content = Matrix::Zero(Eigen::Index(B * T), Eigen::Index(d));
    std::vector<double> concept_amp(B, 0.0);
    std::vector<Eigen::Index> host_atom(B, -1);
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t t = 0; t < T; ++t) {
            const auto row = Eigen::Index(i * T + t);
            if (t == 1 && ctrl[i]) {
                const double amp = i < half ? ctrl_amp[next_pos_ctrl++] : ctrl_amp[next_neg_ctrl++];
                content.row(row) = amp * spec.control_dir.transpose();
            } else {
                const double amp = spec.background_amplitude * rng.uniform(0.5, 1.5);
                const auto atom = Eigen::Index(rng.uniform_int(K));
                content.row(row) = amp * spec.background.row(atom);
                if (t == 0) host_atom[i] = atom;
            }
        }
        if (acts.labels[i] == Label::positive) concept_amp[i] = spec.concept_amplitude * rng.uniform(0.5, 1.5);
    }

    acts.slabs.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        Matrix slab = content;
        for (std::size_t i = 0; i < B; ++i) {
            if (concept_amp[i] == 0.0) continue;
            const auto row = Eigen::Index(i * T);
            slab.row(row) += concept_amp[i] * spec.profile[l] * spec.concept_dir.transpose();
            if (spec.entangle_mix > 0.0) {
                const RowVector blend =
                    (spec.concept_dir.transpose() + spec.background.row(host_atom[i])) / std::sqrt(2.0);
                slab.row(row) += concept_amp[i] * (1.0 - spec.profile[l]) * spec.entangle_mix * blend;
            }
        }
        slab *= spec.gain(l);
        for (Eigen::Index k = 0; k < slab.size(); ++k) slab.data()[k] += spec.sigma * rng.normal();
        acts.slabs[l] = std::move(slab);
    }

    acts.meta = {{"plant", plant_to_json(spec)},
                 {"l_star_plant", spec.planted_layer()},
                 {"control_present", ctrl}};
    return acts;
}

// ---------------------------------------------------------------------------
// CLRA file format.

inline std::string serialize_activations(const LayeredActivations& acts) {
    acts.validate();
    BinaryWriter w;
    w.magic("CLRA");
    w.u32(1);
    for (std::size_t v : {acts.L, acts.B, acts.T, acts.d_model}) w.u32(std::uint32_t(v));
    for (Label l : acts.labels) {
        const auto b = std::uint8_t(l);
        w.bytes(&b, 1);
    }
    w.pad_to(8);
    for (const auto& s : acts.slabs) w.f64s(s.data(), std::size_t(s.size()));
    if (!acts.meta.is_null()) {
        const std::string js = acts.meta.dump();
        w.u32(std::uint32_t(js.size()));
        w.bytes(js.data(), js.size());
    }
    return w.str();
}

inline LayeredActivations deserialize_activations(std::string bytes) {
    BinaryReader r(std::move(bytes));
    r.expect_magic("CLRA", "activation file");
    const std::uint32_t version = r.u32("version");
    if (version != 1) throw FormatError("activation file version " + std::to_string(version) + " is not supported");
    LayeredActivations acts;
    acts.L = r.u32("header L");
    acts.B = r.u32("header B");
    acts.T = r.u32("header T");
    acts.d_model = r.u32("header d_model");
    if (acts.L == 0 || acts.B == 0 || acts.T == 0 || acts.d_model == 0)
        throw FormatError("activation header has a zero dimension");
    const std::size_t label_offset = r.offset();
    std::vector<std::uint8_t> raw(acts.B);
    r.bytes(raw.data(), raw.size(), "labels");
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] > 2) throw CorruptionError("invalid label byte " + std::to_string(raw[i]), label_offset + i);
        acts.labels.push_back(Label(raw[i]));
    }
    r.skip_to_alignment(8, "labels");
    const std::size_t n = acts.B * acts.T * acts.d_model;
    for (std::size_t l = 0; l < acts.L; ++l) {
        const std::size_t start = r.offset();
        Matrix s(Eigen::Index(acts.B * acts.T), Eigen::Index(acts.d_model));
        r.f64s(s.data(), n, "slab " + std::to_string(l));
        if (!s.allFinite()) throw CorruptionError("slab " + std::to_string(l) + " contains non-finite values", start);
        acts.slabs.push_back(std::move(s));
    }
    if (r.remaining() > 0) {
        const std::uint32_t len = r.u32("metadata length");
        std::string js(len, '\0');
        const std::size_t start = r.offset();
        r.bytes(js.data(), len, "metadata");
        try {
            acts.meta = nlohmann::json::parse(js);
        } catch (const nlohmann::json::exception& e) {
            throw CorruptionError(std::string("metadata is not valid JSON: ") + e.what(), start);
        }
        if (r.remaining() > 0) throw CorruptionError("trailing bytes after metadata", r.offset());
    }
    return acts;
}

inline void write_activations(const LayeredActivations& acts, const std::filesystem::path& path) {
    atomic_write_file(path, serialize_activations(acts));
}

inline LayeredActivations read_activations(const std::filesystem::path& path) {
    return deserialize_activations(read_file(path));
}

} // namespace clear_align
