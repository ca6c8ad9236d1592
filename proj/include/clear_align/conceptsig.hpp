#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "binio.hpp"
#include "numkit.hpp"

namespace clear_align {

inline constexpr double kMaskEps = 1e-8;
// Small enough that L_con at S_uni = S_spe >= 1 stays within 1e-9 of ln 2.
inline constexpr double kConEps = 1e-9;

enum class PoolMode { mean, max };

inline Vector negative_pool(const Matrix& f_neg_rows, PoolMode mode = PoolMode::mean) {
    if (f_neg_rows.rows() == 0) throw ConfigError("negative set is empty");
    if (mode == PoolMode::max) return f_neg_rows.colwise().maxCoeff().transpose();
    return f_neg_rows.colwise().mean().transpose();
}

struct ConceptMasks {
    Vector m_shared;
    Vector m_spec;
    double eps = kMaskEps;
};

inline ConceptMasks masks_from_shared(Vector m_shared, double eps = kMaskEps) {
    ConceptMasks m;
    m.m_spec = (1.0 - m_shared.array()).matrix();
    m.m_shared = std::move(m_shared);
    m.eps = eps;
    return m;
}

inline ConceptMasks build_masks(const Vector& f_neg, double eps = kMaskEps) {
    if ((f_neg.array() < 0.0).any()) throw ConfigError("pooled negative features must be non-negative");
    const double mx = f_neg.size() ? f_neg.maxCoeff() : 0.0;
    return masks_from_shared(f_neg / (mx + eps), eps);
}

struct SeparabilityScores {
    double S_spe = 0.0;
    double S_uni = 0.0;
    double eps = kConEps;
};

inline SeparabilityScores separability_scores(const Matrix& f_pos_rows, const ConceptMasks& masks) {
    if (f_pos_rows.rows() == 0) throw ConfigError("positive set is empty");
    if (f_pos_rows.cols() != masks.m_shared.size()) throw ShapeError("feature width does not match mask length");
    const Vector col_mean = f_pos_rows.colwise().mean().transpose();
    return {col_mean.dot(masks.m_spec), col_mean.dot(masks.m_shared), kConEps};
}

inline double contrastive_loss(const SeparabilityScores& s) { return std::log1p(s.S_uni / (s.S_spe + s.eps)); }

struct ContrastivePartials {
    double d_S_uni;
    double d_S_spe;
};

inline ContrastivePartials contrastive_partials(const SeparabilityScores& s) {
    const double v = s.S_spe + s.eps;
    return {1.0 / (v + s.S_uni), -s.S_uni / (v * (v + s.S_uni))};
}

// dL_con/df for every positive row (identical across rows, so one row). The
// masks are constants here.
inline RowVector contrastive_feature_grad(const SeparabilityScores& s, const ConceptMasks& masks, Eigen::Index n_rows) {
    const auto d = contrastive_partials(s);
    return ((d.d_S_uni * masks.m_shared + d.d_S_spe * masks.m_spec) / double(n_rows)).transpose();
}

struct SteeringVector {
    Vector direction;
    Vector pos_mean;
    Vector neg_mean;
};

inline SteeringVector steering_vector(const Matrix& pos, const Matrix& neg) {
    if (pos.cols() != neg.cols())
        throw ShapeError("steering pools " + shape_str(pos.rows(), pos.cols()) + " and " + shape_str(neg.rows(), neg.cols()));
    if (pos.rows() == 0 || neg.rows() == 0) throw ConfigError("steering pools must be non-empty");
    SteeringVector sv;
    sv.pos_mean = pos.colwise().mean().transpose();
    sv.neg_mean = neg.colwise().mean().transpose();
    sv.direction = sv.pos_mean - sv.neg_mean;
    return sv;
}

// ---------------------------------------------------------------------------
// CLRM sidecar.

inline std::string serialize_masks(const ConceptMasks& m) {
    BinaryWriter w;
    w.magic("CLRM");
    w.u32(1);
    w.u32(std::uint32_t(m.m_shared.size()));
    w.f64s(m.m_shared.data(), std::size_t(m.m_shared.size()));
    return w.str();
}

inline ConceptMasks deserialize_masks(std::string bytes) {
    BinaryReader r(std::move(bytes));
    r.expect_magic("CLRM", "mask file");
    const std::uint32_t version = r.u32("version");
    if (version != 1) throw FormatError("mask file version " + std::to_string(version) + " is not supported");
    const auto n = Eigen::Index(r.u32("d_sae"));
    Vector shared(n);
    const std::size_t start = r.offset();
    r.f64s(shared.data(), std::size_t(n), "m_shared");
    if (r.remaining() > 0) throw CorruptionError("trailing bytes after m_shared", r.offset());
    if (!shared.allFinite() || (shared.array() < 0.0).any() || (shared.array() > 1.0).any())
        throw CorruptionError("m_shared entries outside [0,1]", start);
    return masks_from_shared(std::move(shared));
}

inline void write_masks(const ConceptMasks& m, const std::filesystem::path& path) {
    atomic_write_file(path, serialize_masks(m));
}

inline ConceptMasks read_masks(const std::filesystem::path& path) { return deserialize_masks(read_file(path)); }

} // namespace clear_align
