#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "binio.hpp"
#include "numkit.hpp"

namespace clear_align {

struct SparseAutoencoder {
    Matrix W_enc;   // d_sae x d_model
    Vector b_enc;   // d_sae
    Matrix W_dec;   // d_model x d_sae

    Eigen::Index d_model() const { return W_enc.cols(); }
    Eigen::Index d_sae() const { return W_enc.rows(); }

    void validate() const {
        if (W_enc.rows() < W_enc.cols())
            throw ShapeError("SAE must be overcomplete, got d_sae=" + std::to_string(W_enc.rows()) +
                             " < d_model=" + std::to_string(W_enc.cols()));
        if (b_enc.size() != W_enc.rows() || W_dec.rows() != W_enc.cols() || W_dec.cols() != W_enc.rows())
            throw ShapeError("SAE weights are inconsistent: W_enc " + shape_str(W_enc.rows(), W_enc.cols()) +
                             ", b_enc " + std::to_string(b_enc.size()) + ", W_dec " +
                             shape_str(W_dec.rows(), W_dec.cols()));
        if (!W_enc.allFinite() || !b_enc.allFinite() || !W_dec.allFinite())
            throw ShapeError("SAE weights contain non-finite values");
    }
};

// W_enc ~ N(0, 1/d_model), decoder starts as the encoder transpose.
inline SparseAutoencoder init_sae(Eigen::Index d_model, Eigen::Index d_sae, RngStream& rng) {
    if (d_sae < d_model) throw ConfigError("d_sae must be >= d_model");
    SparseAutoencoder s;
    s.W_enc = random_normal(d_sae, d_model, rng, 1.0 / std::sqrt(double(d_model)));
    s.b_enc = Vector::Zero(d_sae);
    s.W_dec = s.W_enc.transpose();
    return s;
}

inline Matrix encode_preactivation(const SparseAutoencoder& sae, const Matrix& h) {
    if (h.cols() != sae.d_model())
        throw ShapeError("encode input width " + std::to_string(h.cols()) + " != d_model " +
                         std::to_string(sae.d_model()));
    Matrix pre = h * sae.W_enc.transpose();
    pre.rowwise() += sae.b_enc.transpose();
    return pre;
}

inline Matrix encode(const SparseAutoencoder& sae, const Matrix& h) {
    return encode_preactivation(sae, h).cwiseMax(0.0);
}

inline Matrix decode(const SparseAutoencoder& sae, const Matrix& f) {
    if (f.cols() != sae.d_sae())
        throw ShapeError("decode input width " + std::to_string(f.cols()) + " != d_sae " +
                         std::to_string(sae.d_sae()));
    return f * sae.W_dec.transpose();
}

struct SaeLossReport {
    double reconstruction = 0.0;
    double sparsity = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

inline SaeLossReport sae_loss(const Matrix& h_target, const Matrix& f, const Matrix& h_hat, double lambda) {
    if (h_target.rows() != h_hat.rows() || h_target.cols() != h_hat.cols() || f.rows() != h_target.rows())
        throw ShapeError("sae_loss target " + shape_str(h_target.rows(), h_target.cols()) + ", features " +
                         shape_str(f.rows(), f.cols()) + ", reconstruction " + shape_str(h_hat.rows(), h_hat.cols()));
    if (lambda < 0) throw ConfigError("lambda must be >= 0");
    const double n = double(h_target.rows());
    SaeLossReport rep;
    rep.reconstruction = (h_target - h_hat).squaredNorm() / n;
    rep.sparsity = f.cwiseAbs().sum() / n;
    rep.lambda = lambda;
    rep.total = rep.reconstruction + lambda * rep.sparsity;
    return rep;
}

struct SaeGrads {
    Matrix W_enc;
    Vector b_enc;
    Matrix W_dec;
    SaeLossReport loss;
};

// Closed-form gradients of the mean-over-rows loss. Subgradients of ReLU and
// |.| are taken as 0 at exactly 0.
inline SaeGrads sae_grads(const SparseAutoencoder& sae, const Matrix& h, double lambda) {
    const Matrix pre = encode_preactivation(sae, h);
    const Matrix f = pre.cwiseMax(0.0);
    const Matrix h_hat = decode(sae, f);
    const double n = double(h.rows());

    SaeGrads g;
    g.loss = sae_loss(h, f, h_hat, lambda);
    const Matrix g_hat = (2.0 / n) * (h_hat - h);
    g.W_dec = g_hat.transpose() * f;
    Matrix g_pre = g_hat * sae.W_dec;
    g_pre.array() += lambda / n;
    g_pre = (pre.array() > 0.0).select(g_pre, 0.0);
    g.W_enc = g_pre.transpose() * h;
    g.b_enc = g_pre.colwise().sum().transpose();
    return g;
}

// Gradient of L_SAE(h) + <feature_upstream, f(h)> with respect to the input h,
// the weights held fixed. feature_upstream is a single row broadcast to every
// row (it may be empty, meaning zero).
inline Matrix sae_input_grad(const SparseAutoencoder& sae, const Matrix& h, double lambda,
                             const RowVector& feature_upstream = RowVector()) {
    const Matrix pre = encode_preactivation(sae, h);
    const Matrix f = pre.cwiseMax(0.0);
    const double n = double(h.rows());
    const Matrix g_hat = (2.0 / n) * (decode(sae, f) - h);
    Matrix g_pre = g_hat * sae.W_dec;
    g_pre.array() += lambda / n;
    if (feature_upstream.size() == sae.d_sae()) g_pre.rowwise() += feature_upstream;
    else if (feature_upstream.size() != 0) throw ShapeError("feature upstream width mismatch");
    g_pre = (pre.array() > 0.0).select(g_pre, 0.0);
    return g_pre * sae.W_enc - g_hat;
}

// Rescale decoder columns whose norm exceeds the cap.
inline void cap_decoder_norms(SparseAutoencoder& sae, double cap = 10.0) {
    for (Eigen::Index j = 0; j < sae.W_dec.cols(); ++j) {
        const double nrm = sae.W_dec.col(j).norm();
        if (nrm > cap) sae.W_dec.col(j) *= cap / nrm;
    }
}

struct SaeOptimizer {
    AdamState<Matrix> W_enc;
    AdamState<Vector> b_enc;
    AdamState<Matrix> W_dec;
    double decoder_cap = 10.0;

    SaeOptimizer() = default;
    SaeOptimizer(const SparseAutoencoder& sae, double lr)
        : W_enc(sae.W_enc, lr), b_enc(sae.b_enc, lr), W_dec(sae.W_dec, lr) {}

    void step(SparseAutoencoder& sae, const SaeGrads& g) {
        adam_step(W_enc, sae.W_enc, g.W_enc);
        adam_step(b_enc, sae.b_enc, g.b_enc);
        adam_step(W_dec, sae.W_dec, g.W_dec);
        cap_decoder_norms(sae, decoder_cap);
    }
};

// ---------------------------------------------------------------------------
// CLRS checkpoint.

inline std::string serialize_sae(const SparseAutoencoder& sae) {
    sae.validate();
    BinaryWriter w;
    w.magic("CLRS");
    w.u32(1);
    w.u32(std::uint32_t(sae.d_model()));
    w.u32(std::uint32_t(sae.d_sae()));
    w.f64s(sae.W_enc.data(), std::size_t(sae.W_enc.size()));
    w.f64s(sae.b_enc.data(), std::size_t(sae.b_enc.size()));
    w.f64s(sae.W_dec.data(), std::size_t(sae.W_dec.size()));
    return w.str();
}

inline SparseAutoencoder deserialize_sae(std::string bytes) {
    BinaryReader r(std::move(bytes));
    r.expect_magic("CLRS", "SAE checkpoint");
    const std::uint32_t version = r.u32("version");
    if (version != 1) throw FormatError("SAE checkpoint version " + std::to_string(version) + " is not supported");
    const auto d_model = Eigen::Index(r.u32("d_model"));
    const auto d_sae = Eigen::Index(r.u32("d_sae"));
    if (d_model == 0 || d_sae < d_model) throw FormatError("SAE checkpoint has invalid dimensions");
    SparseAutoencoder s;
    s.W_enc.resize(d_sae, d_model);
    s.b_enc.resize(d_sae);
    s.W_dec.resize(d_model, d_sae);
    r.f64s(s.W_enc.data(), std::size_t(s.W_enc.size()), "W_enc");
    r.f64s(s.b_enc.data(), std::size_t(s.b_enc.size()), "b_enc");
    r.f64s(s.W_dec.data(), std::size_t(s.W_dec.size()), "W_dec");
    if (r.remaining() > 0) throw CorruptionError("trailing bytes after W_dec", r.offset());
    if (!s.W_enc.allFinite() || !s.b_enc.allFinite() || !s.W_dec.allFinite())
        throw CorruptionError("SAE checkpoint contains non-finite weights", 16);
    return s;
}

inline void write_sae(const SparseAutoencoder& sae, const std::filesystem::path& path) {
    atomic_write_file(path, serialize_sae(sae));
}

inline SparseAutoencoder read_sae(const std::filesystem::path& path) { return deserialize_sae(read_file(path)); }

} // namespace clear_align
