#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "errors.hpp"

namespace clear_align {

// Row-major so that a slab's (instance, token) rows are contiguous, matching
// the on-disk layout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul " + shape_str(a.rows(), a.cols()) + " by " +
                         shape_str(b.rows(), b.cols()));
    Matrix out = a * b;
    if (!out.allFinite()) throw ShapeError("matmul produced non-finite entries");
    return out;
}

// ---------------------------------------------------------------------------
// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
// Key = seed, counter = (block index, stream id). Any (seed, stream) pair can
// be positioned anywhere without touching other streams.

namespace detail {

inline std::array<std::uint32_t, 4> philox_block(std::array<std::uint32_t, 4> ctr,
                                                 std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t(M0) * ctr[0];
        const std::uint64_t p1 = std::uint64_t(M1) * ctr[2];
        const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
        const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += W0;
        key[1] += W1;
    }
    return ctr;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

} // namespace detail

class RngStream {
public:
    RngStream(std::uint64_t seed = 0, std::uint64_t stream_id = 0)
        : seed_(seed), stream_(stream_id) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }
    std::uint64_t counter() const noexcept { return counter_; }

    // Child stream for a sub-task; the id depends only on (parent id, tag).
    RngStream split(std::uint64_t tag) const {
        return RngStream(seed_, detail::splitmix64(stream_ ^ detail::splitmix64(tag + 1)));
    }

    std::uint64_t next_u64() {
        if (buffered_ == 0) refill();
        return buf_[--buffered_];
    }

    // Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform() { return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do x = next_u64();
        while (x >= limit);
        return x % n;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform(), u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    template <class It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) std::swap(first[i - 1], first[uniform_int(i)]);
    }

private:
    void refill() {
        const std::array<std::uint32_t, 4> ctr = {
            std::uint32_t(counter_), std::uint32_t(counter_ >> 32), std::uint32_t(stream_),
            std::uint32_t(stream_ >> 32)};
        const auto out = detail::philox_block(ctr, {std::uint32_t(seed_), std::uint32_t(seed_ >> 32)});
        ++counter_;
        buf_[0] = (std::uint64_t(out[3]) << 32) | out[2];
        buf_[1] = (std::uint64_t(out[1]) << 32) | out[0];
        buffered_ = 2;
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    std::array<std::uint64_t, 2> buf_{};
    int buffered_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline Matrix random_normal(Eigen::Index rows, Eigen::Index cols, RngStream& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

// The Gumbel transform with the uniform clamped away from 0 and 1 so the
// double log never sees an endpoint.
inline double gumbel_from_uniform(double u) {
    constexpr double lo = 0x1.0p-53;
    constexpr double hi = 1.0 - 0x1.0p-53;
    u = std::min(std::max(u, lo), hi);
    return -std::log(-std::log(u));
}

inline Vector gumbel_draw(RngStream& rng, Eigen::Index n) {
    if (n < 1) throw ShapeError("gumbel_draw needs n >= 1");
    Vector g(n);
    for (Eigen::Index i = 0; i < n; ++i) g[i] = gumbel_from_uniform(rng.uniform());
    return g;
}

// ---------------------------------------------------------------------------

template <class M>
struct AdamState {
    M m;
    M v;
    std::uint64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    AdamState(const M& like, double learning_rate)
        : m(M::Zero(like.rows(), like.cols())), v(M::Zero(like.rows(), like.cols())),
          lr(learning_rate) {}
};

template <class M>
void adam_step(AdamState<M>& st, M& params, const M& grads) {
    if (params.rows() != grads.rows() || params.cols() != grads.cols() ||
        st.m.rows() != params.rows() || st.m.cols() != params.cols())
        throw ShapeError("adam_step params " + shape_str(params.rows(), params.cols()) +
                         " grads " + shape_str(grads.rows(), grads.cols()) + " state " +
                         shape_str(st.m.rows(), st.m.cols()));
    ++st.step;
    st.m = st.beta1 * st.m + (1.0 - st.beta1) * grads;
    st.v = st.beta2 * st.v + (1.0 - st.beta2) * grads.cwiseProduct(grads);
    const double bc1 = 1.0 - std::pow(st.beta1, double(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, double(st.step));
    params.array() -= st.lr * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + st.eps);
}

// Central differences, one coordinate at a time.
inline Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x,
                               double h) {
    if (!(h > 0)) throw ShapeError("finite_diff_grad step must be positive");
    Vector g(x.size());
    Vector xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = xp[i];
        xp[i] = orig + h;
        const double fp = f(xp);
        xp[i] = orig - h;
        const double fm = f(xp);
        xp[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw EvaluationError("function value is not finite", std::size_t(i));
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Norm-wise relative error, the measure used by every gradient check here.
inline double relative_error(const Vector& a, const Vector& b) {
    const double denom = std::max({a.norm(), b.norm(), 1e-300});
    return (a - b).norm() / denom;
}

} // namespace clear_align
