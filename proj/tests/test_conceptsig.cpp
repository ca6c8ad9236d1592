#include <cmath>

#include <gtest/gtest.h>

#include <clear_align/conceptsig.hpp>

using namespace clear_align;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(Eigen::Index(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

Matrix rows(std::initializer_list<std::initializer_list<double>> rs) {
    Matrix m(Eigen::Index(rs.size()), Eigen::Index(rs.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& r : rs) {
        Eigen::Index j = 0;
        for (double x : r) m(i, j++) = x;
        ++i;
    }
    return m;
}

// Contrastive loss as a function of the positive features, masks frozen.
double lcon_of(const Matrix& f, const ConceptMasks& m) { return contrastive_loss(separability_scores(f, m)); }

} // namespace

TEST(NegativePool, SingleRowIsThatRow) {
    EXPECT_EQ(negative_pool(rows({{1, 2, 3}})), vec({1, 2, 3}));
}

TEST(NegativePool, MeanOfTwoRows) {
    EXPECT_EQ(negative_pool(rows({{0, 2}, {4, 0}})), vec({2, 1}));
}

TEST(NegativePool, MaxPoolingOption) {
    EXPECT_EQ(negative_pool(rows({{0, 2}, {4, 0}}), PoolMode::max), vec({4, 2}));
}

TEST(NegativePool, EmptySetIsConfigError) {
    EXPECT_THROW(negative_pool(Matrix(0, 3)), ConfigError);
}

TEST(Masks, ZeroNegativesMeanEverythingSpecific) {
    const auto m = build_masks(Vector::Zero(4));
    EXPECT_EQ(m.m_shared, Vector::Zero(4));
    EXPECT_EQ(m.m_spec, Vector::Ones(4));
}

TEST(Masks, WorkedExample) {
    const auto m = build_masks(vec({2, 0, 8}));
    EXPECT_NEAR(m.m_shared[0], 0.25, 1e-8);
    EXPECT_EQ(m.m_shared[1], 0.0);
    EXPECT_NEAR(m.m_shared[2], 1.0, 1e-8);
    EXPECT_NEAR(m.m_spec[0], 0.75, 1e-8);
    EXPECT_EQ(m.m_spec[1], 1.0);
    EXPECT_NEAR(m.m_spec[2], 0.0, 1e-8);
}

TEST(Masks, ComplementIsExactOnRandomInputs) {
    RngStream rng(1, 1);
    for (int i = 0; i < 200; ++i) {
        const Vector f = random_normal(64, 1, rng, 3.0).cwiseAbs();
        const auto m = build_masks(f);
        for (Eigen::Index k = 0; k < 64; ++k) {
            ASSERT_EQ(m.m_shared[k] + m.m_spec[k], 1.0);
            ASSERT_GE(m.m_shared[k], 0.0);
            ASSERT_LE(m.m_shared[k], 1.0);
        }
    }
}

TEST(Masks, NegativeInputRejected) {
    EXPECT_THROW(build_masks(vec({1, -1})), ConfigError);
}

TEST(Scores, AllSpecificMasksGiveZeroShared) {
    const auto m = masks_from_shared(Vector::Zero(3));
    EXPECT_EQ(separability_scores(rows({{1, 2, 3}}), m).S_uni, 0.0);
}

TEST(Scores, WorkedExample) {
    const auto s = separability_scores(rows({{1, 1}}), masks_from_shared(vec({1, 0})));
    EXPECT_EQ(s.S_uni, 1.0);
    EXPECT_EQ(s.S_spe, 1.0);
}

TEST(Scores, MatchScalarRecompute) {
    RngStream rng(2, 2);
    const Matrix f = random_normal(9, 5, rng).cwiseAbs();
    const auto m = build_masks(random_normal(5, 1, rng).cwiseAbs());
    double uni = 0, spe = 0;
    for (Eigen::Index r = 0; r < 9; ++r)
        for (Eigen::Index j = 0; j < 5; ++j) {
            uni += f(r, j) * m.m_shared[j];
            spe += f(r, j) * m.m_spec[j];
        }
    const auto s = separability_scores(f, m);
    EXPECT_NEAR(s.S_uni, uni / 9, 1e-12);
    EXPECT_NEAR(s.S_spe, spe / 9, 1e-12);
}

TEST(ContrastiveLoss, Values) {
    EXPECT_EQ(contrastive_loss({1.0, 0.0}), 0.0);
    EXPECT_NEAR(contrastive_loss({1.0, 1.0}), std::log(2.0), 1e-9);
    EXPECT_NEAR(contrastive_loss({5.0, 5.0}), std::log(2.0), 1e-9);
    EXPECT_NEAR(contrastive_loss({1.0, 3.0}), std::log(4.0), 1e-8);
}

TEST(ContrastivePartials, AtZeroShared) {
    const SeparabilityScores s{2.0, 0.0};
    const auto d = contrastive_partials(s);
    EXPECT_DOUBLE_EQ(d.d_S_uni, 1.0 / (2.0 + kConEps));
    EXPECT_EQ(d.d_S_spe, 0.0);
}

TEST(ContrastivePartials, MatchFiniteDifferences) {
    RngStream rng(3, 3);
    for (int i = 0; i < 20; ++i) {
        const double spe = rng.uniform(0.1, 3), uni = rng.uniform(0.0, 3);
        const auto d = contrastive_partials({spe, uni});
        Vector x(2);
        x << spe, uni;
        const Vector g = finite_diff_grad([](const Vector& v) { return contrastive_loss({v[0], v[1]}); }, x, 1e-6);
        EXPECT_NEAR(d.d_S_spe, g[0], 1e-7);
        EXPECT_NEAR(d.d_S_uni, g[1], 1e-7);
    }
}

TEST(ContrastiveFeatureGrad, MatchesFiniteDifferencesWithFrozenMasks) {
    RngStream rng(4, 4);
    const Matrix f = random_normal(6, 10, rng).cwiseAbs();
    const auto m = build_masks(random_normal(10, 1, rng).cwiseAbs());
    const RowVector row_grad = contrastive_feature_grad(separability_scores(f, m), m, f.rows());
    const Vector x = Eigen::Map<const Vector>(f.data(), f.size());
    const Vector numeric = finite_diff_grad(
        [&](const Vector& v) {
            Matrix g = f;
            for (Eigen::Index k = 0; k < g.size(); ++k) g.data()[k] = v[k];
            return lcon_of(g, m);
        },
        x, 1e-6);
    Matrix analytic(f.rows(), f.cols());
    analytic.rowwise() = row_grad;
    EXPECT_LE(relative_error(Eigen::Map<const Vector>(analytic.data(), analytic.size()), numeric), 1e-6);
}

TEST(ContrastiveFeatureGrad, OrthogonalToFeatureScaling) {
    // L_con depends only on the ratio S_uni/S_spe, so the directional
    // derivative along f itself vanishes (up to epsilon).
    RngStream rng(5, 5);
    for (int i = 0; i < 20; ++i) {
        const Matrix f = random_normal(8, 12, rng).cwiseAbs();
        const auto m = build_masks(random_normal(12, 1, rng).cwiseAbs());
        const RowVector g = contrastive_feature_grad(separability_scores(f, m), m, f.rows());
        double dir = 0;
        for (Eigen::Index r = 0; r < f.rows(); ++r) dir += f.row(r).dot(g);
        EXPECT_LE(std::abs(dir), 1e-8);
        EXPECT_NEAR(lcon_of(3.0 * f, m), lcon_of(f, m), 1e-8);
    }
}

TEST(Steering, MeanDifference) {
    const auto sv = steering_vector(rows({{1, 1}}), rows({{0, 1}}));
    EXPECT_EQ(sv.direction, vec({1, 0}));
}

TEST(Steering, IdenticalPoolsGiveZero) {
    const Matrix p = rows({{1, 2}, {3, 4}});
    EXPECT_EQ(steering_vector(p, p).direction, Vector::Zero(2));
}

TEST(Steering, WidthMismatchIsShapeError) {
    EXPECT_THROW(steering_vector(Matrix::Zero(2, 3), Matrix::Zero(2, 4)), ShapeError);
}

TEST(MaskFile, RoundTripAndCorruption) {
    const auto m = build_masks(vec({2, 0, 8, 1}));
    const std::string b = serialize_masks(m);
    const auto back = deserialize_masks(b);
    EXPECT_EQ(back.m_shared, m.m_shared);
    EXPECT_EQ(back.m_spec, m.m_spec);
    std::string bad = b;
    bad[1] = 'Z';
    EXPECT_THROW(deserialize_masks(bad), FormatError);
    EXPECT_THROW(deserialize_masks(b.substr(0, b.size() - 3)), CorruptionError);
}
