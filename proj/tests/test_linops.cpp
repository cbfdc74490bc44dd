#include <gtest/gtest.h>

#include <numbers>

#include "singevo/linops.hpp"
#include "singevo/semigroup.hpp"
#include "support.hpp"

using namespace singevo;
using testsupport::diag;

TEST(Resolvent, ScalarAndDiagonal) {
    const auto r = resolvent(DenseOperator(diag({-1.0})), 1.0);
    EXPECT_NEAR(std::abs(r.matrix()(0, 0) - 0.5), 0.0, 1e-15);

    const cplx i(0.0, 1.0);
    const auto r2 = resolvent(DenseOperator(diag({-1.0, -2.0})), i);
    EXPECT_LT(std::abs(r2.matrix()(0, 0) - 1.0 / (i + 1.0)), 1e-15);
    EXPECT_LT(std::abs(r2.matrix()(1, 1) - 1.0 / (i + 2.0)), 1e-15);
    EXPECT_LT(std::abs(r2.matrix()(0, 1)), 1e-15);
}

TEST(Resolvent, EigendecompositionOracleOnSectorBoundary) {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const auto s = testsupport::random_stable(8, rng);
        const cplx lambda = std::polar(0.7 + trial, 0.75 * std::numbers::pi);
        const auto r = resolvent(DenseOperator(s.a), lambda);
        const Matrix ref = testsupport::spectral_apply(s, [&](cplx mu) { return 1.0 / (lambda - mu); });
        EXPECT_LT(testsupport::rel_err(r.matrix(), ref), 1e-10);
        Matrix shifted = -s.a;
        shifted.diagonal().array() += lambda;
        EXPECT_LT(op_norm(shifted * r.matrix() - Matrix::Identity(8, 8)), 1e-12);
    }
}

TEST(Resolvent, NearSingularThrows) {
    EXPECT_THROW(resolvent(DenseOperator(diag({-1.0, -2.0})), -1.0 + 1e-15), NearSingular);
    EXPECT_THROW(resolvent(DenseOperator(diag({-1.0})), -1.0), NearSingular);
}

TEST(Resolvent, ResolventIdentity) {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto s = testsupport::random_stable(1 + trial % 16, rng);
        const cplx l(u(rng), u(rng) - 1.5), m(u(rng), u(rng) - 1.5);
        const Matrix rl = resolvent_matrix(s.a, l), rm = resolvent_matrix(s.a, m);
        EXPECT_LT(op_norm(rl - rm - (m - l) * rl * rm), 1e-9);
    }
}

TEST(DenseOperatorTest, RejectsNonSquare) {
    EXPECT_THROW(DenseOperator(Matrix(Matrix::Zero(2, 3))), DomainError);
    EXPECT_THROW(DenseOperator(Matrix(0, 0)), DomainError);
}

// Brute-force sup of |lambda / (lambda + 1)| over the closed sector |arg| <= theta.
static double scalar_sector_sup(double theta) {
    double best = 0.0;
    for (int i = 0; i <= 4000; ++i) {
        const double phi = -theta + 2.0 * theta * i / 4000.0;
        for (int k = 0; k <= 400; ++k) {
            const double r = std::pow(10.0, -4.0 + 8.0 * k / 400.0);
            const cplx l = std::polar(r, phi);
            best = std::max(best, std::abs(l / (l + 1.0)));
        }
    }
    return best;
}

TEST(CertifySectorial, ScalarMatchesBruteForce) {
    const double theta = 0.75 * std::numbers::pi;
    const double sup = scalar_sector_sup(theta);
    EXPECT_NEAR(sup, 1.0 / std::sin(std::numbers::pi - theta), 1e-3);
    const auto cert = certify_sectorial(DenseOperator(diag({-1.0})), theta, {0.1, 1.0, 10.0});
    EXPECT_TRUE(cert.pass);
    EXPECT_LE(cert.m_est, 1.0 + std::sqrt(2.0) / 2.0);
    EXPECT_LE(cert.m_est, sup + 1e-12);
    EXPECT_EQ(cert.sample_count, 3 * 33);
}

TEST(CertifySectorial, DiagonalReducesToScalar) {
    std::vector<double> d;
    for (int i = 1; i <= 16; ++i) d.push_back(-i);
    const double theta = 0.75 * std::numbers::pi;
    const auto cert = certify_sectorial(DenseOperator::diagonal(d), theta);
    EXPECT_TRUE(cert.pass);
    // Exact scalar sup is 1 / sin(pi - theta), attained on the boundary ray.
    EXPECT_LE(cert.m_est, 1.0 / std::sin(std::numbers::pi - theta) + 1e-9);
    EXPECT_GE(cert.m_est, scalar_sector_sup(theta) - 1e-2);
}

TEST(CertifySectorial, PositiveEigenvalueFails) {
    const auto cert = certify_sectorial(DenseOperator(diag({1.0})), 0.6 * std::numbers::pi);
    EXPECT_FALSE(cert.pass);
    EXPECT_LT(std::abs(cert.worst_lambda - 1.0), 1e-12);
}

TEST(CertifySectorial, BadThetaThrows) {
    EXPECT_THROW(certify_sectorial(DenseOperator(diag({-1.0})), 0.4 * std::numbers::pi), DomainError);
    EXPECT_THROW(certify_sectorial(DenseOperator(diag({-1.0})), 0.8 * std::numbers::pi, {}), DomainError);
}

TEST(CertifySectorial, MonotoneInTheta) {
    std::mt19937 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const DenseOperator a(testsupport::random_stable(6, rng).a);
        const auto big = certify_sectorial(a, 0.78 * std::numbers::pi);
        const auto small = certify_sectorial(a, 0.6 * std::numbers::pi);
        ASSERT_TRUE(big.pass);
        EXPECT_TRUE(small.pass);
        EXPECT_LE(small.m_est, big.m_est * (1.0 + 1e-2));
    }
}

TEST(SpectralBound, Examples) {
    EXPECT_NEAR(spectral_bound(DenseOperator(diag({-1.0, -3.0}))), -1.0, 1e-14);
    RealMatrix tri(2, 2);
    tri << -2.0, 100.0, 0.0, -2.0;
    EXPECT_NEAR(spectral_bound(DenseOperator(tri)), -2.0, 1e-12);
}

TEST(SpectralBound, ShiftInvariance) {
    std::mt19937 rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix a = testsupport::random_stable(10, rng).a;
        const double c = 0.37 * trial;
        EXPECT_NEAR(spectral_bound(Matrix(a + c * Matrix::Identity(10, 10))), spectral_bound(a) + c, 1e-10);
    }
}

TEST(SpectralBound, AgreesWithSemigroupDecay) {
    std::mt19937 rng(21);
    for (int trial = 0; trial < 3; ++trial) {
        const auto s = testsupport::random_stable(6, rng, 0.5, 3.0);
        const double sb = spectral_bound(s.a);
        const auto rep = decay_report(s.a, 40.0 / -sb);
        EXPECT_NEAR(rep.omega_est, -sb, 0.05 * -sb);
    }
}

TEST(Json, MatrixRoundTripAndStrictness) {
    Matrix m(2, 2);
    m << cplx(1, 2), cplx(3, 0), cplx(0, -1), cplx(-4, 0.5);
    EXPECT_EQ(matrix_from_json(to_json(m)), m);
    auto j = to_json(m);
    j["extra"] = 1;
    EXPECT_THROW(matrix_from_json(j), ConfigError);
    nlohmann::json bad = {{"dim", 2}, {"re", {{1, 2}}}};
    EXPECT_THROW(matrix_from_json(bad), ConfigError);
    nlohmann::json real_only = {{"dim", 1}, {"re", {{-3}}}};
    EXPECT_EQ(matrix_from_json(real_only)(0, 0), cplx(-3, 0));
}

TEST(Json, CertificateFields) {
    const auto cert = certify_sectorial(DenseOperator(diag({1.0})), 0.6 * std::numbers::pi);
    const auto j = to_json(cert);
    EXPECT_EQ(j.at("M_est"), "inf");
    EXPECT_FALSE(j.at("pass").get<bool>());
    EXPECT_TRUE(j.contains("worst_lambda"));
}
