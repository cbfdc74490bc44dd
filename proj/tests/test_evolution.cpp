#include <gtest/gtest.h>

#include "singevo/evolution.hpp"
#include "support.hpp"

using namespace singevo;
using testsupport::diag;

namespace {

SingularFamily scalar_family() {
    return SingularFamily::prototype(Matrix::Zero(1, 1), diag({-1.0}), 2.0, 1.0);
}

double scalar_u(double t, double s) { return std::exp(-(1.0 / s - 1.0 / t)); }

SingularFamily diagonal_prototype() {
    return SingularFamily::prototype(diag({-1.0, -2.0}), diag({-1.0, -3.0}), 2.0, 1.0);
}

SingularFamily noncommuting_prototype() {
    std::mt19937 rng(42);
    const Matrix b = testsupport::random_stable(4, rng).a;
    const Matrix c = testsupport::random_stable(4, rng, 0.5, 2.0).a;
    return SingularFamily::prototype(b, c, 2.0, 1.0);
}

// exp(\int_s^t (b + c / sigma^2) d sigma) per diagonal entry, integral by quadrature.
Matrix diagonal_oracle(double t, double s) {
    const double b[2] = {-1.0, -2.0}, c[2] = {-1.0, -3.0};
    Vector d(2);
    for (int i = 0; i < 2; ++i)
        d(i) = std::exp(quad::integrate_scalar([&](double x) { return b[i] + c[i] / (x * x); }, s, t, 1e-13));
    return d.asDiagonal();
}

double max_block_error(const EvolutionGrid& g, const std::function<Matrix(double, double)>& ref) {
    double e = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j) e = std::max(e, op_norm(g.block(i, j) - ref(g.time(i), g.time(j))));
    return e;
}

}  // namespace

TEST(Mesh, GeometricGrading) {
    const auto m = evolution_mesh(1e-3, 1.0, 64);
    ASSERT_EQ(m.size(), 65u);
    EXPECT_DOUBLE_EQ(m.front(), 1e-3);
    EXPECT_DOUBLE_EQ(m.back(), 1.0);
    for (std::size_t j = 1; j + 1 < m.size(); ++j) EXPECT_NEAR(m[j + 1] / m[j], m[1] / m[0], 1e-12);
    EXPECT_THROW(evolution_mesh(0.0, 1.0), DomainError);
    EXPECT_THROW(EvolutionGrid(scalar_family(), {0.5, 0.4}, EvolutionMethod::ode, 1e-8), DomainError);
    EXPECT_THROW(EvolutionGrid(scalar_family(), {0.5, 1.5}, EvolutionMethod::ode, 1e-8), DomainError);
}

TEST(Grid, StoredIdentityAndMissingBlocks) {
    EvolutionGrid g(scalar_family(), {0.1, 0.2, 0.4}, EvolutionMethod::ode, 1e-8);
    EXPECT_EQ(g.block(1, 1), Matrix::Identity(1, 1));
    EXPECT_THROW(static_cast<void>(g.block(2, 0)), MissingBlock);
    EXPECT_THROW(static_cast<void>(g.block(0, 2)), MissingBlock);
    g.set_block(2, 0, Matrix::Ones(1, 1));
    EXPECT_THROW(g.set_block(2, 0, Matrix::Ones(1, 1)), DomainError);
}

TEST(ConstructOde, ScalarClosedForm) {
    const auto g = construct_ode(scalar_family(), evolution_mesh(1e-3, 1.0, 64), 1e-10);
    EXPECT_LT(max_block_error(g, [](double t, double s) { return Matrix::Constant(1, 1, scalar_u(t, s)); }), 1e-8);
    EXPECT_LT(g.cocycle_defect(), 1e-8);
    EXPECT_EQ(g.method(), EvolutionMethod::ode);
}

TEST(ConstructOde, CommutingDiagonalQuadratureOracle) {
    const auto g = construct_ode(diagonal_prototype(), evolution_mesh(1e-2, 1.0, 24), 1e-10);
    EXPECT_LT(max_block_error(g, diagonal_oracle), 1e-8);
}

TEST(ConstructOde, ComposedMatchesIndependentColumns) {
    const auto mesh = evolution_mesh(1e-3, 1.0, 32);
    OdeOptions opt;
    opt.compose = true;
    const auto a = construct_ode(noncommuting_prototype(), mesh, 1e-10);
    const auto b = construct_ode(noncommuting_prototype(), mesh, 1e-10, opt);
    double e = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j) e = std::max(e, op_norm(a.block(i, j) - b.block(i, j)));
    EXPECT_LT(e, 1e-8);
    EXPECT_LT(a.cocycle_defect(), 1e-8);
}

TEST(ConstructOde, StepBudgetStall) {
    OdeOptions opt;
    opt.radau.max_steps = 5;
    EXPECT_THROW(construct_ode(scalar_family(), {1e-4, 1.0}, 1e-10, opt), StepperStall);
}

TEST(ConstructVolterra, ScalarClosedForm) {
    const auto g = construct_volterra(scalar_family(), evolution_mesh(1e-3, 1.0, 64));
    EXPECT_LT(max_block_error(g, [](double t, double s) { return Matrix::Constant(1, 1, scalar_u(t, s)); }), 1e-6);
    EXPECT_LT(g.cocycle_defect(), 1e-6);
    EXPECT_EQ(g.method(), EvolutionMethod::volterra);
}

TEST(ConstructVolterra, CommutingDiagonalQuadratureOracle) {
    const auto g = construct_volterra(diagonal_prototype(), evolution_mesh(1e-2, 1.0, 24));
    EXPECT_LT(max_block_error(g, diagonal_oracle), 1e-6);
}

TEST(ConstructVolterra, NoncommutingAgreesWithOde) {
    const auto fam = noncommuting_prototype();
    const auto mesh = evolution_mesh(1e-3, 1.0, 32);
    const auto gv = construct_volterra(fam, mesh);
    const auto go = construct_ode(fam, mesh, 1e-10);
    double e = 0.0;
    for (std::size_t i = 0; i < mesh.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j) e = std::max(e, op_norm(gv.block(i, j) - go.block(i, j)));
    EXPECT_LT(e, 1e-5);
}

TEST(ConstructVolterra, LongMarchMatchesComposition) {
    const auto fam = noncommuting_prototype();
    const auto mesh = evolution_mesh(1e-3, 1.0, 32);
    const auto g = construct_volterra(fam, mesh);
    for (std::size_t j : {20u, 24u, 27u}) {
        const std::vector<double> coarse(mesh.begin() + static_cast<long>(j), mesh.end());
        const auto direct = volterra_solve(fam, coarse);
        for (std::size_t k = 0; k < coarse.size(); ++k)
            EXPECT_LT(op_norm(direct[k] - g.block(mesh.size() - 1, j + k)), 1e-6);
    }
}

TEST(ConstructVolterra, PowerFamilyBetaOneBlowsUp) {
    std::vector<double> eigs;
    for (int i = 1; i <= 8; ++i) eigs.push_back(-i);
    const auto fam = SingularFamily::power(DenseOperator::diagonal(eigs).matrix(), 1.0, 1.0);
    EXPECT_THROW(construct_volterra(fam, evolution_mesh(1e-3, 1.0, 32)), KernelBlowup);
    VolterraOptions opt;
    opt.check_kernel = false;
    EXPECT_NO_THROW(construct_volterra(fam, evolution_mesh(1e-3, 1.0, 16), opt));
}

TEST(ConstructFixedPoint, ZeroDataGivesZero) {
    const auto res = construct_fixedpoint(scalar_family(), 0.1, Vector::Zero(1), fixedpoint_mesh(0.1, 0.025, 50));
    for (const auto& w : res.w) EXPECT_EQ(w.norm(), 0.0);
}

TEST(ConstructFixedPoint, ScalarClosedForm) {
    const double s = 0.1;
    FixedPointOptions opt;
    opt.tol = 1e-9;
    const auto res = construct_fixedpoint(scalar_family(), s, Vector::Ones(1), fixedpoint_mesh(s, s / 4), opt);
    double e = 0.0;
    for (std::size_t k = 0; k < res.mesh.size(); ++k) {
        const double t = res.mesh[k];
        e = std::max(e, std::abs(res.w[k](0) - (scalar_u(t, s) - std::exp(-(t - s) / (s * s)))));
    }
    EXPECT_LT(e, 1e-7);
    EXPECT_LT(res.contraction_estimate, 1.0);
    EXPECT_GT(res.iterations, 1);
}

TEST(ConstructFixedPoint, NoncommutingMatchesGridColumn) {
    const auto fam = noncommuting_prototype();
    const auto mesh = evolution_mesh(1e-2, 1.0, 40);
    const auto grid = construct_ode(fam, mesh, 1e-11);
    const std::size_t j = 25;
    const double s = mesh[j], delta = 0.3 * s;
    Vector x(4);
    x << 1.0, -0.5, 0.25, 2.0;
    FixedPointOptions opt;
    opt.tol = 1e-8;
    const auto res = construct_fixedpoint(fam, s, x, fixedpoint_mesh(s, delta, 3000, 2.0, mesh), opt);
    int compared = 0;
    for (std::size_t i = j + 1; i < mesh.size() && mesh[i] <= s + delta; ++i) {
        const auto it = std::find(res.mesh.begin(), res.mesh.end(), mesh[i]);
        ASSERT_NE(it, res.mesh.end());
        const auto k = static_cast<std::size_t>(it - res.mesh.begin());
        EXPECT_LT((res.u[k] - grid.block(i, j) * x).norm(), 10.0 * opt.tol);
        ++compared;
    }
    EXPECT_GE(compared, 2);
}

TEST(ConstructFixedPoint, LargeDeltaDoesNotContract) {
    // A(t) = (-1 - 1000 t^4) / t^2 grows in norm away from s, so ||[A(r) - A(s)] A(s)^{-1}|| > 1.
    const SingularFamily fam(Matrix::Zero(1, 1), {diag({-1.0}), diag({0.0}), diag({0.0}), diag({0.0}), diag({-1000.0})},
                             2.0, 1.0);
    EXPECT_THROW(construct_fixedpoint(fam, 0.1, Vector::Ones(1), fixedpoint_mesh(0.1, 0.4, 100)), NoContraction);
}

TEST(SingularBounds, ScalarBruteForce) {
    const auto mesh = evolution_mesh(1e-3, 1.0, 64);
    const auto g = construct_ode(scalar_family(), mesh, 1e-10);
    const auto rep = verify_singular_bounds(g, 1.5);
    double brute = 0.0, reported = 0.0;
    for (std::size_t j = 0; j < mesh.size(); ++j)
        for (std::size_t i = j + 1; i < mesh.size(); ++i) {
            const double t = mesh[i], tau = mesh[j];
            brute = std::max(brute, (t - tau) / (tau * tau) * scalar_u(t, tau));
        }
    for (const auto& s : rep.samples) {
        if (s.on_mesh) reported = std::max(reported, s.u_estimand);
        if (s.t == s.tau) {
            EXPECT_EQ(s.u_estimand, 0.0);
            EXPECT_EQ(s.w_estimand, 0.0);
        }
    }
    EXPECT_NEAR(reported, brute, 1e-7 * brute);
    EXPECT_TRUE(std::isfinite(rep.u_sup));
    // ||U(T, tau)|| decreases strictly as tau halves toward t_min and ends below 1e-6.
    EXPECT_TRUE(rep.decay_monotone);
    EXPECT_LT(rep.u_decay.back().second, 1e-6);
    EXPECT_LT(rep.decay_ratio, 1e-6);
}

TEST(SingularBounds, DiagonalPrototypeStable) {
    const auto g = construct_ode(diagonal_prototype(), evolution_mesh(1e-3, 1.0, 64), 1e-10);
    const auto rep = verify_singular_bounds(g, 1.5);
    EXPECT_TRUE(rep.w_stable) << rep.w_max_change;
    EXPECT_TRUE(rep.u_stable) << rep.u_max_change;
    EXPECT_TRUE(rep.pass);
    EXPECT_EQ(rep.decades.size(), 3u);
    EXPECT_TRUE(std::isfinite(rep.inverse_bound_c));
    // Pointwise ||U(t,tau)|| <= c ||A^{-1}(tau)|| / (t - tau) with the fitted c.
    for (std::size_t j = 0; j + 1 < g.size(); ++j) {
        Eigen::PartialPivLU<Matrix> lu(g.family().at(g.time(j)));
        const double inv = op_norm(lu.inverse());
        for (std::size_t i = j + 1; i < g.size(); ++i)
            EXPECT_LE(op_norm(g.block(i, j)), rep.inverse_bound_c * inv / (g.time(i) - g.time(j)) * (1 + 1e-12));
    }
}

TEST(SingularBounds, PowerFamilyBetaOneGrows) {
    std::vector<double> eigs;
    for (int i = 1; i <= 8; ++i) eigs.push_back(-i);
    const auto fam = SingularFamily::power(DenseOperator::diagonal(eigs).matrix(), 1.0, 1.0);
    const auto rep = verify_singular_bounds(construct_ode(fam, evolution_mesh(1e-3, 1.0, 48), 1e-10), 1.5);
    EXPECT_FALSE(rep.w_stable);
    EXPECT_GT(rep.w_max_change, 2.5);
    EXPECT_FALSE(rep.pass);
}

TEST(Counterexample, SingleEigenvalueBoundedByOne) {
    const auto rows = counterexample_scan({-1.0}, 1.0, 1.0, geometric_grid(1e-6, 0.5, 40));
    for (const auto& r : rows) {
        EXPECT_LE(r.value, 1.0);
        EXPECT_NEAR(r.value, (1.0 - r.tau), 1e-12);
    }
}

TEST(Counterexample, EigenvaluesFromOneStayBounded) {
    // With every |lambda| >= 1 the sup is attained at |lambda| = 1 and equals t - tau.
    std::vector<double> eigs;
    for (int i = 1; i <= 1024; ++i) eigs.push_back(-i);
    const auto rows = counterexample_scan(eigs, 1.0, 1.0, {1e-1, 1e-2, 1e-3});
    for (const auto& r : rows) {
        EXPECT_EQ(r.argmax, 1.0);
        EXPECT_NEAR(r.value, 1.0 - r.tau, 1e-12);
    }
    EXPECT_LT(rows[2].value / rows[0].value, 1.2);
}

TEST(Counterexample, SpectrumNearZeroGrowsLikeEnvelope) {
    // lambda* = 1 / log(t / tau) lies inside the spectrum {k / 1024}.
    std::vector<double> eigs;
    for (int i = 1; i <= 1024; ++i) eigs.push_back(-i / 1024.0);
    const auto rows = counterexample_scan(eigs, 1.0, 1.0, {1e-1, 1e-2, 1e-3});
    EXPECT_GE(rows[2].value / rows[0].value, 5.0);
    for (const auto& r : rows) {
        EXPECT_LE(r.value, r.envelope * (1 + 1e-12));
        EXPECT_GE(r.value, 0.5 * r.envelope);
        EXPECT_NEAR(r.argmax, 1.0 / std::log(1.0 / r.tau), 1.0 / 1024);
    }
}

TEST(Counterexample, Errors) {
    EXPECT_THROW(counterexample_scan({}, 1.0, 1.0, {0.1}), EmptyGrid);
    EXPECT_THROW(counterexample_scan({-1.0}, 1.5, 1.0, {0.1}), DomainError);
    EXPECT_THROW(counterexample_scan({1.0}, 1.0, 1.0, {0.1}), DomainError);
}

TEST(Counterexample, KEqualsTwoStableThroughConstructPath) {
    std::vector<double> eigs;
    for (int i = 1; i <= 8; ++i) eigs.push_back(-i);
    const auto fam = SingularFamily::power(DenseOperator::diagonal(eigs).matrix(), 2.0, 1.0);
    const auto rep = verify_singular_bounds(construct_ode(fam, evolution_mesh(1e-3, 1.0, 48), 1e-10), 1.5);
    EXPECT_TRUE(rep.u_stable) << rep.u_max_change;
}
