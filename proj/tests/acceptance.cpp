// Acceptance run: one PASS/FAIL line per criterion, each checked against an oracle that does not share
// code with the quantity it tests. Exit status is 0 iff the failing set equals the --expect-fail set.

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "singevo/cauchy.hpp"
#include "singevo/evolution.hpp"
#include "singevo/family.hpp"
#include "singevo/semigroup.hpp"
#include "singevo/wedge.hpp"
#include "support.hpp"

using namespace singevo;
using testsupport::diag;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Shared random suite: 50 stable diagonalizable matrices of dimension 1..16 with known eigendecompositions.
const std::vector<testsupport::Spectral>& random_suite() {
    static const auto suite = [] {
        std::mt19937 rng(20240601);
        std::uniform_int_distribution<int> dim(1, 16);
        std::vector<testsupport::Spectral> s;
        for (int i = 0; i < 50; ++i) s.push_back(testsupport::random_stable(dim(rng), rng));
        return s;
    }();
    return suite;
}

const std::vector<double>& suite_times() {
    static const auto t = geometric_grid(1e-2, 10.0, 8);
    return t;
}

SingularFamily diagonal_prototype() {
    return SingularFamily::prototype(diag({-1.0, -2.0}), diag({-1.0, -3.0}), 2.0, 1.0);
}

SingularFamily noncommuting_prototype() {
    std::mt19937 rng(42);
    const Matrix b = testsupport::random_stable(4, rng).a;
    const Matrix c = testsupport::random_stable(4, rng, 0.5, 2.0).a;
    return SingularFamily::prototype(b, c, 2.0, 1.0);
}

Outcome semigroup_oracle() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (const auto& s : random_suite())
        for (double t : suite_times())
            worst = std::max(worst, testsupport::rel_err(exp_matrix(s.a, t),
                                                         testsupport::spectral_apply(s, [t](cplx l) { return std::exp(t * l); })));
    const double secs = seconds_since(t0);
    return {worst <= 1e-8 && secs < 30.0, fmt("max rel error %.2e (<= 1e-8), %.1f s (< 30 s)", worst, secs)};
}

Outcome semigroup_law() {
    ContourSpec alt;
    alt.eta = 0.6 * std::numbers::pi;
    alt.radius_scale = 2.0;
    double law = 0.0, contour = 0.0;
    for (const auto& s : random_suite())
        for (double t : suite_times()) {
            const Matrix e = exp_matrix(s.a, t);
            law = std::max(law, testsupport::rel_err(exp_matrix(s.a, t / 3.0) * exp_matrix(s.a, 2.0 * t / 3.0), e));
            contour = std::max(contour, testsupport::rel_err(exp_matrix(s.a, t, alt), e));
        }
    return {law <= 1e-8 && contour <= 1e-8, fmt("law defect %.2e, contour defect %.2e (<= 1e-8)", law, contour)};
}

Outcome fractional_powers() {
    double at_one = 0.0, composition = 0.0;
    for (const auto& s : random_suite()) {
        const Matrix inv = s.a.inverse();
        at_one = std::max(at_one, testsupport::rel_err(frac_power_inv(s.a, 1.0), -inv));
        const auto p = frac_power_inv(s.a, std::vector<double>{0.4, 0.7});
        composition = std::max(composition, testsupport::rel_err(p[0] * p[1], frac_power_inv(s.a, 1.1)));
    }
    const double scalar = std::abs(frac_power_inv(diag({-2.0}), 1.5)(0, 0) - std::pow(2.0, -1.5));
    return {at_one <= 1e-9 && composition <= 1e-8 && scalar <= 1e-9,
            fmt("rho = 1 %.2e (<= 1e-9), composition %.2e (<= 1e-8), scalar %.2e (<= 1e-9)", at_one, composition, scalar)};
}

Outcome integral_identity() {
    std::mt19937 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    double worst = 0.0;
    for (const auto& s : random_suite()) {
        Vector x(s.a.rows());
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = g(rng);
        for (double t : {0.1, 1.0, 10.0}) worst = std::max(worst, verify_integral_identity(s.a, t, x) / x.norm());
    }
    return {worst <= 1e-8, fmt("max residual / |x| %.2e (<= 1e-8)", worst)};
}

Outcome evolution_correctness() {
    const auto scalar = SingularFamily::prototype(Matrix::Zero(1, 1), diag({-1.0}), 2.0, 1.0);
    auto exact = [](double t, double s) { return std::exp(-(1.0 / s - 1.0 / t)); };
    const auto mesh = evolution_mesh(1e-3, 1.0, 64);
    const auto go = construct_ode(scalar, mesh, 1e-10);
    const auto gv = construct_volterra(scalar, mesh);
    double e_ode = 0.0, e_vol = 0.0, e_fp = 0.0;
    for (std::size_t i = 0; i < mesh.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double u = exact(mesh[i], mesh[j]);
            e_ode = std::max(e_ode, std::abs(go.block(i, j)(0, 0) - u));
            e_vol = std::max(e_vol, std::abs(gv.block(i, j)(0, 0) - u));
        }
    // The fixed-point construction returns U(t,s)x - e^{(t-s)A(s)}x on a short window after s.
    for (double s : {0.01, 0.1, 0.5}) {
        FixedPointOptions opt;
        opt.tol = 1e-9;
        const auto res = construct_fixedpoint(scalar, s, Vector::Ones(1), fixedpoint_mesh(s, s / 4), opt);
        for (std::size_t k = 0; k < res.mesh.size(); ++k) {
            const double t = res.mesh[k];
            e_fp = std::max(e_fp, std::abs(res.w[k](0) + std::exp(-(t - s) / (s * s)) - exact(t, s)));
        }
    }
    const auto fam = noncommuting_prototype();
    const auto m4 = evolution_mesh(1e-3, 1.0, 32);
    const auto vo = construct_volterra(fam, m4);
    const auto od = construct_ode(fam, m4, 1e-10);
    double agree = 0.0;
    for (std::size_t i = 0; i < m4.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j) agree = std::max(agree, op_norm(vo.block(i, j) - od.block(i, j)));
    const double cv = gv.cocycle_defect(), co = go.cocycle_defect();
    const bool ok = std::max({e_ode, e_vol, e_fp}) <= 1e-5 && cv <= 1e-6 && co <= 1e-8 && agree <= 1e-5;
    return {ok, fmt("closed form ode %.1e volterra %.1e fixedpoint %.1e (<= 1e-5); cocycle volterra %.1e (<= 1e-6) "
                    "ode %.1e (<= 1e-8); 4x4 agreement %.1e (<= 1e-5)",
                    e_ode, e_vol, e_fp, cv, co, agree)};
}

Outcome singular_bounds() {
    bool ok = true;
    std::string detail;
    for (const auto& [name, fam] : {std::pair{"diagonal", diagonal_prototype()}, std::pair{"noncommuting", noncommuting_prototype()}}) {
        const auto rep = verify_singular_bounds(construct_ode(fam, evolution_mesh(1e-3, 1.0, 48), 1e-10), 1.5);
        const double change = std::max(rep.w_max_change, rep.u_max_change) - 1.0;
        ok = ok && change < 0.25 && rep.decay_ratio < 1e-6;
        detail += fmt("%s: change %.1f%% (< 25%%), decay %.1e (< 1e-6); ", name, 100.0 * change, rep.decay_ratio);
    }
    detail.resize(detail.size() - 2);
    return {ok, detail};
}

Outcome counterexample() {
    std::vector<double> eigs;
    for (int k = 1; k <= 1024; ++k) eigs.push_back(-k);
    const auto rows = counterexample_scan(eigs, 1.0, 1.0, geometric_grid(1e-3, 1e-1, 21));
    const double growth = rows.front().value / rows.back().value;
    double factor = 1.0;
    for (const auto& r : rows) factor = std::max({factor, r.value / r.envelope, r.envelope / r.value});
    // Closed form at t = 1: eigenvalue -n contributes (1 - tau) n tau^(n-1), so for tau < 1/2 the sup is 1 - tau.
    const bool oracle = std::abs(rows.front().value - (1.0 - 1e-3)) < 1e-12 && std::abs(rows.back().value - 0.9) < 1e-12;
    return {growth >= 5.0 && factor <= 2.0,
            fmt("growth %.3f (>= 5), envelope factor %.1f (<= 2), closed-form endpoints %s", growth, factor,
                oracle ? "match" : "differ")};
}

Outcome maximal_regularity() {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string detail;
    for (const auto& [name, fam] : {std::pair{"diagonal", diagonal_prototype()}, std::pair{"noncommuting", noncommuting_prototype()}}) {
        std::vector<EvolutionGrid> grids;
        for (int n : {24, 48, 96}) grids.push_back(construct_ode(fam, evolution_mesh(1e-3, 1.0, n), 1e-10));
        const std::vector<const EvolutionGrid*> ptrs = {&grids[0], &grids[1], &grids[2]};
        for (auto cls : {RegularityClass::vanishing, RegularityClass::weighted}) {
            const auto st = maxreg_study(fam, ptrs, cls, 0.5, 1.5, 20, 11);
            ok = ok && st.spread <= 2.0;
            detail += fmt("%s/%s spread %.2f; ", name, to_string(cls).c_str(), st.spread);
        }
    }
    const double secs = seconds_since(t0);
    ok = ok && secs < 120.0;
    return {ok, detail + fmt("(<= 2), %.1f s (< 120 s)", secs)};
}

// w = R_D g + t R_N h straight from the hyperbolic functions in long double.
long double lift_naive(long double g, long double h, long double xi, long double t, long double y) {
    const long double z = t * std::fabs(xi);
    const long double d = std::cosh(z * (1 - y)) / std::cosh(z);
    const long double n = z == 0 ? y : std::sinh(z * y) / (z * std::cosh(z));
    return g * d + t * h * n;
}

Outcome wedge() {
    WedgeProblem p0;
    p0.n_modes = 0;
    p0.g = {1.5};
    p0.h = {0.7};
    const auto s0 = solve_wedge(p0);
    double exact = 0.0;
    for (std::size_t i = 0; i < s0.mesh.size(); ++i)
        for (std::size_t j = 0; j < s0.x.size(); ++j)
            for (std::size_t k = 0; k < s0.y.size(); ++k)
                exact = std::max(exact, std::abs(s0.field[i][j][k] - (1.5 + s0.mesh[i] * 0.7 * s0.y[k])));

    WedgeProblem p;
    p.n_modes = 2;
    p.n_t = 16;
    p.g = {cplx(0, 0.25), 0.5, 1.0, 0.5, cplx(0, -0.25)};
    p.h = {0.0, 0.3, 0.2, 0.3, 0.0};
    const auto st = residual_study(p, {9, 17, 33});
    const double ratio = *std::min_element(st.interior_ratios.begin(), st.interior_ratios.end());

    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> ut(0.05, 1.0), uxi(-6.0, 6.0), uy(0.05, 0.95), ug(-1.0, 1.0);
    std::vector<std::array<double, 5>> pts;
    for (int i = 0; i < 200; ++i) pts.push_back({ut(rng), uxi(rng), uy(rng), ug(rng), ug(rng)});
    auto fd_err = [&](long double d) {
        double e = 0.0;
        for (const auto& [t, xi, y, g, h] : pts) {
            auto w = [&](long double tt, long double yy) { return lift_naive(g, h, xi, tt, yy); };
            const long double wy = (w(t, y + d) - w(t, y - d)) / (2 * d);
            const long double wt = (w(t + d, y) - w(t - d, y)) / (2 * d);
            e = std::max(e, std::abs(rhs_modes(g, h, xi, t, {y})[0] - cplx(static_cast<double>(y / t * wy - wt))));
        }
        return e;
    };
    const double order = std::log2(fd_err(1e-3L) / fd_err(5e-4L));
    return {exact <= 1e-6 && ratio >= 3.5 && order >= 1.8,
            fmt("mode-0 error %.1e (<= 1e-6), residual ratios %.2f/%.2f (>= 3.5), rhs FD order %.2f (>= 1.8)", exact,
                st.interior_ratios[0], st.interior_ratios[1], order)};
}

// Scalar reduction of the first hypothesis constant for commuting diagonal B, C.
double scalar_c1(const std::vector<double>& grid, int pairs, unsigned seed) {
    const double b[2] = {-1.0, -2.0}, c[2] = {-1.0, -3.0};
    double best = 0.0;
    for (const auto& tr : hypothesis_triples(grid.size(), pairs, seed)) {
        const double tau = grid[tr[0]], s = grid[tr[1]], t = grid[tr[2]];
        if (s == t) continue;
        double v = 0.0;
        for (int i = 0; i < 2; ++i)
            v = std::max(v, std::abs(c[i] * (1.0 / (t * t) - 1.0 / (s * s))) * tau * tau / std::abs(b[i] * tau * tau + c[i]));
        best = std::max(best, v * t / (t - s));
    }
    return best;
}

Outcome hypothesis_sanity() {
    const auto grid = hypothesis_grid(1.0);
    HypothesisOptions opt;
    const auto good = check_hypotheses(diagonal_prototype(), 1.5, grid, opt);
    const double ref = scalar_c1(grid, opt.pairs, opt.seed);
    const double rel = std::abs(good.c1_est / ref - 1.0);
    const auto bad = check_hypotheses(SingularFamily::power(diag({-1.0, -4.0}), 1.0, 1.0), 1.5, grid, opt);
    const bool ok = good.pass && rel <= 0.1 && !bad.pass && !bad.failure.empty();
    return {ok, fmt("prototype %s, c1 rel diff %.1e (<= 0.1); power beta = 1 %s (c2 %.3g -> %.3g)", good.pass ? "passes" : "fails",
                    rel, bad.pass ? "passes" : "fails", bad.c2_est, bad.c2_refined)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> expect_fail;
    app.add_option("--expect-fail", expect_fail, "criteria known to fail")->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"semigroup oracle agreement", semigroup_oracle},
        {"semigroup law and contour invariance", semigroup_law},
        {"fractional powers", fractional_powers},
        {"integral identity residual", integral_identity},
        {"evolution operator correctness", evolution_correctness},
        {"singular bounds", singular_bounds},
        {"counterexample growth", counterexample},
        {"maximal regularity", maximal_regularity},
        {"wedge problem", wedge},
        {"hypothesis verifier sanity", hypothesis_sanity},
    };
    std::set<int> failed;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        if (!o.pass) failed.insert(id);
        std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    const std::set<int> expected(expect_fail.begin(), expect_fail.end());
    if (failed == expected) return 0;
    for (int id : failed)
        if (!expected.count(id)) std::printf("unexpected failure: %d\n", id);
    for (int id : expected)
        if (!failed.count(id)) std::printf("expected failure did not occur: %d\n", id);
    return 1;
}
