#pragma once

#include <cmath>
#include <algorithm>
#include <complex>
#include <functional>
#include <atomic>
#include <exception>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "singevo/cauchy.hpp"

namespace singevo {

// Flattened wedge problem with phi = 1 on the periodic strip [-L, L) x (0, 1):
//   u' - u_xx - t^-2 u_yy - (y/t) u_y = 0,  u(t,x,0) = g(x),  u_y(t,x,1) = t h(x).
// Fourier mode m has frequency xi_m = pi m / L.

namespace detail {

// cosh(a) / cosh(b) for 0 <= a <= b without overflow.
inline double cosh_ratio(double a, double b) {
    return std::exp(a - b) * (1.0 + std::exp(-2.0 * a)) / (1.0 + std::exp(-2.0 * b));
}

// sinh(a) / cosh(b) for 0 <= a <= b without overflow.
inline double sinh_ratio(double a, double b) {
    return std::exp(a - b) * (1.0 - std::exp(-2.0 * a)) / (1.0 + std::exp(-2.0 * b));
}

}  // namespace detail

/// Dirichlet lift g_mode cosh(t|xi|(1-y)) / cosh(t|xi|).
inline std::vector<cplx> lift_dirichlet(cplx g_mode, double xi, double t, const std::vector<double>& y) {
    const double z = t * std::abs(xi);
    std::vector<cplx> out;
    out.reserve(y.size());
    for (double yy : y) out.push_back(g_mode * detail::cosh_ratio(z * (1.0 - yy), z));
    return out;
}

/// Neumann lift h_mode sinh(t|xi|y) / (t|xi| cosh(t|xi|)), with limit h_mode y at xi = 0.
inline std::vector<cplx> lift_neumann(cplx h_mode, double xi, double t, const std::vector<double>& y) {
    const double z = t * std::abs(xi);
    std::vector<cplx> out;
    out.reserve(y.size());
    for (double yy : y) {
        // sinh(zy)/z = y (1 + (zy)^2/6 + ...) below the cancellation threshold.
        const double zy = z * yy;
        const double v = z < 1e-6 ? yy * (1.0 + zy * zy / 6.0) / std::cosh(z) : detail::sinh_ratio(zy, z) / z;
        out.push_back(h_mode * v);
    }
    return out;
}

/// Fourier coefficient of f = [(y/t) d_y - d_t](R_D(t) g + t R_N(t) h) at one mode.
inline std::vector<cplx> rhs_modes(cplx g_mode, cplx h_mode, double xi, double t, const std::vector<double>& y) {
    const double k = std::abs(xi), z = t * k;
    const double th = std::tanh(z);
    std::vector<cplx> out;
    out.reserve(y.size());
    for (double yy : y) {
        const double a = z * (1.0 - yy), b = z * yy;
        const double s1 = detail::sinh_ratio(a, z), c1 = detail::cosh_ratio(a, z);
        const double sy = detail::sinh_ratio(b, z), cy = detail::cosh_ratio(b, z);
        const double g_part = k * (-(1.0 - yy) * s1 + th * c1) - yy * k * s1;
        const double h_part = -(yy * cy - th * sy) + yy * cy;
        out.push_back(g_part * g_mode + h_part * h_mode);
    }
    return out;
}

/// Per-mode singular family on the interior y-nodes y_1..y_{n-2}: Dirichlet at y = 0 eliminated,
/// Neumann at y = 1 closed by the one-sided second-order stencil v_N = (4 v_{N-1} - v_{N-2}) / 3.
struct ModeOperatorFamily {
    double xi = 0.0;
    std::vector<double> y_grid;
    SingularFamily family;

    /// Interior unknowns to nodal values on the full y grid.
    [[nodiscard]] std::vector<cplx> full_values(const Vector& interior) const {
        const std::size_t n = y_grid.size();
        std::vector<cplx> out(n);
        out[0] = 0.0;
        for (std::size_t i = 1; i + 1 < n; ++i) out[i] = interior(static_cast<Eigen::Index>(i - 1));
        out[n - 1] = (4.0 * out[n - 2] - out[n - 3]) / 3.0;
        return out;
    }

    /// Restriction of nodal values to the interior unknowns.
    [[nodiscard]] Vector interior(const std::vector<cplx>& full) const {
        Vector v(static_cast<Eigen::Index>(y_grid.size() - 2));
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = full[static_cast<std::size_t>(i + 1)];
        return v;
    }
};

inline std::vector<double> wedge_y_grid(int n_y) {
    if (n_y < 8) throw DomainError("wedge: n_y must be at least 8");
    std::vector<double> y(static_cast<std::size_t>(n_y));
    for (int i = 0; i < n_y; ++i) y[static_cast<std::size_t>(i)] = static_cast<double>(i) / (n_y - 1);
    return y;
}

inline ModeOperatorFamily assemble_mode_family(double xi, const std::vector<double>& y_grid, double horizon) {
    const auto ny = static_cast<Eigen::Index>(y_grid.size());
    if (ny < 8) throw DomainError("assemble_mode_family: need at least 8 y points");
    const Eigen::Index n = ny - 2;
    const double h = 1.0 / static_cast<double>(ny - 1);
    Matrix dyy = Matrix::Zero(n, n), dy = Matrix::Zero(n, n);
    // Row i is node y_{i+1}; neighbours outside the interior are the boundary nodes.
    for (Eigen::Index i = 0; i < n; ++i) {
        dyy(i, i) = -2.0 / (h * h);
        if (i > 0) {
            dyy(i, i - 1) = 1.0 / (h * h);
            dy(i, i - 1) = -0.5 / h;
        }
        if (i + 1 < n) {
            dyy(i, i + 1) = 1.0 / (h * h);
            dy(i, i + 1) = 0.5 / h;
        } else {
            // v_N = (4 v_{N-1} - v_{N-2}) / 3 folded into the last interior row.
            dyy(i, i) += 4.0 / 3.0 / (h * h);
            dy(i, i) += 4.0 / 3.0 * 0.5 / h;
            if (i > 0) {
                dyy(i, i - 1) -= 1.0 / 3.0 / (h * h);
                dy(i, i - 1) -= 1.0 / 3.0 * 0.5 / h;
            }
        }
    }
    Matrix ydy = dy;
    for (Eigen::Index i = 0; i < n; ++i) ydy.row(i) *= y_grid[static_cast<std::size_t>(i + 1)];
    const Matrix b = -xi * xi * Matrix::Identity(n, n);
    ModeOperatorFamily m{xi, y_grid, SingularFamily(b, {dyy, ydy}, 2.0, horizon, FamilyKind::wedge_mode,
                                                    "wedge mode xi=" + std::to_string(xi))};
    return m;
}

/// d/dy of R_D(t)g + t R_N(t)h at one mode.
inline std::vector<cplx> lift_dy(cplx g_mode, cplx h_mode, double xi, double t, const std::vector<double>& y) {
    const double z = t * std::abs(xi);
    std::vector<cplx> out;
    out.reserve(y.size());
    for (double yy : y)
        out.push_back(-z * detail::sinh_ratio(z * (1.0 - yy), z) * g_mode + t * detail::cosh_ratio(z * yy, z) * h_mode);
    return out;
}

struct WedgeProblem {
    double L = std::numbers::pi;
    int n_modes = 2;
    int n_y = 17;
    double T = 1.0;
    double t_min = 1e-2;
    int n_t = 32;  // geometric time intervals on [t_min, T]
    double alpha = 0.5;
    std::vector<cplx> g;  // Fourier coefficients, index m + n_modes for m = -n_modes..n_modes
    std::vector<cplx> h;
    int n_x = 0;  // synthesis points on [-L, L); 0 picks 4 n_modes + 4
    EvolutionMethod method = EvolutionMethod::ode;
    double tol = 1e-8;
    int threads = 1;  // workers for the per-mode evolution grids

    [[nodiscard]] double xi(int m) const { return std::numbers::pi * m / L; }
    [[nodiscard]] int modes() const { return 2 * n_modes + 1; }
    [[nodiscard]] cplx g_mode(int m) const { return g[static_cast<std::size_t>(m + n_modes)]; }
    [[nodiscard]] cplx h_mode(int m) const { return h[static_cast<std::size_t>(m + n_modes)]; }
    [[nodiscard]] int synthesis_points() const { return n_x > 0 ? n_x : 4 * n_modes + 4; }

    void validate() const {
        if (!(L > 0.0)) throw DomainError("wedge: L must be positive");
        if (n_modes < 0) throw DomainError("wedge: n_modes must be >= 0");
        if (n_y < 8) throw DomainError("wedge: n_y must be at least 8");
        if (!(t_min > 0.0 && t_min < T)) throw DomainError("wedge: need 0 < t_min < T");
        if (n_t < 2) throw DomainError("wedge: n_t must be at least 2");
        if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("wedge: alpha must lie in (0,1)");
        if (static_cast<int>(g.size()) != modes() || static_cast<int>(h.size()) != modes())
            throw DomainError("wedge: g and h need 2 n_modes + 1 coefficients");
        double scale = 0.0;
        for (int m = -n_modes; m <= n_modes; ++m) scale = std::max({scale, std::abs(g_mode(m)), std::abs(h_mode(m))});
        for (int m = -n_modes; m <= n_modes; ++m)
            if (std::abs(g_mode(-m) - std::conj(g_mode(m))) > 1e-12 * scale ||
                std::abs(h_mode(-m) - std::conj(h_mode(m))) > 1e-12 * scale)
                throw DomainError("wedge: g and h must be real (conjugate-symmetric coefficients)");
    }
};

/// Fourier coefficients c_m = (1/n) sum_j f(x_j) e^{-i xi_m x_j}, x_j = -L + 2 L j / n, for |m| <= n_modes.
inline std::vector<cplx> fourier_coefficients(const std::function<double(double)>& f, double L, int n_modes,
                                              int samples = 0) {
    const int n = samples > 0 ? samples : 4 * n_modes + 4;
    if (n < 2 * n_modes + 1) throw DomainError("fourier_coefficients: too few samples");
    std::vector<cplx> c;
    for (int m = -n_modes; m <= n_modes; ++m) {
        cplx acc = 0.0;
        for (int j = 0; j < n; ++j) {
            const double x = -L + 2.0 * L * j / n;
            acc += f(x) * std::polar(1.0, -std::numbers::pi * m / L * x);
        }
        c.push_back(acc / static_cast<double>(n));
    }
    return c;
}

struct ModeSolution {
    int m = 0;
    double xi = 0.0;
    bool trivial = true;                  // v == 0 because f == 0
    std::vector<std::vector<cplx>> u;     // [time][y] nodal values on the full y grid
    std::vector<std::vector<cplx>> udot;  // [time][y]
    GridFunction v, au, vdot;             // interior unknowns
};

struct WedgeSolution {
    WedgeProblem problem;
    std::vector<double> mesh;
    std::vector<double> y;
    std::vector<double> x;
    std::vector<ModeSolution> modes;        // m = -n_modes..n_modes
    std::vector<std::vector<std::vector<double>>> field;  // [time][x][y]
    double max_imag = 0.0;

    [[nodiscard]] const ModeSolution& mode(int m) const { return modes[static_cast<std::size_t>(m + problem.n_modes)]; }
};

namespace detail {

[[noreturn]] inline void rethrow_with_mode(int m) {
    const std::string prefix = "wedge mode " + std::to_string(m) + ": ";
    try {
        throw;
    } catch (const MissingBlock& e) {
        throw MissingBlock(prefix + e.what());
    } catch (const StepperStall& e) {
        throw StepperStall(prefix + e.what());
    } catch (const KernelBlowup& e) {
        throw KernelBlowup(prefix + e.what());
    } catch (const NoContraction& e) {
        throw NoContraction(prefix + e.what());
    } catch (const NearSingular& e) {
        throw NearSingular(prefix + e.what());
    } catch (const DegenerateMesh& e) {
        throw DegenerateMesh(prefix + e.what());
    } catch (const DomainError& e) {
        throw DomainError(prefix + e.what());
    } catch (const Error& e) {
        throw Error(prefix + e.what());
    }
}

inline EvolutionGrid build_grid(const SingularFamily& fam, const std::vector<double>& mesh, EvolutionMethod method,
                                double tol) {
    switch (method) {
        case EvolutionMethod::ode:
            return construct_ode(fam, mesh, tol);
        case EvolutionMethod::volterra:
            return construct_volterra(fam, mesh);
        default:
            throw DomainError("wedge: evolution method must be ode or volterra");
    }
}

}  // namespace detail

/// Solves the flattened wedge problem mode by mode and synthesizes u(t, x, y).
inline WedgeSolution solve_wedge(const WedgeProblem& p) {
    p.validate();
    WedgeSolution sol;
    sol.problem = p;
    sol.mesh = evolution_mesh(p.t_min, p.T, p.n_t);
    sol.y = wedge_y_grid(p.n_y);
    const int nx = p.synthesis_points();
    for (int j = 0; j < nx; ++j) sol.x.push_back(-p.L + 2.0 * p.L * j / nx);
    const std::size_t nt = sol.mesh.size(), ny = sol.y.size();

    // Modes +m and -m share the family, grid and quadrature weights.
    struct Shared {
        ModeOperatorFamily fam;
        std::optional<EvolutionGrid> grid;
        std::optional<ScpWeights> weights;
        bool needed = false;
        std::exception_ptr error;
    };
    std::map<int, Shared> shared;
    for (int m = 0; m <= p.n_modes; ++m) shared.emplace(m, Shared{assemble_mode_family(p.xi(m), sol.y, p.T)});

    std::vector<GridFunction> forcing;
    for (int m = -p.n_modes; m <= p.n_modes; ++m) {
        Shared& sh = shared.at(std::abs(m));
        std::vector<Vector> f(nt);
        bool zero = true;
        for (std::size_t i = 0; i < nt; ++i) {
            f[i] = sh.fam.interior(rhs_modes(p.g_mode(m), p.h_mode(m), p.xi(m), sol.mesh[i], sol.y));
            zero = zero && f[i].isZero(0.0);
        }
        sh.needed = sh.needed || !zero;
        forcing.emplace_back(sol.mesh, std::move(f));
    }

    // The evolution grids dominate the cost; build them in parallel over |m|.
    std::vector<Shared*> jobs;
    for (auto& [am, sh] : shared)
        if (sh.needed) jobs.push_back(&sh);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            Shared& sh = *jobs[j];
            try {
                sh.grid.emplace(detail::build_grid(sh.fam.family, sol.mesh, p.method, p.tol));
                sh.weights.emplace(scp_weights(sh.fam.family, sol.mesh, p.tol));
            } catch (...) {
                sh.error = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const auto extra = std::min<std::size_t>(static_cast<std::size_t>(std::max(p.threads, 1)), jobs.size());
        for (std::size_t w = 1; w < extra; ++w) pool.emplace_back(worker);
        worker();
    }

    for (int m = -p.n_modes; m <= p.n_modes; ++m) {
        ModeSolution ms;
        ms.m = m;
        ms.xi = p.xi(m);
        try {
            const Shared& sh = shared.at(std::abs(m));
            if (sh.error) std::rethrow_exception(sh.error);
            const cplx gm = p.g_mode(m), hm = p.h_mode(m);
            const GridFunction& fg = forcing[static_cast<std::size_t>(m + p.n_modes)];
            ms.trivial = std::all_of(fg.values.begin(), fg.values.end(), [](const Vector& v) { return v.isZero(0.0); });
            ms.v = ms.trivial ? GridFunction::zeros(sol.mesh, static_cast<int>(ny - 2)) : solve_scp(*sh.grid, fg, *sh.weights);
            ms.au = apply_family(sh.fam.family, ms.v);
            ms.vdot = combine(1.0, ms.au, 1.0, fg);
            for (std::size_t i = 0; i < nt; ++i) {
                const double t = sol.mesh[i];
                const auto vd = sh.fam.full_values(ms.v.values[i]);
                const auto vdd = sh.fam.full_values(ms.vdot.values[i]);
                const auto ld = lift_dirichlet(gm, ms.xi, t, sol.y);
                const auto ln = lift_neumann(hm, ms.xi, t, sol.y);
                const auto wy = lift_dy(gm, hm, ms.xi, t, sol.y);
                const auto fw = rhs_modes(gm, hm, ms.xi, t, sol.y);
                std::vector<cplx> u(ny), ud(ny);
                for (std::size_t k = 0; k < ny; ++k) {
                    u[k] = vd[k] + ld[k] + t * ln[k];
                    // w' = (y/t) w_y - f for the lifts w.
                    ud[k] = vdd[k] + sol.y[k] / t * wy[k] - fw[k];
                }
                ms.u.push_back(std::move(u));
                ms.udot.push_back(std::move(ud));
            }
        } catch (const Error&) {
            detail::rethrow_with_mode(m);
        }
        sol.modes.push_back(std::move(ms));
    }

    sol.field.assign(nt, std::vector<std::vector<double>>(sol.x.size(), std::vector<double>(ny, 0.0)));
    for (std::size_t i = 0; i < nt; ++i)
        for (std::size_t j = 0; j < sol.x.size(); ++j)
            for (std::size_t k = 0; k < ny; ++k) {
                cplx acc = 0.0;
                for (const auto& ms : sol.modes) acc += ms.u[i][k] * std::polar(1.0, ms.xi * sol.x[j]);
                sol.field[i][j][k] = acc.real();
                sol.max_imag = std::max(sol.max_imag, std::abs(acc.imag()));
            }
    return sol;
}

struct WedgeResidual {
    double interior = 0.0;   // max |u' - u_xx - t^-2 u_yy - (y/t) u_y| over interior nodes and x samples
    double dirichlet = 0.0;  // max |u(t,x,0) - g(x)|
    double neumann = 0.0;    // max |D_y u(t,x,1) - t h(x)| with the one-sided second-order stencil
};

namespace detail {

// Fourth-order centered first and second y-derivatives at node k (2 <= k <= n-3).
inline std::pair<cplx, cplx> dy4(const std::vector<cplx>& u, std::size_t k, double h) {
    const cplx d1 = (-u[k + 2] + 8.0 * u[k + 1] - 8.0 * u[k - 1] + u[k - 2]) / (12.0 * h);
    const cplx d2 = (-u[k + 2] + 16.0 * u[k + 1] - 30.0 * u[k] + 16.0 * u[k - 1] - u[k - 2]) / (12.0 * h * h);
    return {d1, d2};
}

}  // namespace detail

/// Residual of the flattened equation and its boundary conditions. u' comes from the equation of each mode and
/// x-derivatives are exact per mode, so the interior residual measures the spatial truncation of the y operator.
/// The interior maximum is taken over nodes with y in [y_lo, y_hi] that carry the five-point stencil.
inline WedgeResidual residual_check(const WedgeSolution& sol, double y_lo = 0.0, double y_hi = 1.0) {
    const auto& p = sol.problem;
    const std::size_t nt = sol.mesh.size(), ny = sol.y.size();
    const double hy = sol.y[1] - sol.y[0];
    auto in_window = [&](std::size_t k) { return sol.y[k] >= y_lo - 1e-12 && sol.y[k] <= y_hi + 1e-12; };
    WedgeResidual r;
    for (std::size_t i = 0; i < nt; ++i) {
        const double t = sol.mesh[i];
        for (std::size_t j = 0; j < sol.x.size(); ++j) {
            const double x = sol.x[j];
            cplx g = 0.0, th = 0.0, top = 0.0;
            std::vector<cplx> res(ny, 0.0);
            for (const auto& ms : sol.modes) {
                const cplx e = std::polar(1.0, ms.xi * x);
                g += p.g_mode(ms.m) * e;
                th += t * p.h_mode(ms.m) * e;
                const auto& u = ms.u[i];
                top += (3.0 * u[ny - 1] - 4.0 * u[ny - 2] + u[ny - 3]) / (2.0 * hy) * e;
                for (std::size_t k = 2; k + 2 < ny; ++k) {
                    if (!in_window(k)) continue;
                    const auto [d1, d2] = detail::dy4(u, k, hy);
                    res[k] += (ms.udot[i][k] + ms.xi * ms.xi * u[k] - d2 / (t * t) - sol.y[k] / t * d1) * e;
                }
            }
            for (std::size_t k = 2; k + 2 < ny; ++k) r.interior = std::max(r.interior, std::abs(res[k]));
            r.dirichlet = std::max(r.dirichlet, std::abs(sol.field[i][j][0] - g.real()));
            r.neumann = std::max(r.neumann, std::abs(top - th));
        }
    }
    return r;
}

struct ResidualStudy {
    std::vector<int> n_y;
    std::vector<WedgeResidual> residuals;
    std::vector<double> interior_ratios;  // coarse / fine per halving of h
    double y_lo = 0.0, y_hi = 1.0;        // common node window, the stencil range of the coarsest grid
};

/// Interior residual under halving of the y step. All levels are compared on the same physical nodes so that the
/// maximum is not taken over a set that creeps toward the boundary as h shrinks.
inline ResidualStudy residual_study(WedgeProblem p, const std::vector<int>& n_y) {
    if (n_y.size() < 2) throw DomainError("residual_study: need at least two levels");
    for (std::size_t l = 1; l < n_y.size(); ++l)
        if (n_y[l] - 1 != 2 * (n_y[l - 1] - 1)) throw DomainError("residual_study: levels must halve the y step");
    ResidualStudy st;
    st.n_y = n_y;
    const double h0 = 1.0 / (n_y.front() - 1);
    st.y_lo = 2.0 * h0;
    st.y_hi = 1.0 - 2.0 * h0;
    for (int n : n_y) {
        p.n_y = n;
        st.residuals.push_back(residual_check(solve_wedge(p), st.y_lo, st.y_hi));
    }
    for (std::size_t l = 1; l < n_y.size(); ++l)
        st.interior_ratios.push_back(st.residuals[l - 1].interior / st.residuals[l].interior);
    return st;
}

/// Hölder norms of v' and A v per nontrivial mode in the (alpha, beta = alpha) scale. Values are measured in the
/// discrete L2(0,1) norm in y (scaled by sqrt(h)) so that they do not grow with n_y.
struct ModeRegularity {
    int m = 0;
    HolderReport vdot, av;
};

inline std::vector<ModeRegularity> wedge_regularity(const WedgeSolution& sol) {
    const double w = std::sqrt(sol.y[1] - sol.y[0]);
    const double a = sol.problem.alpha;
    std::vector<ModeRegularity> out;
    for (const auto& ms : sol.modes) {
        if (ms.trivial) continue;
        out.push_back({ms.m, holder_norm(combine(w, ms.vdot, 0.0, ms.vdot), a, a),
                       holder_norm(combine(w, ms.au, 0.0, ms.au), a, a)});
    }
    return out;
}

struct WedgePoint {
    double t = 0.0, x = 0.0, y = 0.0;
};

/// Samples of the original unknown at wedge points (t, x, y) with 0 <= y <= t: linear in t between mesh
/// times, cubic Lagrange in eta = y / t, exact Fourier synthesis in x.
inline std::vector<double> pull_back(const WedgeSolution& sol, const std::vector<WedgePoint>& pts) {
    const std::size_t nt = sol.mesh.size(), ny = sol.y.size();
    const double hy = sol.y[1] - sol.y[0];
    std::vector<double> out;
    out.reserve(pts.size());
    auto eta_interp = [&](const std::vector<cplx>& u, double eta) {
        auto k0 = static_cast<std::ptrdiff_t>(std::floor(eta / hy)) - 1;
        k0 = std::clamp<std::ptrdiff_t>(k0, 0, static_cast<std::ptrdiff_t>(ny) - 4);
        cplx acc = 0.0;
        for (std::ptrdiff_t a = 0; a < 4; ++a) {
            double l = 1.0;
            for (std::ptrdiff_t b = 0; b < 4; ++b)
                if (b != a) l *= (eta - sol.y[static_cast<std::size_t>(k0 + b)]) / (sol.y[static_cast<std::size_t>(k0 + a)] -
                                                                               sol.y[static_cast<std::size_t>(k0 + b)]);
            acc += l * u[static_cast<std::size_t>(k0 + a)];
        }
        return acc;
    };
    for (const auto& q : pts) {
        const double scale = std::max(1.0, q.t);
        if (!(q.t >= sol.mesh.front() * (1 - 1e-12) && q.t <= sol.mesh.back() * (1 + 1e-12)) || q.y < -1e-12 * scale ||
            q.y > q.t * (1 + 1e-12))
            throw InterpolationOutOfRange("pull_back: point outside the sampled wedge");
        auto i1 = static_cast<std::size_t>(std::upper_bound(sol.mesh.begin(), sol.mesh.end(), q.t) - sol.mesh.begin());
        i1 = std::clamp<std::size_t>(i1, 1, nt - 1);
        const std::size_t i0 = i1 - 1;
        const double lam = (q.t - sol.mesh[i0]) / (sol.mesh[i1] - sol.mesh[i0]);
        cplx acc = 0.0;
        for (const auto& ms : sol.modes) {
            const cplx a = eta_interp(ms.u[i0], std::clamp(q.y / sol.mesh[i0], 0.0, 1.0));
            const cplx b = eta_interp(ms.u[i1], std::clamp(q.y / sol.mesh[i1], 0.0, 1.0));
            acc += ((1.0 - lam) * a + lam * b) * std::polar(1.0, ms.xi * q.x);
        }
        out.push_back(acc.real());
    }
    return out;
}

struct PullbackReport {
    double interior = 0.0;  // max |u_t - u_xx - u_yy| in the original variables
    double flux = 0.0;      // max |u_y(t, x, t) - h(x)|
    double dirichlet = 0.0; // max |u(t, x, 0) - g(x)|
};

/// Original-variable check: u_t at fixed y by three-point differences over neighbouring mesh times (through
/// pull_back), u_yy on the mapped nodes y = t eta_k, u_xx exact per mode.
inline PullbackReport pullback_check(const WedgeSolution& sol) {
    const auto& p = sol.problem;
    const std::size_t nt = sol.mesh.size(), ny = sol.y.size();
    PullbackReport r;
    for (std::size_t i = 1; i + 1 < nt; ++i) {
        const double t = sol.mesh[i], tm = sol.mesh[i - 1], tp = sol.mesh[i + 1];
        const double hm = t - tm, hp = tp - t, dy = t * (sol.y[1] - sol.y[0]);
        for (double x : sol.x) {
            cplx g = 0.0, h = 0.0, top = 0.0;
            for (const auto& ms : sol.modes) {
                const cplx e = std::polar(1.0, ms.xi * x);
                g += p.g_mode(ms.m) * e;
                h += p.h_mode(ms.m) * e;
                const auto& u = ms.u[i];
                top += (3.0 * u[ny - 1] - 4.0 * u[ny - 2] + u[ny - 3]) / (2.0 * dy) * e;
            }
            r.flux = std::max(r.flux, std::abs(top - h));
            r.dirichlet = std::max(r.dirichlet, std::abs(pull_back(sol, {{t, x, 0.0}})[0] - g.real()));
            // Interior nodes whose y stays inside the wedge at the previous time.
            for (std::size_t k = 1; k + 1 < ny; ++k) {
                const double y = t * sol.y[k];
                if (y > tm) continue;
                const auto v = pull_back(sol, {{tm, x, y}, {t, x, y}, {tp, x, y}});
                const double ut = -hp / (hm * (hm + hp)) * v[0] + (hp - hm) / (hm * hp) * v[1] + hm / (hp * (hm + hp)) * v[2];
                cplx lap = 0.0;
                for (const auto& ms : sol.modes) {
                    const auto& u = ms.u[i];
                    lap += (-ms.xi * ms.xi * u[k] + (u[k + 1] - 2.0 * u[k] + u[k - 1]) / (dy * dy)) *
                           std::polar(1.0, ms.xi * x);
                }
                r.interior = std::max(r.interior, std::abs(ut - lap.real()));
            }
        }
    }
    return r;
}

inline nlohmann::json to_json(const WedgeResidual& r) {
    return {{"interior", r.interior}, {"dirichlet", r.dirichlet}, {"neumann", r.neumann}};
}

inline nlohmann::json to_json(const ResidualStudy& st) {
    nlohmann::json levels = nlohmann::json::array();
    for (std::size_t l = 0; l < st.n_y.size(); ++l) {
        auto j = to_json(st.residuals[l]);
        j["n_y"] = st.n_y[l];
        levels.push_back(j);
    }
    return {{"levels", levels}, {"interior_ratios", st.interior_ratios}, {"y_window", {st.y_lo, st.y_hi}}};
}

inline nlohmann::json to_json(const PullbackReport& r) {
    return {{"interior", r.interior}, {"flux", r.flux}, {"dirichlet", r.dirichlet}};
}

inline nlohmann::json to_json(const ModeRegularity& r) {
    return {{"m", r.m}, {"vdot", to_json(r.vdot)}, {"av", to_json(r.av)}};
}

}  // namespace singevo
