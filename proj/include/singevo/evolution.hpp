#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "singevo/family.hpp"
#include "singevo/matfun.hpp"
#include "singevo/quadrature.hpp"
#include "singevo/radau.hpp"

namespace singevo {

enum class EvolutionMethod { ode, volterra, fixedpoint };

inline std::string to_string(EvolutionMethod m) {
    switch (m) {
        case EvolutionMethod::ode: return "ode";
        case EvolutionMethod::volterra: return "volterra";
        case EvolutionMethod::fixedpoint: return "fixedpoint";
    }
    return "unknown";
}

/// t_j = t_min (T / t_min)^{j/N}, j = 0..N.
inline std::vector<double> evolution_mesh(double t_min, double horizon, int intervals = 64) {
    if (!(t_min > 0.0 && t_min < horizon)) throw DomainError("evolution_mesh: need 0 < t_min < T");
    if (intervals < 1) throw DomainError("evolution_mesh: need at least one interval");
    std::vector<double> m(static_cast<std::size_t>(intervals) + 1);
    for (int j = 0; j <= intervals; ++j) m[j] = t_min * std::pow(horizon / t_min, static_cast<double>(j) / intervals);
    m.back() = horizon;
    return m;
}

inline void validate_mesh(const SingularFamily& family, const std::vector<double>& mesh) {
    if (mesh.size() < 2) throw DomainError("mesh needs at least two points");
    if (!(mesh.front() > 0.0)) throw DomainError("mesh must start above 0");
    if (mesh.back() > family.horizon() * (1.0 + 1e-12)) throw DomainError("mesh exceeds the horizon");
    for (std::size_t i = 1; i < mesh.size(); ++i)
        if (!(mesh[i] > mesh[i - 1])) throw DomainError("mesh must be strictly increasing");
}

/// Mesh plus the lower-triangular table U(t_i, t_j), i >= j. Diagonal blocks
/// are the stored identity.
class EvolutionGrid {
public:
    EvolutionGrid(SingularFamily family, std::vector<double> mesh, EvolutionMethod method, double tolerance)
        : family_(std::move(family)), mesh_(std::move(mesh)), method_(method), tolerance_(tolerance) {
        validate_mesh(family_, mesh_);
        const auto n = family_.dim();
        blocks_.resize(mesh_.size());
        for (std::size_t i = 0; i < mesh_.size(); ++i) {
            blocks_[i].resize(i + 1);
            blocks_[i][i] = Matrix::Identity(n, n);
        }
    }

    [[nodiscard]] std::size_t size() const { return mesh_.size(); }
    [[nodiscard]] const std::vector<double>& mesh() const { return mesh_; }
    [[nodiscard]] double time(std::size_t i) const { return mesh_.at(i); }
    [[nodiscard]] EvolutionMethod method() const { return method_; }
    [[nodiscard]] double tolerance() const { return tolerance_; }
    [[nodiscard]] const SingularFamily& family() const { return family_; }
    [[nodiscard]] Eigen::Index dim() const { return family_.dim(); }

    [[nodiscard]] bool has_block(std::size_t i, std::size_t j) const {
        return i < blocks_.size() && j <= i && blocks_[i][j].size() > 0;
    }

    /// U(t_i, t_j). Throws MissingBlock for j > i or blocks never stored.
    [[nodiscard]] const Matrix& block(std::size_t i, std::size_t j) const {
        if (!has_block(i, j))
            throw MissingBlock("evolution grid has no block (" + std::to_string(i) + ", " + std::to_string(j) + ")");
        return blocks_[i][j];
    }

    void set_block(std::size_t i, std::size_t j, Matrix u) {
        if (j >= i || i >= blocks_.size()) throw DomainError("set_block: need j < i < size");
        if (blocks_[i][j].size() > 0) throw DomainError("set_block: blocks are write-once");
        blocks_[i][j] = std::move(u);
    }

    /// max over stored i >= j >= l of ||U(t_i,t_j) U(t_j,t_l) - U(t_i,t_l)||.
    [[nodiscard]] double cocycle_defect() const {
        double worst = 0.0;
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = 0; j <= i; ++j)
                for (std::size_t l = 0; l <= j; ++l)
                    if (has_block(i, j) && has_block(j, l) && has_block(i, l))
                        worst = std::max(worst, op_norm(block(i, j) * block(j, l) - block(i, l)));
        return worst;
    }

private:
    SingularFamily family_;
    std::vector<double> mesh_;
    EvolutionMethod method_;
    double tolerance_;
    std::vector<std::vector<Matrix>> blocks_;
};

/// Fills U(t_i, t_j) = P_{i-1} U(t_{i-1}, t_j) from the adjacent propagators
/// P_m = U(t_{m+1}, t_m).
inline void compose_blocks(EvolutionGrid& grid, const std::vector<Matrix>& adjacent) {
    for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
        Matrix u = adjacent[j];
        grid.set_block(j + 1, j, u);
        for (std::size_t i = j + 2; i < grid.size(); ++i) {
            u = (adjacent[i - 1] * u).eval();
            grid.set_block(i, j, u);
        }
    }
}

inline MatrixFn family_fn(const SingularFamily& family) {
    return [&family](double t) { return family.at(t); };
}

// ODE route ------------------------------------------------------------------

struct OdeOptions {
    RadauOptions radau{};
    bool compose = false;  // integrate adjacent intervals only and multiply
};

/// Integrates U' = A(t)U, U(t_j) = I over [t_j, t_N] for every column j.
inline EvolutionGrid construct_ode(const SingularFamily& family, const std::vector<double>& mesh, double tol = 1e-10,
                                   const OdeOptions& opt = {}) {
    if (!(tol > 0.0)) throw DomainError("construct_ode: tol must be positive");
    EvolutionGrid grid(family, mesh, EvolutionMethod::ode, tol);
    RadauOptions ro = opt.radau;
    ro.rtol = tol;
    ro.atol = tol * 1e-3;
    const auto a_fn = family_fn(family);
    const Eigen::Index n = family.dim();
    if (opt.compose) {
        std::vector<Matrix> adjacent;
        for (std::size_t j = 0; j + 1 < mesh.size(); ++j)
            adjacent.push_back(radau_propagator(a_fn, mesh[j], mesh[j + 1], ro));
        compose_blocks(grid, adjacent);
        return grid;
    }
    for (std::size_t j = 0; j + 1 < mesh.size(); ++j) {
        const std::vector<double> cps(mesh.begin() + static_cast<long>(j) + 1, mesh.end());
        std::vector<Matrix> out;
        radau_integrate(a_fn, nullptr, mesh[j], mesh.back(), Matrix::Identity(n, n), ro, nullptr, &cps, &out);
        for (std::size_t k = 0; k < out.size(); ++k) grid.set_block(j + 1 + k, j, std::move(out[k]));
    }
    return grid;
}

// Volterra route ---------------------------------------------------------------

struct VolterraOptions {
    int degree = 6;            // interpolation degree per panel (degree + 1 Chebyshev-Lobatto nodes)
    int gauss = 10;            // Gauss-Legendre nodes per panel integral
    double kappa = 1.0;        // panel width times ||A(left end)||
    int max_panels = 400;      // per mesh interval
    double prune = 45.0;       // skip panels where (tau - sigma) * decay exceeds this
    double rho = 1.5;          // exponent of the kernel envelope (tau - sigma)^{rho - 1}
    double blowup_factor = 5.0;
    bool check_kernel = true;
};

struct VolterraDiagnostics {
    std::vector<double> interval_left;
    std::vector<double> envelope;  // sup ||E_sigma(tau)||_F (tau - sigma)^{rho-1} per mesh interval
    std::vector<int> panels;
    long kernel_evaluations = 0;
};

namespace detail {

/// Lagrange basis values of the nodes `x` at the point `z`.
inline std::vector<double> lagrange(const std::vector<double>& x, double z) {
    std::vector<double> l(x.size(), 1.0);
    for (std::size_t r = 0; r < x.size(); ++r)
        for (std::size_t k = 0; k < x.size(); ++k)
            if (k != r) l[r] *= (z - x[k]) / (x[r] - x[k]);
    return l;
}

struct VolterraPanel {
    double a = 0.0, b = 0.0;
    std::vector<double> nodes;      // Chebyshev-Lobatto, increasing
    std::vector<Matrix> x;          // U(t, node)
    std::vector<double> gl_tau, gl_w;
    std::vector<Matrix> x_at_gl;    // interpolated U(t, gl_tau)
};

/// Solves X(sigma) = e^{(t - sigma)A(sigma)} + \int_sigma^t X(tau) E_sigma(tau) d tau
/// for X(sigma) = U(t, sigma), sigma in [coarse.front(), t = coarse.back()].
/// Each coarse interval is split into equal panels; returns X at the coarse
/// points and records the kernel envelope per coarse interval.
inline std::vector<Matrix> volterra_march(const SingularFamily& family, const std::vector<double>& coarse,
                                          const VolterraOptions& opt, VolterraDiagnostics* diag) {
    const Eigen::Index n = family.dim();
    const double t_end = coarse.back();
    const int p = opt.degree;
    const auto& gl = quad::gl(opt.gauss);

    // Panel layout, left to right.
    std::vector<VolterraPanel> panels;
    std::vector<std::size_t> coarse_first_panel;
    std::vector<int> per_interval;
    for (std::size_t c = 0; c + 1 < coarse.size(); ++c) {
        const double a = coarse[c], b = coarse[c + 1];
        const double na = op_norm(family.at(a));
        const int count = std::clamp(static_cast<int>(std::ceil((b - a) * na / opt.kappa)), 1, opt.max_panels);
        per_interval.push_back(count);
        coarse_first_panel.push_back(panels.size());
        for (int k = 0; k < count; ++k) {
            VolterraPanel pn;
            pn.a = a + (b - a) * k / count;
            pn.b = (k + 1 == count) ? b : a + (b - a) * (k + 1) / count;
            for (int q = 0; q <= p; ++q)
                pn.nodes.push_back(pn.a + 0.5 * (pn.b - pn.a) * (1.0 - std::cos(std::numbers::pi * q / p)));
            pn.nodes.front() = pn.a;
            pn.nodes.back() = pn.b;
            for (std::size_t g = 0; g < gl.nodes.size(); ++g) {
                pn.gl_tau.push_back(pn.a + 0.5 * (pn.b - pn.a) * (gl.nodes[g] + 1.0));
                pn.gl_w.push_back(0.5 * (pn.b - pn.a) * gl.weights[g]);
            }
            panels.push_back(std::move(pn));
        }
    }
    std::vector<double> envelope(coarse.size() - 1, 0.0);
    auto coarse_index = [&](std::size_t panel) {
        return static_cast<std::size_t>(
            std::upper_bound(coarse_first_panel.begin(), coarse_first_panel.end(), panel) - coarse_first_panel.begin() - 1);
    };

    const Matrix id = Matrix::Identity(n, n);
    Matrix right_value = id;  // X at the right end of the panel being solved
    long kernel_evals = 0;

    for (std::size_t m = panels.size(); m-- > 0;) {
        auto& pn = panels[m];
        const std::size_t ci = coarse_index(m);
        pn.x.assign(static_cast<std::size_t>(p) + 1, Matrix());
        pn.x[p] = right_value;

        Matrix big = Matrix::Identity(p * n, p * n);  // block (r, q) = delta_rq I - W_{q,r}
        Matrix rhs(n, p * n);
        for (int q = 0; q < p; ++q) {
            const double sigma = pn.nodes[q];
            const Matrix a_sigma = family.at(sigma);
            const FrozenExponential ex(a_sigma);
            const double decay = std::max(ex.decay_rate(), 0.0);
            Matrix r = ex(t_end - sigma);

            auto kernel = [&](double tau) -> Matrix {
                ++kernel_evals;
                return (family.at(tau) - a_sigma) * ex(tau - sigma);
            };
            // Own panel: [sigma, pn.b] against the Lagrange basis of this panel.
            const double len = pn.b - sigma;
            for (std::size_t g = 0; g < gl.nodes.size(); ++g) {
                const double tau = sigma + 0.5 * len * (gl.nodes[g] + 1.0);
                const double w = 0.5 * len * gl.weights[g];
                const Matrix e = kernel(tau);
                envelope[ci] = std::max(envelope[ci], e.norm() * std::pow(tau - sigma, opt.rho - 1.0));
                const auto l = lagrange(pn.nodes, tau);
                for (int rr = 0; rr < p; ++rr) big.block(rr * n, q * n, n, n) -= (w * l[rr]) * e;
                r += (w * l[p]) * pn.x[p] * e;
            }
            // Panels to the right with known X.
            for (std::size_t m2 = m + 1; m2 < panels.size(); ++m2) {
                const auto& other = panels[m2];
                if ((other.a - sigma) * decay > opt.prune) break;
                for (std::size_t g = 0; g < other.gl_tau.size(); ++g) r += other.gl_w[g] * other.x_at_gl[g] * kernel(other.gl_tau[g]);
            }
            rhs.middleCols(q * n, n) = r;
        }
        // X big = rhs  <=>  big^T X^T = rhs^T
        const Matrix sol = big.transpose().partialPivLu().solve(rhs.transpose()).transpose();
        for (int q = 0; q < p; ++q) pn.x[q] = sol.middleCols(q * n, n);
        for (double tau : pn.gl_tau) {
            const auto l = lagrange(pn.nodes, tau);
            Matrix v = Matrix::Zero(n, n);
            for (int q = 0; q <= p; ++q) v += l[q] * pn.x[q];
            pn.x_at_gl.push_back(std::move(v));
        }
        right_value = pn.x[0];
    }

    std::vector<Matrix> out;
    for (std::size_t c = 0; c + 1 < coarse.size(); ++c) out.push_back(panels[coarse_first_panel[c]].x[0]);
    out.push_back(id);
    if (diag) {
        for (std::size_t c = 0; c + 1 < coarse.size(); ++c) {
            diag->interval_left.push_back(coarse[c]);
            diag->envelope.push_back(envelope[c]);
            diag->panels.push_back(per_interval[c]);
        }
        diag->kernel_evaluations += kernel_evals;
    }
    return out;
}

}  // namespace detail

/// U(t_end, coarse[k]) for every coarse point by one march over the whole
/// range; the panel layout follows the coarse points.
inline std::vector<Matrix> volterra_solve(const SingularFamily& family, const std::vector<double>& coarse,
                                          const VolterraOptions& opt = {}, VolterraDiagnostics* diag = nullptr) {
    validate_mesh(family, coarse);
    return detail::volterra_march(family, coarse, opt, diag);
}

/// Product-integration solution of the Volterra equation on each mesh
/// interval; longer blocks are products of adjacent ones. Throws KernelBlowup
/// when the kernel envelope near t_min exceeds the one on [T/10, T] by more
/// than `blowup_factor`.
inline EvolutionGrid construct_volterra(const SingularFamily& family, const std::vector<double>& mesh,
                                        const VolterraOptions& opt = {}, VolterraDiagnostics* diag = nullptr) {
    EvolutionGrid grid(family, mesh, EvolutionMethod::volterra, 1e-6);
    VolterraDiagnostics local;
    VolterraDiagnostics& d = diag ? *diag : local;
    std::vector<Matrix> adjacent;
    for (std::size_t j = 0; j + 1 < mesh.size(); ++j)
        adjacent.push_back(detail::volterra_march(family, {mesh[j], mesh[j + 1]}, opt, &d).front());
    if (opt.check_kernel) {
        double reference = 0.0, worst = 0.0, worst_at = 0.0;
        for (std::size_t j = 0; j < d.envelope.size(); ++j) {
            if (d.interval_left[j] >= 0.1 * mesh.back()) reference = std::max(reference, d.envelope[j]);
            if (d.envelope[j] > worst) {
                worst = d.envelope[j];
                worst_at = d.interval_left[j];
            }
        }
        if (reference > 0.0 && worst > opt.blowup_factor * reference)
            throw KernelBlowup("construct_volterra: kernel envelope " + std::to_string(worst) + " at s = " +
                               std::to_string(worst_at) + " exceeds " + std::to_string(opt.blowup_factor) +
                               " x the reference " + std::to_string(reference));
    }
    compose_blocks(grid, adjacent);
    return grid;
}

// Fixed-point route ----------------------------------------------------------

struct FixedPointOptions {
    int max_iter = 200;
    double tol = 1e-10;
    std::function<Vector(double)> forcing;  // f; empty means 0
};

struct FixedPointResult {
    std::vector<double> mesh;  // includes s as the first point
    std::vector<Vector> w;     // W(., s) x on the mesh; w[0] = 0
    std::vector<double> increments;
    double contraction_estimate = 0.0;
    int iterations = 0;

    /// U(t, s) x = w(t) + e^{(t-s)A(s)} x at mesh point k.
    std::vector<Vector> u;
};

/// s + delta (k / M)^grading, k = 1..M, merged with `include` points inside
/// (s, s + delta].
inline std::vector<double> fixedpoint_mesh(double s, double delta, int points = 2000, double grading = 2.0,
                                           const std::vector<double>& include = {}) {
    std::vector<double> m;
    for (int k = 1; k <= points; ++k) m.push_back(s + delta * std::pow(static_cast<double>(k) / points, grading));
    for (double x : include)
        if (x > s && x <= s + delta * (1.0 + 1e-14)) m.push_back(x);
    std::sort(m.begin(), m.end());
    std::vector<double> out;
    for (double x : m)
        if (out.empty() || x - out.back() > 1e-14 * std::abs(x)) out.push_back(x);
        else out.back() = std::max(out.back(), x);
    // Exact copies of the included points survive the merge.
    for (double x : include)
        for (double& y : out)
            if (std::abs(x - y) <= 1e-14 * std::abs(x)) y = x;
    return out;
}

/// Picard iteration for w = W(., s)x: w_{k+1} solves the frozen problem
/// w' = A(s)w + [A(r) - A(s)](w_k + e^{(r-s)A(s)}x) + f(r), w(s) = 0, by the
/// exponential trapezoid rule with piecewise-linear forcing on `mesh`.
inline FixedPointResult construct_fixedpoint(const SingularFamily& family, double s, const Vector& x,
                                             const std::vector<double>& mesh, const FixedPointOptions& opt = {}) {
    if (!(s > 0.0)) throw DomainError("construct_fixedpoint: s must be positive");
    if (mesh.empty()) throw EmptyGrid("construct_fixedpoint: empty mesh");
    if (!(mesh.front() > s)) throw DomainError("construct_fixedpoint: mesh must lie in (s, s + delta]");
    for (std::size_t i = 1; i < mesh.size(); ++i)
        if (!(mesh[i] > mesh[i - 1])) throw DomainError("construct_fixedpoint: mesh must be increasing");
    const Eigen::Index n = family.dim();
    if (x.size() != n) throw DomainError("construct_fixedpoint: x has the wrong dimension");

    FixedPointResult res;
    res.mesh.push_back(s);
    res.mesh.insert(res.mesh.end(), mesh.begin(), mesh.end());
    const std::size_t m = res.mesh.size();

    const Matrix a_s = family.at(s);
    Eigen::PartialPivLU<Matrix> lu(a_s);
    const Matrix a_s_inv = lu.inverse();
    std::vector<Matrix> diff(m);
    for (std::size_t k = 0; k < m; ++k) {
        diff[k] = family.at(res.mesh[k]) - a_s;
        res.contraction_estimate = std::max(res.contraction_estimate, op_norm(diff[k] * a_s_inv));
    }
    if (!(res.contraction_estimate < 1.0))
        throw NoContraction("construct_fixedpoint: contraction estimate " + std::to_string(res.contraction_estimate) +
                            " >= 1; shrink delta relative to s");

    const FrozenExponential ex(a_s);
    std::vector<Vector> free(m);
    for (std::size_t k = 0; k < m; ++k) free[k] = ex(res.mesh[k] - s) * x;

    // Step matrices e^{hA}, h(phi1 - phi2)(hA), h phi2(hA).
    std::vector<Matrix> step_e(m - 1), step_a(m - 1), step_b(m - 1);
    for (std::size_t k = 0; k + 1 < m; ++k) {
        const double h = res.mesh[k + 1] - res.mesh[k];
        if (ex.diagonalized()) {
            const Vector z = h * ex.eigenvalues();
            Vector e(n), p1(n), p2(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                e(i) = std::exp(z(i));
                p1(i) = quad::phi(1, z(i));
                p2(i) = quad::phi(2, z(i));
            }
            const Matrix& v = ex.eigenvectors();
            const Matrix& vi = ex.eigenvectors_inverse();
            step_e[k] = v * e.asDiagonal() * vi;
            step_a[k] = h * (v * (p1 - p2).asDiagonal() * vi);
            step_b[k] = h * (v * p2.asDiagonal() * vi);
        } else {
            Matrix aug = Matrix::Zero(3 * n, 3 * n);
            aug.topLeftCorner(n, n) = h * a_s;
            aug.block(0, n, n, n) = Matrix::Identity(n, n);
            aug.block(n, 2 * n, n, n) = Matrix::Identity(n, n);
            const Matrix big = aug.exp();
            step_e[k] = big.topLeftCorner(n, n);
            const Matrix p1 = big.block(0, n, n, n), p2 = big.block(0, 2 * n, n, n);
            step_a[k] = h * (p1 - p2);
            step_b[k] = h * p2;
        }
    }
    std::vector<Vector> forcing(m, Vector::Zero(n));
    if (opt.forcing)
        for (std::size_t k = 0; k < m; ++k) forcing[k] = opt.forcing(res.mesh[k]);

    std::vector<Vector> w(m, Vector::Zero(n)), next(m, Vector::Zero(n)), g(m);
    double prev = std::numeric_limits<double>::infinity();
    int growing = 0;
    for (int it = 1; it <= opt.max_iter; ++it) {
        for (std::size_t k = 0; k < m; ++k) g[k] = diff[k] * (w[k] + free[k]) + forcing[k];
        next[0].setZero();
        for (std::size_t k = 0; k + 1 < m; ++k) next[k + 1] = step_e[k] * next[k] + step_a[k] * g[k] + step_b[k] * g[k + 1];
        double inc = 0.0;
        for (std::size_t k = 0; k < m; ++k) inc = std::max(inc, (next[k] - w[k]).norm());
        std::swap(w, next);
        res.increments.push_back(inc);
        res.iterations = it;
        if (inc <= opt.tol) break;
        growing = inc >= prev ? growing + 1 : 0;
        if (growing >= 3 || !std::isfinite(inc))
            throw NoContraction("construct_fixedpoint: iterates stopped contracting at iteration " + std::to_string(it));
        prev = inc;
        if (it == opt.max_iter)
            throw NoContraction("construct_fixedpoint: no convergence within " + std::to_string(opt.max_iter) +
                                " iterations (last increment " + std::to_string(inc) + ")");
    }
    res.w = w;
    for (std::size_t k = 0; k < m; ++k) res.u.push_back(w[k] + free[k]);
    return res;
}

// Verification ---------------------------------------------------------------

struct BoundSample {
    double t = 0.0, tau = 0.0;
    double w_estimand = 0.0;  // (t - tau)^{rho-1} ||A(tau) W(t, tau)||
    double u_estimand = 0.0;  // (t - tau) ||A(tau) U(t, tau)||
    double u_norm = 0.0;
    bool on_mesh = true;
};

struct DecadeSup {
    double lo = 0.0, hi = 0.0;
    double w_sup = 0.0, u_sup = 0.0;  // sups over this decade
    double w_fit = 0.0, u_fit = 0.0;  // sups over all tau >= lo
};

struct SingularBoundsReport {
    double rho = 1.5;
    std::vector<BoundSample> samples;
    std::vector<DecadeSup> decades;
    double w_sup = 0.0, u_sup = 0.0;
    double w_max_change = 1.0, u_max_change = 1.0;  // max ratio of the fitted constant per added decade
    double w_bin_change = 1.0, u_bin_change = 1.0;  // max ratio between adjacent per-decade sups
    bool w_stable = false, u_stable = false;
    std::vector<std::pair<double, double>> u_decay;  // (tau, ||U(T, tau)||)
    double decay_ratio = 0.0;                        // ||U(T, t_min)|| / ||U(T, ~T/2)||
    bool decay_monotone = false;
    double inverse_bound_c = 0.0;  // fitted c in ||U(t,tau)|| <= c ||A^{-1}(tau)|| / (t - tau)
    bool pass = false;
};

struct BoundsOptions {
    bool probes = true;      // off-mesh times tau + x at the scale 1 / ||A(tau)||
    int probe_count = 12;
    double stability = 1.25;
    double decay_threshold = 1e-6;
    RadauOptions radau{};
};

/// Sups of the two singular estimates per decade of tau, the change of the
/// fitted constants as each decade toward t_min is added, and the decay of
/// U(T, tau) as tau -> t_min.
inline SingularBoundsReport verify_singular_bounds(const EvolutionGrid& grid, double rho,
                                                   const BoundsOptions& opt = {}) {
    const auto& fam = grid.family();
    const auto& mesh = grid.mesh();
    const std::size_t nm = grid.size();
    SingularBoundsReport rep;
    rep.rho = rho;

    auto record = [&](double t, double tau, const Matrix& a_tau, const Matrix& u, const Matrix& e, bool on_mesh) {
        BoundSample smp;
        smp.t = t;
        smp.tau = tau;
        smp.on_mesh = on_mesh;
        if (t > tau) {
            smp.w_estimand = std::pow(t - tau, rho - 1.0) * op_norm(a_tau * (u - e));
            smp.u_estimand = (t - tau) * op_norm(a_tau * u);
        }
        smp.u_norm = op_norm(u);
        rep.samples.push_back(smp);
    };

    for (std::size_t j = 0; j + 1 < nm; ++j) {
        const double tau = mesh[j];
        const Matrix a_tau = fam.at(tau);
        const FrozenExponential ex(a_tau);
        const Matrix id = Matrix::Identity(fam.dim(), fam.dim());
        record(tau, tau, a_tau, id, id, true);
        for (std::size_t i = j + 1; i < nm; ++i) record(mesh[i], tau, a_tau, grid.block(i, j), ex(mesh[i] - tau), true);
        if (opt.probes) {
            const double na = op_norm(a_tau);
            const double hi = std::min(100.0 / na, 0.5 * (mesh[j + 1] - tau));
            const double lo = 1e-2 / na;
            if (hi > lo) {
                std::vector<double> cps;
                for (double x : geometric_grid(lo, hi, opt.probe_count)) cps.push_back(tau + x);
                std::vector<Matrix> out;
                radau_integrate(family_fn(fam), nullptr, tau, cps.back(), Matrix::Identity(fam.dim(), fam.dim()),
                                opt.radau, nullptr, &cps, &out);
                for (std::size_t k = 0; k < out.size(); ++k) record(cps[k], tau, a_tau, out[k], ex(cps[k] - tau), false);
            }
        }
    }

    // Decades of tau relative to T.
    const double horizon = mesh.back();
    std::map<int, DecadeSup> bins;
    for (const auto& smp : rep.samples) {
        const int d = static_cast<int>(std::floor(std::log10(smp.tau / horizon) + 1e-12));
        auto& b = bins[d];
        b.lo = horizon * std::pow(10.0, d);
        b.hi = horizon * std::pow(10.0, d + 1);
        b.w_sup = std::max(b.w_sup, smp.w_estimand);
        b.u_sup = std::max(b.u_sup, smp.u_estimand);
        rep.w_sup = std::max(rep.w_sup, smp.w_estimand);
        rep.u_sup = std::max(rep.u_sup, smp.u_estimand);
    }
    for (const auto& [d, b] : bins) rep.decades.push_back(b);
    auto change = [](double x, double y) {
        if (x == 0.0 && y == 0.0) return 1.0;
        if (x == 0.0 || y == 0.0) return std::numeric_limits<double>::infinity();
        return std::max(x / y, y / x);
    };
    // Fitted constant down to decade k: sup over all samples with tau above its lower edge.
    double w_cum = 0.0, u_cum = 0.0;
    for (std::size_t k = rep.decades.size(); k-- > 0;) {
        auto& d = rep.decades[k];
        const double w_prev = w_cum, u_prev = u_cum;
        w_cum = std::max(w_cum, d.w_sup);
        u_cum = std::max(u_cum, d.u_sup);
        d.w_fit = w_cum;
        d.u_fit = u_cum;
        if (k + 1 < rep.decades.size()) {
            rep.w_max_change = std::max(rep.w_max_change, change(w_cum, w_prev));
            rep.u_max_change = std::max(rep.u_max_change, change(u_cum, u_prev));
            rep.w_bin_change = std::max(rep.w_bin_change, change(d.w_sup, rep.decades[k + 1].w_sup));
            rep.u_bin_change = std::max(rep.u_bin_change, change(d.u_sup, rep.decades[k + 1].u_sup));
        }
    }
    rep.w_stable = rep.w_max_change < opt.stability;
    rep.u_stable = rep.u_max_change < opt.stability;

    // Decay of U(T, tau) toward t_min.
    const std::size_t last = nm - 1;
    std::size_t half = 0;
    for (std::size_t j = 0; j < nm; ++j)
        if (std::abs(mesh[j] - 0.5 * horizon) < std::abs(mesh[half] - 0.5 * horizon)) half = j;
    // Increases below the grid's absolute accuracy are integration noise, not growth.
    const double floor = grid.tolerance();
    rep.decay_monotone = true;
    for (std::size_t j = last + 1; j-- > 0;) {
        rep.u_decay.emplace_back(mesh[j], op_norm(grid.block(last, j)));
        if (rep.u_decay.size() > 1 &&
            rep.u_decay.back().second > rep.u_decay[rep.u_decay.size() - 2].second * (1.0 + 1e-9) + floor)
            rep.decay_monotone = false;
    }
    rep.decay_ratio = op_norm(grid.block(last, 0)) / op_norm(grid.block(last, half));

    for (std::size_t j = 0; j + 1 < nm; ++j) {
        Eigen::PartialPivLU<Matrix> lu(fam.at(mesh[j]));
        const double inv = op_norm(lu.inverse());
        for (std::size_t i = j + 1; i < nm; ++i)
            rep.inverse_bound_c = std::max(rep.inverse_bound_c, op_norm(grid.block(i, j)) * (mesh[i] - mesh[j]) / inv);
    }
    rep.pass = rep.w_stable && rep.u_stable && rep.decay_ratio < opt.decay_threshold;
    return rep;
}

// Counterexample ---------------------------------------------------------------

struct CounterexampleRow {
    double tau = 0.0;
    double value = 0.0;      // sup over the eigenvalues
    double argmax = 0.0;     // |lambda| attaining it
    double envelope = 0.0;   // sup over all lambda > 0: (t - tau) / (e tau^beta I)
};

/// For A(t) = diag(eigs) / t^beta: sup over eigenvalues of
/// (t - tau) (|lambda| / tau^beta) exp(-|lambda| \int_tau^t sigma^{-beta} d sigma).
inline std::vector<CounterexampleRow> counterexample_scan(const std::vector<double>& eigs, double beta, double t,
                                                          const std::vector<double>& tau_grid) {
    if (eigs.empty()) throw EmptyGrid("counterexample_scan: no eigenvalues");
    if (tau_grid.empty()) throw EmptyGrid("counterexample_scan: empty tau grid");
    if (!(beta > 0.0 && beta <= 1.0)) throw DomainError("counterexample_scan: beta must lie in (0, 1]");
    for (double e : eigs)
        if (!(e < 0.0)) throw DomainError("counterexample_scan: eigenvalues must be negative");
    std::vector<CounterexampleRow> rows;
    for (double tau : tau_grid) {
        if (!(tau > 0.0 && tau < t)) throw DomainError("counterexample_scan: need 0 < tau < t");
        const double integral =
            beta == 1.0 ? std::log(t / tau) : (std::pow(t, 1.0 - beta) - std::pow(tau, 1.0 - beta)) / (1.0 - beta);
        CounterexampleRow row;
        row.tau = tau;
        for (double e : eigs) {
            const double lam = -e;
            const double v = (t - tau) * lam / std::pow(tau, beta) * std::exp(-lam * integral);
            if (v > row.value) {
                row.value = v;
                row.argmax = lam;
            }
        }
        row.envelope = (t - tau) / (std::numbers::e * std::pow(tau, beta) * integral);
        rows.push_back(row);
    }
    return rows;
}

// JSON ---------------------------------------------------------------------------

inline nlohmann::json to_json(const SingularBoundsReport& r) {
    nlohmann::json dec = nlohmann::json::array();
    for (const auto& d : r.decades)
        dec.push_back({{"lo", d.lo}, {"hi", d.hi}, {"w_sup", d.w_sup}, {"u_sup", d.u_sup}, {"w_fit", d.w_fit}, {"u_fit", d.u_fit}});
    nlohmann::json decay = nlohmann::json::array();
    for (const auto& [tau, v] : r.u_decay) decay.push_back({tau, v});
    return {{"rho", r.rho},
            {"w_sup", r.w_sup},
            {"u_sup", r.u_sup},
            {"w_max_change", r.w_max_change},
            {"u_max_change", r.u_max_change},
            {"w_bin_change", r.w_bin_change},
            {"u_bin_change", r.u_bin_change},
            {"w_stable", r.w_stable},
            {"u_stable", r.u_stable},
            {"decades", dec},
            {"u_decay", decay},
            {"decay_ratio", r.decay_ratio},
            {"decay_monotone", r.decay_monotone},
            {"inverse_bound_c", r.inverse_bound_c},
            {"pass", r.pass}};
}

inline nlohmann::json to_json(const std::vector<CounterexampleRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows)
        out.push_back({{"tau", r.tau}, {"value", r.value}, {"argmax", r.argmax}, {"envelope", r.envelope}});
    return out;
}

}  // namespace singevo
