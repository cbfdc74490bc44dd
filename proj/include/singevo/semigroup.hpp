#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "singevo/linops.hpp"
#include "singevo/quadrature.hpp"

namespace singevo {

enum class PanelRule { gauss_legendre, trapezoid };

/// Contour Gamma = {arg = +-eta, |lambda| >= r} u {|arg| <= eta, |lambda| = r},
/// with r = radius_scale / t. Rays are split into panels whose width in
/// u = log(|lambda| / r) is at most `ray_du_max` and over which the phase of
/// e^{lambda t} turns by at most `ray_phase_per_panel`.
struct ContourSpec {
    double eta = 0.7 * std::numbers::pi;
    double radius_scale = 1.0;
    int panel_order = 8;
    double ray_du_max = 0.3;
    double ray_phase_per_panel = 2.0;
    int arc_panels = 12;               // over the full arc
    double truncation = 1e-16;         // rays stop where |e^{lambda t}| drops below this
    double tail_tol = 1e-10;           // relative ray-truncation estimate that triggers QuadratureDivergence
    PanelRule rule = PanelRule::gauss_legendre;
    // Translate the contour toward the spectral abscissa, e^{tA} = e^{sigma t} e^{t(A - sigma)}, so a
    // strongly damped result is not recovered by cancellation of O(1) contributions.
    bool shift = true;

    void validate() const {
        if (!(eta > std::numbers::pi / 2 && eta < std::numbers::pi))
            throw DomainError("ContourSpec: eta must lie in (pi/2, pi)");
        if (radius_scale <= 0.0) throw DomainError("ContourSpec: radius must be positive");
        if (panel_order < 2 || arc_panels < 2 || panel_order * arc_panels < 8)
            throw DomainError("ContourSpec: total node count must be at least 8");
    }

    [[nodiscard]] ContourSpec refined() const {
        ContourSpec c = *this;
        c.ray_du_max *= 0.5;
        c.ray_phase_per_panel *= 0.5;
        c.arc_panels *= 2;
        return c;
    }
};

namespace detail {

struct PanelNodes {
    std::vector<double> x, w;
};

inline PanelNodes panel_nodes(double a, double b, int order, PanelRule rule) {
    PanelNodes p;
    if (rule == PanelRule::gauss_legendre) {
        const auto& g = quad::gl(order);
        for (std::size_t k = 0; k < g.nodes.size(); ++k) {
            p.x.push_back(0.5 * (a + b) + 0.5 * (b - a) * g.nodes[k]);
            p.w.push_back(0.5 * (b - a) * g.weights[k]);
        }
    } else {
        const double h = (b - a) / (order - 1);
        for (int k = 0; k < order; ++k) {
            p.x.push_back(a + k * h);
            p.w.push_back((k == 0 || k == order - 1) ? 0.5 * h : h);
        }
    }
    return p;
}

/// Integral of e^{lambda t} (lambda - A)^{-1} rhs over one half of the contour
/// (upper: arg in [0, eta] then the ray at +eta; lower: the mirror image,
/// traversed so that the full path is counterclockwise).
inline Matrix half_contour(const Matrix& a, double t, const Matrix& rhs, const ContourSpec& c, bool upper,
                           double& tail_estimate) {
    const double r = c.radius_scale / t;
    const double sgn = upper ? 1.0 : -1.0;
    const Eigen::Index n = a.rows();
    Matrix acc = Matrix::Zero(n, rhs.cols());
    Matrix shifted(n, n);

    auto add = [&](cplx lambda, cplx dlambda_weight) {
        shifted = -a;
        shifted.diagonal().array() += lambda;
        Eigen::PartialPivLU<Matrix> lu(shifted);
        acc.noalias() += (std::exp(lambda * t) * dlambda_weight) * lu.solve(rhs);
    };

    // Arc: lambda = r e^{i phi}, phi from 0 to +-eta. The lower half runs
    // from -eta to 0, i.e. the reverse direction.
    const int half_panels = std::max(1, c.arc_panels / 2);
    for (int p = 0; p < half_panels; ++p) {
        const double a0 = c.eta * p / half_panels, a1 = c.eta * (p + 1) / half_panels;
        const auto nodes = panel_nodes(a0, a1, c.panel_order, c.rule);
        for (std::size_t k = 0; k < nodes.x.size(); ++k) {
            const cplx lambda = std::polar(r, sgn * nodes.x[k]);
            // d lambda = i lambda d phi; lower half has d phi reversed twice (mirror + direction).
            add(lambda, cplx(0.0, 1.0) * lambda * nodes.w[k]);
        }
    }

    // Ray: lambda = r e^{u} e^{+-i eta}, u >= 0. Upper ray runs outward, lower inward.
    const double cos_eta = std::cos(c.eta), sin_eta = std::sin(c.eta);
    const double u_max = std::log(std::log(c.truncation) / (c.radius_scale * cos_eta));
    const cplx dir = std::polar(1.0, sgn * c.eta);
    double u = 0.0;
    while (u < u_max) {
        const double phase_rate = c.radius_scale * std::exp(u) * sin_eta;
        const double du = std::min({c.ray_du_max, c.ray_phase_per_panel / phase_rate, u_max - u});
        const auto nodes = panel_nodes(u, u + du, c.panel_order, c.rule);
        for (std::size_t k = 0; k < nodes.x.size(); ++k) {
            const cplx lambda = r * std::exp(nodes.x[k]) * dir;
            add(lambda, sgn * lambda * nodes.w[k]);
        }
        u += du;
    }
    // Tail beyond u_max: |e^{lambda t}| |lambda| ||R|| / (t |lambda| |cos eta|) bound.
    {
        const cplx lambda = r * std::exp(u_max) * dir;
        shifted = -a;
        shifted.diagonal().array() += lambda;
        Eigen::PartialPivLU<Matrix> lu(shifted);
        const double rnorm = op_norm(lu.solve(rhs));
        tail_estimate += std::abs(std::exp(lambda * t)) * rnorm / (t * std::abs(cos_eta));
    }
    return acc;
}

inline void check_contour_encloses(const Vector& spectrum, double shift, double t, const ContourSpec& c) {
    const double r = c.radius_scale / t;
    for (const cplx& lambda : spectrum) {
        const cplx mu = lambda - shift;
        if (std::abs(mu) >= r && std::abs(std::arg(mu)) <= c.eta)
            throw DomainError("exp_semigroup: spectrum is not enclosed by the contour (eta too small)");
    }
}

/// Largest shift sigma = theta * s(A), theta in {0.9, 0.75, 0.5, 0.25}, that moves no eigenvalue closer to the
/// rays than min(its unshifted angle, eta + 0.1 pi), unless it ends up within half the arc radius.
inline double contour_shift(const Vector& spectrum, double t, const ContourSpec& c) {
    if (!c.shift || spectrum.size() == 0) return 0.0;
    const double bound = spectrum.real().maxCoeff();
    if (!(bound < 0.0)) return 0.0;
    const double r = c.radius_scale / t;
    for (double theta : {0.9, 0.75, 0.5, 0.25}) {
        const double sigma = theta * bound;
        bool inside = true;
        for (const cplx& lambda : spectrum) {
            const cplx mu = lambda - sigma;
            const double keep = std::min(std::abs(std::arg(lambda)), c.eta + 0.1 * std::numbers::pi);
            inside = inside && (std::abs(mu) <= 0.5 * r || std::abs(std::arg(mu)) >= keep - 1e-12);
        }
        if (inside) return sigma;
    }
    return 0.0;
}

}  // namespace detail

/// e^{tA} rhs by quadrature of the Dunford integral
/// (1 / 2 pi i) \int_Gamma e^{lambda t} (lambda - A)^{-1} rhs d lambda.
/// Real A uses the conjugate-symmetric half contour, so the result is real
/// by construction.
inline Matrix exp_apply(const Matrix& a, double t, const Matrix& rhs, const ContourSpec& c = {}) {
    if (!(t > 0.0)) throw DomainError("exp_semigroup: t must be positive");
    c.validate();
    const Vector spectrum = eigenvalues(a);
    const double sigma = detail::contour_shift(spectrum, t, c);
    detail::check_contour_encloses(spectrum, sigma, t, c);
    Matrix as = a;
    as.diagonal().array() -= sigma;
    double tail = 0.0;
    Matrix result;
    if (is_real(a) && is_real(rhs)) {
        const Matrix upper = detail::half_contour(as, t, rhs, c, true, tail);
        result = (upper.imag() / std::numbers::pi).cast<cplx>();
        tail *= 2.0;
    } else {
        const Matrix upper = detail::half_contour(as, t, rhs, c, true, tail);
        const Matrix lower = detail::half_contour(as, t, rhs, c, false, tail);
        result = (upper + lower) / cplx(0.0, 2.0 * std::numbers::pi);
    }
    tail /= 2.0 * std::numbers::pi;
    if (tail > c.tail_tol * std::max(1.0, op_norm(result)))
        throw QuadratureDivergence("exp_semigroup: ray truncation error estimate " + std::to_string(tail) +
                                   " exceeds tolerance");
    return std::exp(sigma * t) * result;
}

inline Matrix exp_matrix(const Matrix& a, double t, const ContourSpec& c = {}) {
    return exp_apply(a, t, Matrix::Identity(a.rows(), a.cols()), c);
}

inline DenseOperator exp_semigroup(const DenseOperator& a, double t, const ContourSpec& c = {}) {
    return DenseOperator(exp_matrix(a.matrix(), t, c), "exp");
}

// Fractional powers -------------------------------------------------------

struct FracPowerRule {
    double step = 0.2;          // trapezoid step in u = log t
    double u_min = -30.0;       // lowered further for large ||A||
    double tail_digits = 45.0;  // e^{-tail_digits} relative cutoff for the upper limit
    ContourSpec contour{};
};

/// (-A)^{-rho} = Gamma(rho)^{-1} \int_0^\infty t^{rho-1} e^{tA} dt with t = e^u;
/// the integrand e^{rho u} e^{e^u A} is then smooth and decays at both ends,
/// and the bi-infinite trapezoid rule converges geometrically. The nodes do not
/// depend on rho, so several exponents share one set of exponentials.
inline std::vector<Matrix> frac_power_inv(const Matrix& a, const std::vector<double>& rhos,
                                          const FracPowerRule& rule = {}) {
    if (rhos.empty()) return {};
    for (double rho : rhos)
        if (!(rho > 0.0)) throw DomainError("frac_power_inv: rho must be positive");
    const double bound = spectral_bound(a);
    if (!(bound < 0.0)) throw DivergentTail("frac_power_inv: spectral bound is nonnegative");
    const double omega = -bound;
    const double rho_max = *std::max_element(rhos.begin(), rhos.end());
    const double anorm = std::max(op_norm(a), 1.0);
    const double u_lo = std::min(rule.u_min, std::log(1e-13 / anorm));
    double t_hi = rule.tail_digits / omega;
    for (int i = 0; i < 20; ++i) t_hi = (rule.tail_digits + std::max(0.0, rho_max * std::log(t_hi))) / omega;
    const double u_hi = std::log(t_hi);
    const int steps = static_cast<int>(std::ceil((u_hi - u_lo) / rule.step));
    const double h = (u_hi - u_lo) / steps;

    const Eigen::Index n = a.rows();
    const Matrix id = Matrix::Identity(n, n);
    std::vector<Matrix> acc(rhos.size(), Matrix::Zero(n, n));
    for (int k = 0; k <= steps; ++k) {
        const double u = u_lo + k * h;
        const double w = (k == steps) ? 0.5 * h : h;
        const Matrix e = exp_matrix(a, std::exp(u), rule.contour);
        for (std::size_t r = 0; r < rhos.size(); ++r) acc[r] += (w * std::exp(rhos[r] * u)) * e;
    }
    // Trapezoid nodes below u_lo, summed in closed form with e^{tA} ~ I + tA.
    auto geometric = [&](double s) {
        const double q = std::exp(-s * h);
        return h * std::exp(s * u_lo) * q / (1.0 - q);
    };
    for (std::size_t r = 0; r < rhos.size(); ++r) {
        acc[r] += geometric(rhos[r]) * id + geometric(rhos[r] + 1.0) * a;
        acc[r] /= std::tgamma(rhos[r]);
    }
    return acc;
}

inline Matrix frac_power_inv(const Matrix& a, double rho, const FracPowerRule& rule = {}) {
    return frac_power_inv(a, std::vector<double>{rho}, rule).front();
}

inline DenseOperator frac_power_inv(const DenseOperator& a, double rho, const FracPowerRule& rule = {}) {
    return DenseOperator(frac_power_inv(a.matrix(), rho, rule), "frac_power_inv");
}

/// (-A)^{rho} as the inverse of (-A)^{-rho}.
inline Matrix frac_power(const Matrix& a, double rho, const FracPowerRule& rule = {}) {
    const Matrix inv = frac_power_inv(a, rho, rule);
    Eigen::PartialPivLU<Matrix> lu(inv);
    if (!(lu.rcond() > 1e-12)) throw NearSingular("frac_power: (-A)^{-rho} is numerically singular");
    return lu.inverse();
}

inline DenseOperator frac_power(const DenseOperator& a, double rho, const FracPowerRule& rule = {}) {
    return DenseOperator(frac_power(a.matrix(), rho, rule), "frac_power");
}

// Interpolation seminorms ------------------------------------------------

inline std::vector<double> geometric_grid(double lo, double hi, int points) {
    std::vector<double> g;
    if (points == 1) return {hi};
    for (int k = 0; k < points; ++k) g.push_back(lo * std::pow(hi / lo, static_cast<double>(k) / (points - 1)));
    return g;
}

/// [x]_{alpha,p}: the L_p(0,1) norm of t -> ||t^{1-alpha-1/p} A e^{tA} x||
/// sampled on `t_grid` (trapezoid in t for finite p, max for p = inf).
inline double interp_seminorm(const Matrix& a, const Vector& x, double alpha, double p,
                              const std::vector<double>& t_grid, const ContourSpec& c = {}) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("interp_seminorm: alpha must lie in (0,1)");
    if (!(p >= 1.0)) throw DomainError("interp_seminorm: p must be >= 1");
    if (t_grid.empty()) throw EmptyGrid("interp_seminorm: empty grid");
    for (double t : t_grid)
        if (!(t > 0.0 && t <= 1.0)) throw DomainError("interp_seminorm: grid must lie in (0,1]");
    if (x.norm() == 0.0) return 0.0;
    const bool inf = std::isinf(p);
    const double expo = 1.0 - alpha - (inf ? 0.0 : 1.0 / p);
    std::vector<double> v;
    v.reserve(t_grid.size());
    for (double t : t_grid) {
        const Matrix ex = exp_apply(a, t, Matrix(x), c);
        v.push_back(std::pow(t, expo) * (a * ex).norm());
    }
    if (inf) return *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (std::size_t k = 1; k < t_grid.size(); ++k)
        sum += 0.5 * (t_grid[k] - t_grid[k - 1]) * (std::pow(v[k], p) + std::pow(v[k - 1], p));
    return std::pow(sum, 1.0 / p);
}

// Integral identity ---------------------------------------------------------

/// || A \int_0^t e^{sA} x ds - (e^{tA} x - x) || with adaptive quadrature.
inline double verify_integral_identity(const Matrix& a, double t, const Vector& x, double tol = 1e-13,
                                       const ContourSpec& c = {}) {
    if (!(t > 0.0)) throw DomainError("verify_integral_identity: t must be positive");
    if (x.norm() == 0.0) return 0.0;
    quad::AdaptiveGK<Vector> gk(tol * x.norm(), tol);
    const Vector integral = gk.integrate([&](double s) -> Vector { return exp_apply(a, s, Matrix(x), c); }, 0.0, t);
    const Vector ex = exp_apply(a, t, Matrix(x), c);
    return (a * integral - (ex - x)).norm();
}

// Decay ---------------------------------------------------------------------

struct DecayReport {
    double omega_est = 0.0;
    double c_est = 0.0;
    double tAe_sup = 0.0;
    std::vector<double> t_grid;
    std::vector<double> exp_norm;
    std::vector<double> tAe_norm;
};

/// Samples ||e^{tA}|| and ||t A e^{tA}|| on a log grid over (0, T] plus a
/// uniform tail on [T/2, T]; omega is the least-squares decay rate on the tail.
inline DecayReport decay_report(const Matrix& a, double horizon, int log_points = 60, int tail_points = 12,
                                const ContourSpec& c = {}) {
    if (!(horizon > 0.0)) throw DomainError("decay_report: T must be positive");
    DecayReport rep;
    rep.t_grid = geometric_grid(horizon * 1e-4, horizon * 0.5, log_points);
    rep.t_grid.pop_back();
    for (int k = 0; k < tail_points; ++k)
        rep.t_grid.push_back(horizon * (0.5 + 0.5 * k / (tail_points - 1)));
    for (double t : rep.t_grid) {
        const Matrix e = exp_matrix(a, t, c);
        rep.exp_norm.push_back(op_norm(e));
        rep.tAe_norm.push_back(t * op_norm(a * e));
    }
    rep.tAe_sup = *std::max_element(rep.tAe_norm.begin(), rep.tAe_norm.end());
    // Least squares on the tail of log ||e^{tA}||.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const auto first = rep.t_grid.size() - static_cast<std::size_t>(tail_points);
    for (std::size_t k = first; k < rep.t_grid.size(); ++k) {
        const double x = rep.t_grid[k], y = std::log(std::max(rep.exp_norm[k], 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double m = static_cast<double>(tail_points);
    rep.omega_est = -(m * sxy - sx * sy) / (m * sxx - sx * sx);
    for (std::size_t k = 0; k < rep.t_grid.size(); ++k)
        rep.c_est = std::max(rep.c_est, rep.exp_norm[k] * std::exp(rep.omega_est * rep.t_grid[k]));
    return rep;
}

inline nlohmann::json to_json(const DecayReport& r) {
    return {{"omega_est", r.omega_est}, {"c_est", r.c_est}, {"tAe_sup", r.tAe_sup}, {"t_grid", r.t_grid},
            {"exp_norm", r.exp_norm},   {"tAe_norm", r.tAe_norm}};
}

}  // namespace singevo
