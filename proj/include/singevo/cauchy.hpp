#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "singevo/evolution.hpp"

namespace singevo {

/// Vector-valued samples on a strictly increasing time mesh in (0, T].
struct GridFunction {
    std::vector<double> mesh;
    std::vector<Vector> values;
    int space_dim = 0;

    GridFunction() = default;
    GridFunction(std::vector<double> m, std::vector<Vector> v) : mesh(std::move(m)), values(std::move(v)) {
        if (mesh.size() != values.size()) throw DomainError("GridFunction: values length does not match mesh length");
        if (mesh.empty()) throw DegenerateMesh("GridFunction: empty mesh");
        if (!(mesh.front() > 0.0)) throw DomainError("GridFunction: mesh must lie in (0, T]");
        for (std::size_t i = 1; i < mesh.size(); ++i)
            if (!(mesh[i] > mesh[i - 1])) throw DomainError("GridFunction: mesh must be strictly increasing");
        space_dim = static_cast<int>(values.front().size());
        for (const auto& x : values)
            if (x.size() != space_dim) throw DomainError("GridFunction: inconsistent value dimensions");
    }

    static GridFunction sample(const std::vector<double>& mesh, const std::function<Vector(double)>& f) {
        std::vector<Vector> v;
        v.reserve(mesh.size());
        for (double t : mesh) v.push_back(f(t));
        return {mesh, std::move(v)};
    }

    static GridFunction zeros(const std::vector<double>& mesh, int n) {
        return {mesh, std::vector<Vector>(mesh.size(), Vector::Zero(n))};
    }

    [[nodiscard]] std::size_t size() const { return mesh.size(); }
};

/// a * x + b * y on a shared mesh.
inline GridFunction combine(cplx a, const GridFunction& x, cplx b, const GridFunction& y) {
    if (x.mesh != y.mesh) throw DomainError("combine: meshes differ");
    std::vector<Vector> v(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = a * x.values[i] + b * y.values[i];
    return {x.mesh, std::move(v)};
}

inline double sup_norm(const GridFunction& v) {
    double s = 0.0;
    for (const auto& x : v.values) s = std::max(s, x.norm());
    return s;
}

struct HolderReport {
    double alpha = 0.0;
    double beta = 0.0;
    double weight = 0.0;  // exponent w in [t^w v]_alpha
    double sup_part = 0.0;
    double seminorm = 0.0;
    double argmax_t = 0.0;
    double argmax_s = 0.0;
    double norm = 0.0;
};

namespace detail {

// sup_j ||t_j^beta v_j|| + max_{pairs} ||t^w v(t) - s^w v(s)|| / (t - s)^alpha over mesh points with t_j >= from.
inline HolderReport holder(const GridFunction& v, double alpha, double beta, double weight, double from = 0.0) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("holder_norm: alpha must lie in (0,1)");
    if (!(beta >= 0.0)) throw DomainError("holder_norm: beta must be >= 0");
    const auto first = static_cast<std::size_t>(std::lower_bound(v.mesh.begin(), v.mesh.end(), from) - v.mesh.begin());
    if (v.size() - first < 2) throw DegenerateMesh("holder_norm: need at least two mesh points");
    HolderReport r;
    r.alpha = alpha;
    r.beta = beta;
    r.weight = weight;
    std::vector<Vector> w(v.size());
    for (std::size_t i = first; i < v.size(); ++i) {
        const double t = v.mesh[i];
        r.sup_part = std::max(r.sup_part, std::pow(t, beta) * v.values[i].norm());
        w[i] = std::pow(t, weight) * v.values[i];
    }
    r.argmax_s = v.mesh[first];
    r.argmax_t = v.mesh[first + 1];
    for (std::size_t i = first + 1; i < v.size(); ++i)
        for (std::size_t j = first; j < i; ++j) {
            const double q = (w[i] - w[j]).norm() / std::pow(v.mesh[i] - v.mesh[j], alpha);
            if (q > r.seminorm) {
                r.seminorm = q;
                r.argmax_t = v.mesh[i];
                r.argmax_s = v.mesh[j];
            }
        }
    r.norm = r.sup_part + r.seminorm;
    return r;
}

}  // namespace detail

/// Singular Hölder norm ||t^beta v||_inf + [t^(alpha+beta) v]_alpha by brute force over all mesh pairs.
inline HolderReport holder_norm(const GridFunction& v, double alpha, double beta) {
    return detail::holder(v, alpha, beta, alpha + beta);
}

/// Unweighted Hölder norm ||v||_inf + [v]_alpha, optionally restricted to mesh points t >= from.
inline HolderReport plain_holder_norm(const GridFunction& v, double alpha, double from = 0.0) {
    return detail::holder(v, alpha, 0.0, 0.0, from);
}

/// Product-integration weights for u(t_i) = int_0^{t_i} U(t_i, tau) f(tau) dtau with f piecewise linear.
/// left[j], right[j] integrate U(t_{j+1}, .) against the hat functions of t_j, t_{j+1} over [t_j, t_{j+1}];
/// initial covers [0, t_0] with the generator frozen at t_0.
struct ScpWeights {
    std::vector<double> mesh;
    std::vector<Matrix> left;
    std::vector<Matrix> right;
    Matrix initial;
};

inline ScpWeights scp_weights(const SingularFamily& family, const std::vector<double>& mesh, double tol = 1e-11) {
    validate_mesh(family, mesh);
    const Eigen::Index n = family.dim();
    ScpWeights w;
    w.mesh = mesh;
    const double t0 = mesh.front();
    Matrix aug = Matrix::Zero(2 * n, 2 * n);
    aug.topLeftCorner(n, n) = t0 * family.at(t0);
    aug.topRightCorner(n, n) = t0 * Matrix::Identity(n, n);
    w.initial = Matrix(aug.exp()).topRightCorner(n, n);

    const MatrixFn a_fn = family_fn(family);
    for (std::size_t j = 0; j + 1 < mesh.size(); ++j) {
        const double lo = mesh[j], hi = mesh[j + 1], h = hi - lo;
        const MatrixFn forcing = [&, n](double t) {
            Matrix f = Matrix::Zero(n, 2 * n);
            f.leftCols(n).diagonal().setConstant((hi - t) / h);
            f.rightCols(n).diagonal().setConstant((t - lo) / h);
            return f;
        };
        RadauOptions opt;
        opt.rtol = tol;
        opt.atol = tol * h * 1e-2;
        const Matrix q = radau_integrate(a_fn, &forcing, lo, hi, Matrix::Zero(n, 2 * n), opt);
        w.left.push_back(q.leftCols(n));
        w.right.push_back(q.rightCols(n));
    }
    return w;
}

/// Variation-of-constants solution u(t) = int_0^t U(t, tau) f(tau) dtau on the grid mesh.
inline GridFunction solve_scp(const EvolutionGrid& grid, const GridFunction& f, const ScpWeights& w) {
    if (f.mesh != grid.mesh() || w.mesh != grid.mesh()) throw DomainError("solve_scp: f, weights and grid meshes differ");
    if (f.space_dim != grid.dim()) throw DomainError("solve_scp: dimension mismatch");
    const std::size_t m = f.size();
    std::vector<Vector> g(m);
    g[0] = w.initial * f.values[0];
    for (std::size_t j = 0; j + 1 < m; ++j) g[j + 1] = w.left[j] * f.values[j] + w.right[j] * f.values[j + 1];
    std::vector<Vector> u(m);
    for (std::size_t i = 0; i < m; ++i) {
        Vector acc = Vector::Zero(f.space_dim);
        for (std::size_t j = 0; j <= i; ++j) acc += grid.block(i, j) * g[j];
        u[i] = std::move(acc);
    }
    return {f.mesh, std::move(u)};
}

inline GridFunction solve_scp(const SingularFamily& family, const EvolutionGrid& grid, const GridFunction& f) {
    if (family.dim() != grid.dim()) throw DomainError("solve_scp: family and grid dimensions differ");
    return solve_scp(grid, f, scp_weights(family, grid.mesh()));
}

/// A(t_i) u(t_i) on the mesh of u.
inline GridFunction apply_family(const SingularFamily& family, const GridFunction& u) {
    std::vector<Vector> v(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) v[i] = family.at(u.mesh[i]) * u.values[i];
    return {u.mesh, std::move(v)};
}

/// Interior residual ||u' - A(t)u - f|| with u' by centered differences; returns (t_i, residual_i).
inline std::vector<std::pair<double, double>> equation_residual(const SingularFamily& family, const GridFunction& u,
                                                                const GridFunction& f) {
    if (u.mesh != f.mesh) throw DomainError("equation_residual: meshes differ");
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 1; i + 1 < u.size(); ++i) {
        const double hm = u.mesh[i] - u.mesh[i - 1], hp = u.mesh[i + 1] - u.mesh[i];
        // Three-point derivative on a nonuniform mesh.
        const Vector du = -hp / (hm * (hm + hp)) * u.values[i - 1] + (hp - hm) / (hm * hp) * u.values[i] +
                          hm / (hp * (hm + hp)) * u.values[i + 1];
        const Vector r = du - family.at(u.mesh[i]) * u.values[i] - f.values[i];
        out.emplace_back(u.mesh[i], r.norm());
    }
    return out;
}

/// Data classes of the maximal-regularity theorems: Hölder functions vanishing at the origin
/// (unweighted norm) and bounded functions with t^alpha f Hölder (weighted norm).
enum class RegularityClass { vanishing, weighted };

inline std::string to_string(RegularityClass c) { return c == RegularityClass::vanishing ? "vanishing" : "weighted"; }

/// Discrete surrogate for f(0) = 0: ||f(t_min)|| <= slack * t_min^alpha [f]_alpha. The mesh seminorm of t^alpha
/// itself stays below 1, so slack = 2 keeps that borderline member in the vanishing class.
inline RegularityClass classify(const GridFunction& f, double alpha, double slack = 2.0) {
    const auto h = plain_holder_norm(f, alpha);
    return f.values.front().norm() <= slack * std::pow(f.mesh.front(), alpha) * h.seminorm
               ? RegularityClass::vanishing
               : RegularityClass::weighted;
}

inline HolderReport class_norm(const GridFunction& v, double alpha, RegularityClass c) {
    return c == RegularityClass::vanishing ? plain_holder_norm(v, alpha) : holder_norm(v, alpha, 0.0);
}

struct EmbedRow {
    double delta = 0.0;
    double window_norm = 0.0;
    double constant = 0.0;  // delta^alpha ||f||_{alpha,[delta,T]} / ||f||_{alpha,s}
};

struct EmbedReport {
    double alpha = 0.0;
    double rho = 0.0;
    double rho_norm = 0.0;       // ||f||_{alpha, rho - 1}
    double plain_norm = 0.0;     // ||f||_alpha
    double weighted_norm = 0.0;  // ||f||_{alpha, s}
    double rho_constant = 0.0;   // rho_norm / plain_norm
    double window_constant = 0.0;
    std::vector<EmbedRow> windows;
};

/// Embedding constants ||f||_{alpha,rho-1} <= c ||f||_alpha and ||f||_{alpha,[delta,T]} <= c delta^-alpha ||f||_{alpha,s}.
inline EmbedReport embed_check(const GridFunction& f, double alpha, double rho, std::vector<double> deltas = {}) {
    if (!(rho > 1.0 && rho < 2.0)) throw DomainError("embed_check: rho must lie in (1,2)");
    EmbedReport r;
    r.alpha = alpha;
    r.rho = rho;
    r.rho_norm = holder_norm(f, alpha, rho - 1.0).norm;
    r.plain_norm = plain_holder_norm(f, alpha).norm;
    r.weighted_norm = holder_norm(f, alpha, 0.0).norm;
    r.rho_constant = r.plain_norm > 0.0 ? r.rho_norm / r.plain_norm : 0.0;
    if (deltas.empty())
        for (double d = f.mesh.back() / 2; d > f.mesh.front(); d /= 10.0) deltas.push_back(d);
    for (double d : deltas) {
        if (f.mesh.end() - std::lower_bound(f.mesh.begin(), f.mesh.end(), d) < 2) continue;
        EmbedRow row;
        row.delta = d;
        row.window_norm = plain_holder_norm(f, alpha, d).norm;
        row.constant = r.weighted_norm > 0.0 ? std::pow(d, alpha) * row.window_norm / r.weighted_norm : 0.0;
        r.window_constant = std::max(r.window_constant, row.constant);
        r.windows.push_back(row);
    }
    return r;
}

struct MaxRegReport {
    RegularityClass cls = RegularityClass::vanishing;
    double alpha = 0.0;
    double rho = 0.0;
    HolderReport f_norm, udot_norm, au_norm;
    double ratio = 0.0;  // (||u'|| + ||Au||) / ||f||
    bool vacuous = false;
    double origin_exponent = std::numeric_limits<double>::quiet_NaN();  // slope of log ||A u|| vs log t near t_min
    double f_origin_exponent = std::numeric_limits<double>::quiet_NaN();
    double origin_constant = 0.0;                                        // max ||A(t)u(t)|| / t^alpha near t_min
    double au_sup_origin = 0.0;
    bool origin_ok = true;
    double max_residual = 0.0;
    EmbedReport embedding;
    bool pass = false;
};

/// Maximal-regularity check: solves, forms A u and u' = A u + f, and compares class norms.
inline MaxRegReport verify_maxreg(const SingularFamily& family, const EvolutionGrid& grid, const GridFunction& f,
                                  double alpha, double rho, const ScpWeights& w, std::optional<RegularityClass> cls = {}) {
    MaxRegReport r;
    r.alpha = alpha;
    r.rho = rho;
    r.cls = cls ? *cls : classify(f, alpha);
    const GridFunction u = solve_scp(grid, f, w);
    const GridFunction au = apply_family(family, u);
    const GridFunction udot = combine(1.0, au, 1.0, f);
    r.f_norm = class_norm(f, alpha, r.cls);
    r.udot_norm = class_norm(udot, alpha, r.cls);
    r.au_norm = class_norm(au, alpha, r.cls);
    r.embedding = embed_check(f, alpha, rho);
    for (const auto& [t, res] : equation_residual(family, u, f)) r.max_residual = std::max(r.max_residual, res);

    // Behaviour over the first decade above t_min.
    const double edge = 10.0 * f.mesh.front();
    auto onset = [&](const GridFunction& v) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int cnt = 0;
        for (std::size_t i = 0; i < v.size() && v.mesh[i] <= edge * (1 + 1e-12); ++i) {
            const double a = v.values[i].norm();
            if (a <= 0.0) continue;
            const double x = std::log(v.mesh[i]), y = std::log(a);
            sx += x, sy += y, sxx += x * x, sxy += x * y, ++cnt;
        }
        return cnt >= 3 ? (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx) : std::numeric_limits<double>::quiet_NaN();
    };
    for (std::size_t i = 0; i < u.size() && u.mesh[i] <= edge * (1 + 1e-12); ++i) {
        const double a = au.values[i].norm();
        r.au_sup_origin = std::max(r.au_sup_origin, a);
        r.origin_constant = std::max(r.origin_constant, a / std::pow(u.mesh[i], alpha));
    }
    r.origin_exponent = onset(au);
    r.f_origin_exponent = onset(f);

    if (r.f_norm.norm == 0.0) {
        r.vacuous = true;
        r.pass = true;
        return r;
    }
    r.ratio = (r.udot_norm.norm + r.au_norm.norm) / r.f_norm.norm;
    // A u inherits the onset of f at the origin: its exponent must reach min(alpha, onset of f) - 0.1.
    if (r.cls == RegularityClass::vanishing && std::isfinite(r.origin_exponent) && std::isfinite(r.f_origin_exponent))
        r.origin_ok = r.origin_exponent >= std::min(alpha, r.f_origin_exponent) - 0.1;
    r.pass = std::isfinite(r.ratio) && r.origin_ok;
    return r;
}

inline MaxRegReport verify_maxreg(const SingularFamily& family, const EvolutionGrid& grid, const GridFunction& f,
                                  double alpha, double rho) {
    return verify_maxreg(family, grid, f, alpha, rho, scp_weights(family, grid.mesh()));
}

/// Piecewise-linear random path with Hölder-alpha increments on geometric knots. Vanishing paths start at 0,
/// weighted paths start at a random nonzero value.
class HolderPath {
public:
    HolderPath(int dim, double alpha, double horizon, RegularityClass cls, std::mt19937& rng, int knots = 32,
               double t_lo_ratio = 1e-4) {
        std::normal_distribution<double> g(0.0, 1.0);
        knots_.push_back(0.0);
        for (int k = 0; k < knots; ++k)
            knots_.push_back(horizon * std::pow(t_lo_ratio, 1.0 - static_cast<double>(k) / (knots - 1)));
        Vector v = Vector::Zero(dim);
        if (cls == RegularityClass::weighted)
            for (int i = 0; i < dim; ++i) v(i) = 1.0 + std::abs(g(rng));
        values_.push_back(v);
        for (std::size_t k = 1; k < knots_.size(); ++k) {
            const double scale = std::pow(knots_[k] - knots_[k - 1], alpha);
            for (int i = 0; i < dim; ++i) v(i) += scale * g(rng);
            values_.push_back(v);
        }
    }

    [[nodiscard]] Vector operator()(double t) const {
        const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
        if (it == knots_.end()) return values_.back();
        const auto k = static_cast<std::size_t>(it - knots_.begin());
        const double x = (t - knots_[k - 1]) / (knots_[k] - knots_[k - 1]);
        return (1.0 - x) * values_[k - 1] + x * values_[k];
    }

    [[nodiscard]] GridFunction sample(const std::vector<double>& mesh) const {
        return GridFunction::sample(mesh, [this](double t) { return (*this)(t); });
    }

private:
    std::vector<double> knots_;
    std::vector<Vector> values_;
};

struct MaxRegStudy {
    RegularityClass cls = RegularityClass::vanishing;
    std::vector<std::size_t> mesh_sizes;
    std::vector<std::vector<double>> ratios;  // [level][sample]
    double spread = 0.0;                      // max R / min R over everything
    double refinement_change = 0.0;           // worst relative change of R between consecutive levels
    int origin_failures = 0;
    bool pass = false;
};

/// Regularity ratios for random paths of one class across a sequence of grids of the same family.
inline MaxRegStudy maxreg_study(const SingularFamily& family, const std::vector<const EvolutionGrid*>& grids,
                                RegularityClass cls, double alpha, double rho, int samples, unsigned seed) {
    MaxRegStudy s;
    s.cls = cls;
    std::mt19937 rng(seed);
    std::vector<HolderPath> paths;
    for (int k = 0; k < samples; ++k) paths.emplace_back(family.dim(), alpha, family.horizon(), cls, rng);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto* g : grids) {
        const auto w = scp_weights(family, g->mesh());
        s.mesh_sizes.push_back(g->size());
        auto& row = s.ratios.emplace_back();
        for (const auto& p : paths) {
            const auto rep = verify_maxreg(family, *g, p.sample(g->mesh()), alpha, rho, w, cls);
            if (!rep.origin_ok) ++s.origin_failures;
            row.push_back(rep.ratio);
            lo = std::min(lo, rep.ratio);
            hi = std::max(hi, rep.ratio);
        }
    }
    s.spread = hi / lo;
    for (std::size_t l = 1; l < s.ratios.size(); ++l)
        for (std::size_t k = 0; k < paths.size(); ++k)
            s.refinement_change =
                std::max(s.refinement_change, std::abs(s.ratios[l][k] / s.ratios[l - 1][k] - 1.0));
    s.pass = std::isfinite(s.spread) && s.spread <= 2.0 && s.refinement_change < 0.25;
    return s;
}

inline nlohmann::json to_json(const HolderReport& h) {
    return {{"alpha", h.alpha},       {"beta", h.beta},       {"weight", h.weight},
            {"sup_part", h.sup_part}, {"seminorm", h.seminorm}, {"argmax_pair", {h.argmax_t, h.argmax_s}},
            {"norm", h.norm}};
}

inline nlohmann::json to_json(const EmbedReport& e) {
    nlohmann::json w = nlohmann::json::array();
    for (const auto& r : e.windows) w.push_back({{"delta", r.delta}, {"window_norm", r.window_norm}, {"constant", r.constant}});
    return {{"alpha", e.alpha},
            {"rho", e.rho},
            {"rho_norm", e.rho_norm},
            {"plain_norm", e.plain_norm},
            {"weighted_norm", e.weighted_norm},
            {"rho_constant", e.rho_constant},
            {"window_constant", e.window_constant},
            {"windows", w}};
}

inline nlohmann::json to_json(const MaxRegReport& r) {
    auto num = [](double x) -> nlohmann::json { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
    return {{"class", to_string(r.cls)},
            {"alpha", r.alpha},
            {"rho", r.rho},
            {"f_norm", to_json(r.f_norm)},
            {"udot_norm", to_json(r.udot_norm)},
            {"au_norm", to_json(r.au_norm)},
            {"ratio", r.vacuous ? nlohmann::json(nullptr) : num(r.ratio)},
            {"vacuous", r.vacuous},
            {"origin_exponent", num(r.origin_exponent)},
            {"f_origin_exponent", num(r.f_origin_exponent)},
            {"origin_constant", num(r.origin_constant)},
            {"au_sup_origin", r.au_sup_origin},
            {"origin_ok", r.origin_ok},
            {"max_residual", r.max_residual},
            {"embedding", to_json(r.embedding)},
            {"pass", r.pass}};
}

inline nlohmann::json to_json(const MaxRegStudy& s) {
    return {{"class", to_string(s.cls)}, {"mesh_sizes", s.mesh_sizes}, {"ratios", s.ratios},
            {"spread", s.spread},        {"refinement_change", s.refinement_change},
            {"origin_failures", s.origin_failures}, {"pass", s.pass}};
}

}  // namespace singevo
