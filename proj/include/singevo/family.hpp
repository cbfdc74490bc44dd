#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "singevo/linops.hpp"
#include "singevo/semigroup.hpp"

namespace singevo {

enum class FamilyKind { prototype, power, wedge_mode };

inline std::string to_string(FamilyKind k) {
    switch (k) {
        case FamilyKind::prototype: return "prototype";
        case FamilyKind::power: return "power";
        case FamilyKind::wedge_mode: return "wedge-mode";
    }
    return "unknown";
}

/// A(t) = B + C(t) / t^k on (0, T], with C(t) = sum_p t^p C_p.
class SingularFamily {
public:
    SingularFamily() = default;

    SingularFamily(Matrix b, std::vector<Matrix> c_coeffs, double k, double horizon,
                   FamilyKind kind = FamilyKind::prototype, std::string label = {})
        : b_(std::move(b)), c_(std::move(c_coeffs)), k_(k), horizon_(horizon), kind_(kind), label_(std::move(label)) {
        if (c_.empty()) throw DomainError("SingularFamily: need at least one C coefficient");
        if (b_.rows() != b_.cols()) throw DomainError("SingularFamily: B must be square");
        for (const auto& c : c_)
            if (c.rows() != b_.rows() || c.cols() != b_.cols())
                throw DomainError("SingularFamily: C coefficients must match B in size");
        if (!(k_ > 0.0)) throw DomainError("SingularFamily: exponent k must be positive");
        if (!(horizon_ > 0.0)) throw DomainError("SingularFamily: horizon T must be positive");
    }

    /// B + C / t^k with constant C.
    static SingularFamily prototype(const Matrix& b, const Matrix& c, double k, double horizon) {
        return {b, {c}, k, horizon, FamilyKind::prototype, "prototype"};
    }

    /// A / t^beta.
    static SingularFamily power(const Matrix& a, double beta, double horizon) {
        return {Matrix::Zero(a.rows(), a.cols()), {a}, beta, horizon, FamilyKind::power, "power"};
    }

    [[nodiscard]] Eigen::Index dim() const { return b_.rows(); }
    [[nodiscard]] double k() const { return k_; }
    [[nodiscard]] double horizon() const { return horizon_; }
    [[nodiscard]] FamilyKind kind() const { return kind_; }
    [[nodiscard]] const std::string& label() const { return label_; }
    [[nodiscard]] const Matrix& b() const { return b_; }
    [[nodiscard]] const std::vector<Matrix>& c_coeffs() const { return c_; }

    [[nodiscard]] Matrix c(double t) const {
        Matrix out = c_.back();
        for (auto it = c_.rbegin() + 1; it != c_.rend(); ++it) out = (out * t + *it).eval();
        return out;
    }

    /// B + C(t) / t^k. Throws DomainError outside (0, T].
    [[nodiscard]] Matrix at(double t) const {
        if (!(t > 0.0)) throw DomainError("SingularFamily: t must be positive");
        if (t > horizon_ * (1.0 + 1e-12)) throw DomainError("SingularFamily: t beyond horizon");
        return b_ + c(t) / std::pow(t, k_);
    }

    /// Same family with every operator conjugated by the unitary q.
    [[nodiscard]] SingularFamily conjugated(const Matrix& q) const {
        std::vector<Matrix> cs;
        for (const auto& c : c_) cs.push_back(q * c * q.adjoint());
        return {q * b_ * q.adjoint(), cs, k_, horizon_, kind_, label_};
    }

private:
    Matrix b_;
    std::vector<Matrix> c_;
    double k_ = 2.0;
    double horizon_ = 1.0;
    FamilyKind kind_ = FamilyKind::prototype;
    std::string label_;
};

inline DenseOperator eval(const SingularFamily& family, double t) {
    return DenseOperator(family.at(t), family.label());
}

/// Block-diagonal family acting on the direct sum of the members' spaces. All
/// members must share k and T.
inline SingularFamily block_diagonal(const std::vector<SingularFamily>& members) {
    if (members.empty()) throw DomainError("block_diagonal: no members");
    Eigen::Index n = 0;
    std::size_t ncoef = 0;
    for (const auto& m : members) {
        if (m.k() != members.front().k() || m.horizon() != members.front().horizon())
            throw DomainError("block_diagonal: members must share k and T");
        n += m.dim();
        ncoef = std::max(ncoef, m.c_coeffs().size());
    }
    Matrix b = Matrix::Zero(n, n);
    std::vector<Matrix> cs(ncoef, Matrix::Zero(n, n));
    Eigen::Index off = 0;
    for (const auto& m : members) {
        const auto d = m.dim();
        b.block(off, off, d, d) = m.b();
        for (std::size_t p = 0; p < m.c_coeffs().size(); ++p) cs[p].block(off, off, d, d) = m.c_coeffs()[p];
        off += d;
    }
    return {b, cs, members.front().k(), members.front().horizon(), members.front().kind(), "block-diagonal"};
}

// Hypotheses ----------------------------------------------------------------

/// Geometric grid t_j = T q^j, j = 0, 1, ..., down to t_min, returned increasing.
inline std::vector<double> hypothesis_grid(double horizon, double q = 0.8, double t_min_ratio = 1e-3) {
    std::vector<double> g;
    for (double t = horizon; t >= horizon * t_min_ratio * (1.0 - 1e-12); t *= q) g.push_back(t);
    std::reverse(g.begin(), g.end());
    return g;
}

/// Grid with doubled density (geometric midpoints) and one extra decade
/// toward zero at the finer ratio.
inline std::vector<double> refine_grid(const std::vector<double>& grid) {
    if (grid.size() < 2) return grid;
    std::vector<double> g;
    const double ratio = std::sqrt(grid[1] / grid[0]);
    const double stop = grid.front() * 0.1;
    for (double t = grid.front() / ratio; t >= stop * (1.0 - 1e-12); t /= ratio) g.push_back(t);
    std::reverse(g.begin(), g.end());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        g.push_back(grid[j]);
        if (j + 1 < grid.size()) g.push_back(std::sqrt(grid[j] * grid[j + 1]));
    }
    return g;
}

/// Index triples (tau <= s <= t) into an increasing grid: every adjacent
/// triple (j, j+1, j+2), every (j, j, j+1) and (j, j+1, j+1), and `pairs`
/// random ordered draws.
inline std::vector<std::array<std::size_t, 3>> hypothesis_triples(std::size_t grid_size, int pairs,
                                                                  unsigned seed = 7) {
    std::vector<std::array<std::size_t, 3>> out;
    for (std::size_t j = 0; j + 1 < grid_size; ++j) {
        out.push_back({j, j, j + 1});
        out.push_back({j, j + 1, j + 1});
        if (j + 2 < grid_size) out.push_back({j, j + 1, j + 2});
    }
    if (grid_size >= 2) {
        std::mt19937 rng(seed);
        std::uniform_int_distribution<std::size_t> pick(0, grid_size - 1);
        for (int p = 0; p < pairs; ++p) {
            std::array<std::size_t, 3> tr{pick(rng), pick(rng), pick(rng)};
            std::sort(tr.begin(), tr.end());
            out.push_back(tr);
        }
    }
    return out;
}

struct HypothesisSample {
    double tau, s, t;
    double first;   // ||[A(t)-A(s)] A^{-1}(tau)|| t / (t - s)
    double second;  // ||[A(t)-A(s)] (-A(tau))^{-rho}|| / (t - s)
};

struct HypothesisConstants {
    double c1 = 0.0, c2 = 0.0;
    std::array<double, 3> c1_argmax{}, c2_argmax{};
    std::vector<HypothesisSample> samples;
};

struct HypothesisReport {
    double rho = 1.5;
    double c1_est = 0.0, c2_est = 0.0;
    double c1_refined = 0.0, c2_refined = 0.0;
    double omega_est = 0.0;
    std::vector<std::pair<double, double>> inv_decay;
    bool c1_stable = false, c2_stable = false, inv_decay_ok = false;
    bool pass = false;
    std::string grids;
    std::string failure;
    std::array<double, 3> c1_argmax{}, c2_argmax{};
    std::vector<HypothesisSample> samples;
};

struct HypothesisOptions {
    int pairs = 200;
    unsigned seed = 7;
    double stability_factor = 1.25;
    int omega_samples = 4;
    bool refine = true;
    FracPowerRule frac{};
};

/// Both hypothesis estimands sampled over the grid's triples, one result per
/// rho (the first estimand does not depend on rho). An empty `rhos` skips the
/// second estimand.
inline std::vector<HypothesisConstants> hypothesis_constants(const SingularFamily& family,
                                                             const std::vector<double>& rhos,
                                                             const std::vector<double>& grid,
                                                             const HypothesisOptions& opt) {
    if (grid.empty()) throw EmptyGrid("hypothesis check: empty grid");
    const std::size_t nr = std::max<std::size_t>(rhos.size(), 1);
    std::vector<Matrix> a, a_inv;
    std::vector<std::vector<Matrix>> frac;  // frac[grid index][rho index]
    for (double t : grid) {
        a.push_back(family.at(t));
        Eigen::PartialPivLU<Matrix> lu(a.back());
        if (!(lu.rcond() > 1e-14)) throw NearSingular("hypothesis check: A(t) numerically singular");
        a_inv.push_back(lu.inverse());
        frac.push_back(frac_power_inv(a.back(), rhos, opt.frac));
    }
    std::vector<HypothesisConstants> out(nr);
    for (const auto& tr : hypothesis_triples(grid.size(), opt.pairs, opt.seed)) {
        const double tau = grid[tr[0]], s = grid[tr[1]], t = grid[tr[2]];
        const Matrix diff = a[tr[2]] - a[tr[1]];
        const double first = tr[1] == tr[2] ? 0.0 : op_norm(diff * a_inv[tr[0]]) * t / (t - s);
        for (std::size_t r = 0; r < nr; ++r) {
            HypothesisSample smp{tau, s, t, first, 0.0};
            if (!rhos.empty() && tr[1] != tr[2]) smp.second = op_norm(diff * frac[tr[0]][r]) / (t - s);
            auto& o = out[r];
            if (smp.first > o.c1) {
                o.c1 = smp.first;
                o.c1_argmax = {tau, s, t};
            }
            if (smp.second > o.c2) {
                o.c2 = smp.second;
                o.c2_argmax = {tau, s, t};
            }
            o.samples.push_back(smp);
        }
    }
    return out;
}

inline HypothesisConstants hypothesis_constants(const SingularFamily& family, double rho,
                                                const std::vector<double>& grid, const HypothesisOptions& opt) {
    return hypothesis_constants(family, std::vector<double>{rho}, grid, opt).front();
}

/// Numerical surrogate for the structural hypotheses: A(t) stable, the two
/// Lipschitz-type bounds with constants that stay put under refinement, and
/// A^{-1}(t) -> 0 as t -> 0.
inline HypothesisReport check_hypotheses(const SingularFamily& family, double rho, const std::vector<double>& grid,
                                         const HypothesisOptions& opt = {}) {
    if (grid.empty()) throw EmptyGrid("check_hypotheses: empty grid");
    if (!(rho > 1.0 && rho < 2.0)) throw DomainError("check_hypotheses: rho must lie in (1,2)");
    for (double t : grid)
        if (!(t > 0.0 && t <= family.horizon() * (1.0 + 1e-12)))
            throw DomainError("check_hypotheses: grid must lie in (0, T]");

    HypothesisReport rep;
    rep.rho = rho;
    rep.grids = "base: " + std::to_string(grid.size()) + " points on [" + std::to_string(grid.front()) + ", " +
                std::to_string(grid.back()) + "]";
    try {
        auto base = hypothesis_constants(family, rho, grid, opt);
        rep.c1_est = base.c1;
        rep.c2_est = base.c2;
        rep.c1_argmax = base.c1_argmax;
        rep.c2_argmax = base.c2_argmax;
        rep.samples = std::move(base.samples);
        if (opt.refine) {
            const auto fine = refine_grid(grid);
            rep.grids += "; refined: " + std::to_string(fine.size()) + " points on [" + std::to_string(fine.front()) +
                         ", " + std::to_string(fine.back()) + "]";
            HypothesisOptions o2 = opt;
            o2.pairs = opt.pairs * 2;
            const auto ref = hypothesis_constants(family, rho, fine, o2);
            rep.c1_refined = ref.c1;
            rep.c2_refined = ref.c2;
        } else {
            rep.c1_refined = rep.c1_est;
            rep.c2_refined = rep.c2_est;
        }
    } catch (const NearSingular& e) {
        rep.failure = std::string("near-singular operator: ") + e.what();
        rep.pass = false;
        return rep;
    }

    auto stable = [&](double base, double ref) {
        if (!std::isfinite(base) || !std::isfinite(ref)) return false;
        if (base == 0.0) return ref == 0.0;
        return ref / base < opt.stability_factor && base / ref < opt.stability_factor;
    };
    rep.c1_stable = stable(rep.c1_est, rep.c1_refined);
    rep.c2_stable = stable(rep.c2_est, rep.c2_refined);

    for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
        Eigen::PartialPivLU<Matrix> lu(family.at(*it));
        rep.inv_decay.emplace_back(*it, op_norm(lu.inverse()));
    }
    // Nonincreasing toward t_min (1% slack) and a clear overall drop.
    rep.inv_decay_ok = rep.inv_decay.back().second < 0.5 * rep.inv_decay.front().second;
    for (std::size_t k = 1; k < rep.inv_decay.size(); ++k)
        if (rep.inv_decay[k].second > 1.01 * rep.inv_decay[k - 1].second) rep.inv_decay_ok = false;

    rep.omega_est = std::numeric_limits<double>::infinity();
    const int m = std::max(1, std::min<int>(opt.omega_samples, static_cast<int>(grid.size())));
    for (int i = 0; i < m; ++i) {
        const std::size_t idx = (m == 1) ? grid.size() - 1 : (grid.size() - 1) * static_cast<std::size_t>(i) / (m - 1);
        const Matrix a = family.at(grid[idx]);
        const double sb = spectral_bound(a);
        if (!(sb < 0.0)) {
            rep.omega_est = sb == 0.0 ? 0.0 : sb * -1.0;
            break;
        }
        const auto dr = decay_report(a, 40.0 / -sb, 20, 8, opt.frac.contour);
        rep.omega_est = std::min(rep.omega_est, dr.omega_est);
    }

    rep.pass = rep.c1_stable && rep.c2_stable && rep.omega_est > 0.0 && rep.inv_decay_ok;
    if (!rep.pass) {
        if (!rep.c1_stable) rep.failure += "first bound constant not stable under refinement (" +
                                           std::to_string(rep.c1_est) + " -> " + std::to_string(rep.c1_refined) + "); ";
        if (!rep.c2_stable) rep.failure += "second bound constant not stable under refinement (" +
                                           std::to_string(rep.c2_est) + " -> " + std::to_string(rep.c2_refined) + "); ";
        if (!(rep.omega_est > 0.0)) rep.failure += "generator not exponentially decaying; ";
        if (!rep.inv_decay_ok) rep.failure += "A^{-1}(t) does not decay toward t_min; ";
    }
    return rep;
}

struct RhoScan {
    std::vector<double> rho;
    std::vector<double> c2_est;
    std::vector<double> c2_refined;
    double best_rho = 0.0;
};

/// c2 across rho = 1.1, 1.2, ..., 1.9. The best rho is the smallest one whose
/// constant is stable under refinement, or the minimizer of c2 if none is.
inline RhoScan scan_rho(const SingularFamily& family, const std::vector<double>& grid,
                        const HypothesisOptions& opt = {}) {
    if (grid.empty()) throw EmptyGrid("scan_rho: empty grid");
    RhoScan scan;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 1; i <= 9; ++i) scan.rho.push_back(1.0 + 0.1 * i);
    for (const auto& c : hypothesis_constants(family, scan.rho, grid, opt)) scan.c2_est.push_back(c.c2);
    if (opt.refine) {
        for (const auto& c : hypothesis_constants(family, scan.rho, refine_grid(grid), opt))
            scan.c2_refined.push_back(c.c2);
    } else {
        scan.c2_refined = scan.c2_est;
    }
    for (std::size_t i = 0; i < scan.rho.size(); ++i) {
        const bool stable = scan.c2_refined[i] < opt.stability_factor * scan.c2_est[i];
        if (stable) {
            scan.best_rho = scan.rho[i];
            return scan;
        }
        if (scan.c2_est[i] < best) {
            best = scan.c2_est[i];
            scan.best_rho = scan.rho[i];
        }
    }
    return scan;
}

/// ||A(t) [e^{(t-tau)A(tau)} - e^{(t-tau)A(t)}]||.
inline double semigroup_difference_bound(const SingularFamily& family, double tau, double t,
                                         const ContourSpec& c = {}) {
    if (!(tau > 0.0 && tau <= t)) throw DomainError("semigroup_difference_bound: need 0 < tau <= t");
    if (tau == t) return 0.0;
    const Matrix at = family.at(t);
    const Matrix diff = exp_matrix(family.at(tau), t - tau, c) - exp_matrix(at, t - tau, c);
    return op_norm(at * diff);
}

// JSON ------------------------------------------------------------------------

inline nlohmann::json to_json(const HypothesisReport& r) {
    nlohmann::json inv = nlohmann::json::array();
    for (const auto& [t, v] : r.inv_decay) inv.push_back({t, v});
    return {{"rho", r.rho},
            {"c1_est", r.c1_est},
            {"c2_est", r.c2_est},
            {"c1_refined", r.c1_refined},
            {"c2_refined", r.c2_refined},
            {"c1_stable", r.c1_stable},
            {"c2_stable", r.c2_stable},
            {"c1_argmax", r.c1_argmax},
            {"c2_argmax", r.c2_argmax},
            {"omega_est", r.omega_est},
            {"inv_decay", inv},
            {"inv_decay_ok", r.inv_decay_ok},
            {"pass", r.pass},
            {"grids", r.grids},
            {"failure", r.failure}};
}

inline nlohmann::json to_json(const RhoScan& s) {
    return {{"rho", s.rho}, {"c2_est", s.c2_est}, {"c2_refined", s.c2_refined}, {"best_rho", s.best_rho}};
}

/// {"kind": "prototype"|"power", "B": matrix, "C": matrix or [matrices], "k": .., "T": ..}
/// power families use "A" and "beta".
inline SingularFamily family_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind")) throw ConfigError("family: missing \"kind\"");
    const auto kind = j.at("kind").get<std::string>();
    auto check_keys = [&](std::initializer_list<const char*> allowed) {
        for (const auto& [key, _] : j.items()) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || key == a;
            if (!ok) throw ConfigError("family: unknown key \"" + key + "\"");
        }
    };
    const double horizon = j.value("T", 1.0);
    if (kind == "prototype") {
        check_keys({"kind", "B", "C", "k", "T"});
        if (!j.contains("B") || !j.contains("C")) throw ConfigError("prototype family needs B and C");
        std::vector<Matrix> cs;
        if (j.at("C").is_array())
            for (const auto& c : j.at("C")) cs.push_back(matrix_from_json(c));
        else
            cs.push_back(matrix_from_json(j.at("C")));
        return {matrix_from_json(j.at("B")), cs, j.value("k", 2.0), horizon, FamilyKind::prototype, "prototype"};
    }
    if (kind == "power") {
        check_keys({"kind", "A", "beta", "T"});
        if (!j.contains("A")) throw ConfigError("power family needs A");
        return SingularFamily::power(matrix_from_json(j.at("A")), j.value("beta", 1.0), horizon);
    }
    throw ConfigError("family: unknown kind \"" + kind + "\"");
}

}  // namespace singevo
