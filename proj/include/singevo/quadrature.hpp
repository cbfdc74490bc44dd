#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "singevo/errors.hpp"

namespace singevo::quad {

/// Gauss-Legendre rule on [-1, 1].
struct Rule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline Rule gauss_legendre(int order) {
    if (order < 1) throw DomainError("gauss_legendre: order must be positive");
    Rule rule;
    rule.nodes.resize(static_cast<std::size_t>(order));
    rule.weights.resize(static_cast<std::size_t>(order));
    if (order == 1) {
        rule.nodes[0] = 0.0;
        rule.weights[0] = 2.0;
        return rule;
    }
    // Legendre P_n and its derivative at x by the three-term recurrence.
    auto legendre = [order](double x) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= order; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        return std::pair{p1, order * (x * p1 - p0) / (x * x - 1.0)};
    };
    for (int i = 0; i < order; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
        for (int iter = 0; iter < 100; ++iter) {
            const auto [p, dp] = legendre(x);
            const double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double dp = legendre(x).second;
        const auto idx = static_cast<std::size_t>(order - 1 - i);
        rule.nodes[idx] = x;
        rule.weights[idx] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

/// Cached Gauss-Legendre rules by order.
inline const Rule& gl(int order) {
    static thread_local std::vector<Rule> cache;
    if (static_cast<int>(cache.size()) <= order) cache.resize(static_cast<std::size_t>(order + 1));
    auto& r = cache[static_cast<std::size_t>(order)];
    if (r.nodes.empty()) r = gauss_legendre(order);
    return r;
}

/// phi_k(z) = sum_j z^j / (j+k)!, the exponential-integrator functions.
/// phi_0 = e^z, phi_1 = (e^z - 1)/z, phi_2 = (e^z - 1 - z)/z^2.
inline std::complex<double> phi(int k, std::complex<double> z) {
    if (std::abs(z) < 0.5) {
        std::complex<double> sum = 0.0;
        double fact = 1.0;
        for (int j = 1; j <= k; ++j) fact *= j;
        std::complex<double> term = 1.0 / fact;
        for (int j = 0; j < 30; ++j) {
            sum += term;
            term *= z / static_cast<double>(j + k + 1);
        }
        return sum;
    }
    std::complex<double> value = std::exp(z);
    double fact = 1.0;
    for (int j = 0; j < k; ++j) {
        // phi_{j+1} = (phi_j - 1/j!) / z
        value = (value - 1.0 / fact) / z;
        fact *= (j + 1);
    }
    return value;
}

/// Adaptive Gauss-Kronrod (7-15) for Eigen vector-valued integrands.
template <typename Vec>
class AdaptiveGK {
public:
    using Fn = std::function<Vec(double)>;

    AdaptiveGK(double abs_tol, double rel_tol, int max_depth = 40)
        : abs_tol_(abs_tol), rel_tol_(rel_tol), max_depth_(max_depth) {}

    Vec integrate(const Fn& f, double a, double b) {
        evaluations_ = 0;
        auto [value, err] = segment(f, a, b);
        return refine(f, a, b, value, err, 0, std::max(abs_tol_, rel_tol_ * value.norm()));
    }

    [[nodiscard]] int evaluations() const { return evaluations_; }

private:
    std::pair<Vec, double> segment(const Fn& f, double a, double b) {
        static constexpr double xgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                          0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                          0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                          0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
        static constexpr double wgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                          0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                          0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                          0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
        static constexpr double wg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                         0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
        const double c = 0.5 * (a + b), h = 0.5 * (b - a);
        Vec fc = f(c);
        ++evaluations_;
        Vec kron = wgk[7] * fc;
        Vec gauss = wg[3] * fc;
        for (int j = 0; j < 7; ++j) {
            Vec f1 = f(c - h * xgk[j]);
            Vec f2 = f(c + h * xgk[j]);
            evaluations_ += 2;
            kron += wgk[j] * (f1 + f2);
            if (j % 2 == 1) gauss += wg[j / 2] * (f1 + f2);
        }
        kron *= h;
        gauss *= h;
        return {kron, (kron - gauss).norm()};
    }

    Vec refine(const Fn& f, double a, double b, const Vec& value, double err, int depth, double tol) {
        if (err <= tol || depth >= max_depth_) return value;
        const double m = 0.5 * (a + b);
        auto [lv, le] = segment(f, a, m);
        auto [rv, re] = segment(f, m, b);
        return refine(f, a, m, lv, le, depth + 1, 0.5 * tol) + refine(f, m, b, rv, re, depth + 1, 0.5 * tol);
    }

    double abs_tol_;
    double rel_tol_;
    int max_depth_;
    int evaluations_ = 0;
};

/// Scalar adaptive Gauss-Kronrod convenience wrapper.
inline double integrate_scalar(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
    AdaptiveGK<Eigen::Matrix<double, 1, 1>> gk(tol, tol);
    auto value = gk.integrate(
        [&](double x) {
            Eigen::Matrix<double, 1, 1> v;
            v(0) = f(x);
            return v;
        },
        a, b);
    return value(0);
}

}  // namespace singevo::quad
