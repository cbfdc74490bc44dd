#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "singevo/linops.hpp"

namespace testsupport {

using singevo::cplx;
using singevo::Matrix;
using singevo::Vector;

struct Spectral {
    Matrix a, v, v_inv;
    Vector lambda;
};

/// Real, diagonalizable, stable matrix with eigenvalues of modulus in
/// [lo, hi] and |arg| >= 0.8 pi, given together with its eigendecomposition.
inline Spectral random_stable(int n, std::mt19937& rng, double lo = 0.05, double hi = 5.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXcd lam_basis = Eigen::MatrixXcd::Zero(n, n);
    Vector lam(n);
    int k = 0;
    while (k < n) {
        const double r = lo * std::pow(hi / lo, unit(rng));
        if (k + 1 < n && unit(rng) < 0.5) {
            const double phi = std::numbers::pi * (0.8 + 0.2 * unit(rng));
            const double re = r * std::cos(phi), im = r * std::sin(phi);
            d(k, k) = re;
            d(k, k + 1) = im;
            d(k + 1, k) = -im;
            d(k + 1, k + 1) = re;
            // Block [[re, im], [-im, re]] has eigenvectors (1, +-i) for re +- i im.
            lam_basis(k, k) = 1.0;
            lam_basis(k + 1, k) = cplx(0.0, 1.0);
            lam_basis(k, k + 1) = 1.0;
            lam_basis(k + 1, k + 1) = cplx(0.0, -1.0);
            lam(k) = cplx(re, im);
            lam(k + 1) = cplx(re, -im);
            k += 2;
        } else {
            d(k, k) = -r;
            lam_basis(k, k) = 1.0;
            lam(k) = -r;
            k += 1;
        }
    }
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd w = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) w(i, j) += 0.3 * g(rng) / std::sqrt(static_cast<double>(n));
    const Eigen::MatrixXd a = w * d * w.inverse();
    Spectral s;
    s.a = a.cast<cplx>();
    s.v = w.cast<cplx>() * lam_basis;
    s.v_inv = s.v.inverse();
    s.lambda = lam;
    return s;
}

/// V f(Lambda) V^{-1}.
template <typename F>
Matrix spectral_apply(const Spectral& s, F f) {
    Vector d(s.lambda.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = f(s.lambda(i));
    return s.v * d.asDiagonal() * s.v_inv;
}

inline double rel_err(const Matrix& x, const Matrix& ref) {
    return singevo::op_norm(x - ref) / std::max(singevo::op_norm(ref), 1e-300);
}

inline Matrix diag(std::initializer_list<double> d) {
    Vector v(static_cast<Eigen::Index>(d.size()));
    Eigen::Index i = 0;
    for (double x : d) v(i++) = x;
    return v.asDiagonal();
}

}  // namespace testsupport
