#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "singevo/linops.hpp"

namespace singevo {

/// Three-stage Radau IIA (order 5, L-stable, stiffly accurate) for the linear
/// matrix problem Y' = A(t) Y + F(t) with step doubling for error control.
struct RadauOptions {
    double rtol = 1e-10;
    double atol = 1e-13;
    double h_init = 0.0;        // 0 picks a step from ||A(t0)||
    double norm_cap = 0.0;      // optional cap h ||A(t)|| <= norm_cap; <= 0 disables it
    double h_min_ratio = 1e-13; // stall when h < h_min_ratio * |t|
    long max_steps = 2'000'000;
};

struct RadauStats {
    long accepted = 0;
    long rejected = 0;
};

using MatrixFn = std::function<Matrix(double)>;

namespace detail {

struct RadauTableau {
    double c[3];
    double a[3][3];
    RadauTableau() {
        const double s6 = std::sqrt(6.0);
        c[0] = (4.0 - s6) / 10.0;
        c[1] = (4.0 + s6) / 10.0;
        c[2] = 1.0;
        a[0][0] = (88.0 - 7.0 * s6) / 360.0;
        a[0][1] = (296.0 - 169.0 * s6) / 1800.0;
        a[0][2] = (-2.0 + 3.0 * s6) / 225.0;
        a[1][0] = (296.0 + 169.0 * s6) / 1800.0;
        a[1][1] = (88.0 + 7.0 * s6) / 360.0;
        a[1][2] = (-2.0 - 3.0 * s6) / 225.0;
        a[2][0] = (16.0 - s6) / 36.0;
        a[2][1] = (16.0 + s6) / 36.0;
        a[2][2] = 1.0 / 9.0;
    }
};

inline const RadauTableau& radau_tableau() {
    static const RadauTableau tab;
    return tab;
}

/// Cheap upper bound for the 2-norm: sqrt(||A||_1 ||A||_inf).
inline double norm_bound(const Matrix& a) {
    const double n1 = a.cwiseAbs().colwise().sum().maxCoeff();
    const double ninf = a.cwiseAbs().rowwise().sum().maxCoeff();
    return std::sqrt(n1 * ninf);
}

/// One Radau IIA step of size h from (t, y).
inline Matrix radau_step(const MatrixFn& a_fn, const MatrixFn* f_fn, double t, double h, const Matrix& y) {
    const auto& tab = radau_tableau();
    const Eigen::Index n = y.rows(), m = y.cols();
    Matrix a_st[3];
    Matrix f_st[3];
    for (int i = 0; i < 3; ++i) {
        a_st[i] = a_fn(t + tab.c[i] * h);
        if (f_fn) f_st[i] = (*f_fn)(t + tab.c[i] * h);
    }
    // Real data (every family used here) takes the cheaper real LU.
    bool real = is_real(y);
    for (int i = 0; i < 3 && real; ++i) real = is_real(a_st[i]) && (!f_fn || is_real(f_st[i]));
    if (real) {
        RealMatrix big = RealMatrix::Identity(3 * n, 3 * n);
        RealMatrix rhs(3 * n, m);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) big.block(i * n, j * n, n, n) -= (h * tab.a[i][j]) * a_st[j].real();
            rhs.middleRows(i * n, n) = y.real();
            if (f_fn)
                for (int j = 0; j < 3; ++j) rhs.middleRows(i * n, n) += (h * tab.a[i][j]) * f_st[j].real();
        }
        Eigen::PartialPivLU<RealMatrix> lu(big);
        return lu.solve(rhs).middleRows(2 * n, n).cast<cplx>();
    }
    Matrix big = Matrix::Identity(3 * n, 3 * n);
    Matrix rhs(3 * n, m);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) big.block(i * n, j * n, n, n) -= (h * tab.a[i][j]) * a_st[j];
        rhs.middleRows(i * n, n) = y;
        if (f_fn)
            for (int j = 0; j < 3; ++j) rhs.middleRows(i * n, n) += (h * tab.a[i][j]) * f_st[j];
    }
    Eigen::PartialPivLU<Matrix> lu(big);
    const Matrix stages = lu.solve(rhs);
    return stages.middleRows(2 * n, n);
}

}  // namespace detail

/// Integrates Y' = A(t)Y + F(t) from t0 to t1 > t0 starting at y0. `f_fn` may
/// be null. When `checkpoints` is given (increasing, inside (t0, t1]), the
/// solution there is appended to `out` and steps land on them exactly.
inline Matrix radau_integrate(const MatrixFn& a_fn, const MatrixFn* f_fn, double t0, double t1, Matrix y0,
                              const RadauOptions& opt = {}, RadauStats* stats = nullptr,
                              const std::vector<double>* checkpoints = nullptr, std::vector<Matrix>* out = nullptr) {
    if (!(t1 >= t0)) throw DomainError("radau_integrate: need t1 >= t0");
    if (t1 == t0) return y0;
    RadauStats local;
    RadauStats& st = stats ? *stats : local;

    auto capped = [&](double t, double h) {
        if (opt.norm_cap > 0.0) {
            const double nb = detail::norm_bound(a_fn(t));
            if (nb > 0.0) h = std::min(h, opt.norm_cap / nb);
        }
        return h;
    };

    double t = t0;
    double h = opt.h_init > 0.0 ? opt.h_init : capped(t0, (t1 - t0) * 0.01);
    if (!(h > 0.0)) h = (t1 - t0) * 0.01;
    std::size_t next_cp = 0;
    Matrix y = std::move(y0);
    long steps = 0;

    while (t < t1) {
        if (++steps > opt.max_steps) throw StepperStall("radau_integrate: step budget exhausted");
        double target = t1;
        if (checkpoints && next_cp < checkpoints->size()) target = std::min(target, (*checkpoints)[next_cp]);
        h = capped(t, h);
        bool hits = false;
        if (t + h >= target * (1.0 - 1e-14) || target - (t + h) < 1e-12 * std::abs(target)) {
            h = target - t;
            hits = true;
        }
        if (h < opt.h_min_ratio * std::max(std::abs(t), std::numeric_limits<double>::min()))
            throw StepperStall("radau_integrate: step size underflow at t = " + std::to_string(t));

        const Matrix full = detail::radau_step(a_fn, f_fn, t, h, y);
        const Matrix half1 = detail::radau_step(a_fn, f_fn, t, 0.5 * h, y);
        const Matrix half = detail::radau_step(a_fn, f_fn, t + 0.5 * h, 0.5 * h, half1);

        const double scale = opt.atol + opt.rtol * std::max(y.cwiseAbs().maxCoeff(), half.cwiseAbs().maxCoeff());
        const double err = (half - full).cwiseAbs().maxCoeff() / 31.0 / scale;
        if (!std::isfinite(err)) throw StepperStall("radau_integrate: non-finite error estimate");

        const double fac = err > 0.0 ? std::clamp(0.9 * std::pow(1.0 / err, 1.0 / 6.0), 0.2, 4.0) : 4.0;
        if (err <= 1.0) {
            ++st.accepted;
            y = half;
            t = hits ? target : t + h;
            if (hits && checkpoints && next_cp < checkpoints->size() && target == (*checkpoints)[next_cp]) {
                if (out) out->push_back(y);
                ++next_cp;
            }
        } else {
            ++st.rejected;
        }
        h *= fac;
    }
    return y;
}

/// Propagator of Y' = A(t)Y from s to t.
inline Matrix radau_propagator(const MatrixFn& a_fn, double s, double t, const RadauOptions& opt = {},
                               RadauStats* stats = nullptr) {
    const Eigen::Index n = a_fn(s).rows();
    return radau_integrate(a_fn, nullptr, s, t, Matrix::Identity(n, n), opt, stats);
}

}  // namespace singevo
