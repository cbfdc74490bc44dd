#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "singevo/linops.hpp"

namespace singevo {

/// Repeated evaluation of e^{sigma A} for a fixed A. Diagonalizes once when
/// the eigenbasis is well conditioned and falls back to scaling-and-squaring
/// otherwise.
class FrozenExponential {
public:
    FrozenExponential() = default;

    explicit FrozenExponential(const Matrix& a, double cond_cap = 1e7) : a_(a) {
        Eigen::ComplexEigenSolver<Matrix> es(a, true);
        if (es.info() == Eigen::Success) {
            Eigen::PartialPivLU<Matrix> lu(es.eigenvectors());
            if (lu.rcond() > 1.0 / cond_cap) {
                v_ = es.eigenvectors();
                v_inv_ = lu.inverse();
                lambda_ = es.eigenvalues();
                diagonal_ = true;
            }
        }
    }

    [[nodiscard]] Matrix operator()(double sigma) const {
        if (diagonal_) {
            Vector d = (sigma * lambda_).array().exp().matrix();
            return v_ * d.asDiagonal() * v_inv_;
        }
        Matrix scaled = sigma * a_;
        return scaled.exp();
    }

    [[nodiscard]] bool diagonalized() const { return diagonal_; }
    [[nodiscard]] const Matrix& eigenvectors() const { return v_; }
    [[nodiscard]] const Matrix& eigenvectors_inverse() const { return v_inv_; }
    [[nodiscard]] const Vector& eigenvalues() const { return lambda_; }
    [[nodiscard]] const Matrix& generator() const { return a_; }

    /// Smallest decay rate min(-Re lambda); e^{sigma A} is negligible past
    /// roughly 40 / decay_rate().
    [[nodiscard]] double decay_rate() const {
        if (diagonal_) return -lambda_.real().maxCoeff();
        return -spectral_bound(a_);
    }

private:
    Matrix a_;
    Matrix v_, v_inv_;
    Vector lambda_;
    bool diagonal_ = false;
};

}  // namespace singevo
