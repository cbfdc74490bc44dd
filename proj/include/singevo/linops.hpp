#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "singevo/errors.hpp"

namespace singevo {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;

/// Largest singular value.
inline double op_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    if (m.rows() == 1 || m.cols() == 1) return m.norm();
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

inline bool is_real(const Matrix& m, double tol = 0.0) {
    return m.imag().cwiseAbs().maxCoeff() <= tol;
}

/// Square complex matrix standing in for a discretized generator. Immutable
/// after construction.
class DenseOperator {
public:
    DenseOperator() = default;

    explicit DenseOperator(Matrix entries, std::string label = {})
        : entries_(std::move(entries)), label_(std::move(label)) {
        if (entries_.rows() < 1 || entries_.rows() != entries_.cols())
            throw DomainError("DenseOperator: entries must be square with dim >= 1");
        real_ = is_real(entries_);
    }

    explicit DenseOperator(const RealMatrix& entries, std::string label = {})
        : DenseOperator(Matrix(entries.cast<cplx>()), std::move(label)) {}

    static DenseOperator diagonal(const std::vector<double>& d, std::string label = {}) {
        Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
        return DenseOperator(RealMatrix(v.asDiagonal()), std::move(label));
    }

    [[nodiscard]] Eigen::Index dim() const { return entries_.rows(); }
    [[nodiscard]] const Matrix& matrix() const { return entries_; }
    [[nodiscard]] const std::string& label() const { return label_; }
    [[nodiscard]] bool real() const { return real_; }

private:
    Matrix entries_;
    std::string label_;
    bool real_ = true;
};

struct LinopsConfig {
    double cond_cap = 1e12;   // NearSingular threshold on the condition estimate
    double m_cap = 1e6;       // certification fails above this M estimate
};

/// (lambda I - A)^{-1}. Throws NearSingular when the shifted matrix is too
/// ill-conditioned to produce a meaningful value.
inline Matrix resolvent_matrix(const Matrix& a, cplx lambda, double cond_cap = LinopsConfig{}.cond_cap) {
    const Eigen::Index n = a.rows();
    Matrix shifted = -a;
    shifted.diagonal().array() += lambda;
    Eigen::PartialPivLU<Matrix> lu(shifted);
    const double rc = lu.rcond();
    if (!(rc > 1.0 / cond_cap))
        throw NearSingular("resolvent: lambda too close to the spectrum (rcond " + std::to_string(rc) + ")");
    return lu.solve(Matrix::Identity(n, n));
}

inline DenseOperator resolvent(const DenseOperator& a, cplx lambda, const LinopsConfig& cfg = {}) {
    return DenseOperator(resolvent_matrix(a.matrix(), lambda, cfg.cond_cap), "resolvent");
}

inline Vector eigenvalues(const Matrix& a) {
    Eigen::ComplexEigenSolver<Matrix> es(a, false);
    if (es.info() != Eigen::Success) throw EigenFailure("eigenvalue solver did not converge");
    return es.eigenvalues();
}

/// max Re(lambda) over the spectrum.
inline double spectral_bound(const Matrix& a) {
    return eigenvalues(a).real().maxCoeff();
}

inline double spectral_bound(const DenseOperator& a) { return spectral_bound(a.matrix()); }

struct SectorCertificate {
    double theta = 0.0;
    double m_est = 0.0;
    int sample_count = 0;
    bool pass = false;
    cplx worst_lambda{0.0, 0.0};
};

inline std::vector<double> log_radii(double lo = 1e-3, double hi = 1e3, int per_decade = 20) {
    std::vector<double> r;
    const int count = static_cast<int>(std::lround(std::log10(hi / lo) * per_decade));
    for (int k = 0; k <= count; ++k) r.push_back(lo * std::pow(10.0, static_cast<double>(k) / per_decade));
    return r;
}

/// Empirical sup of |lambda| ||(lambda - A)^{-1}|| over lambda = r e^{i phi},
/// |phi| <= theta. An estimate, not a proof.
inline SectorCertificate certify_sectorial(const DenseOperator& a, double theta,
                                           const std::vector<double>& radii = log_radii(), int rays = 33,
                                           const LinopsConfig& cfg = {}) {
    if (!(theta > std::numbers::pi / 2 && theta < std::numbers::pi))
        throw DomainError("certify_sectorial: theta must lie in (pi/2, pi)");
    if (radii.empty()) throw DomainError("certify_sectorial: radii must be nonempty");
    if (rays < 2) throw DomainError("certify_sectorial: need at least two rays");

    SectorCertificate cert;
    cert.theta = theta;

    // Spectrum inside the closed sector means the sector is not in the resolvent set.
    bool spectrum_inside = false;
    cplx offending{0.0, 0.0};
    for (const cplx& mu : eigenvalues(a.matrix())) {
        if (std::abs(mu) > 0.0 && std::abs(std::arg(mu)) <= theta) {
            spectrum_inside = true;
            offending = mu;
        }
    }

    double sample_max = 0.0;
    cplx sample_worst = std::polar(radii.front(), 0.0);
    for (double r : radii) {
        for (int k = 0; k < rays; ++k) {
            const double phi = -theta + 2.0 * theta * k / (rays - 1);
            const cplx lambda = std::polar(r, phi);
            ++cert.sample_count;
            double value = std::numeric_limits<double>::infinity();
            try {
                value = r * op_norm(resolvent_matrix(a.matrix(), lambda, cfg.cond_cap));
            } catch (const NearSingular&) {
            }
            if (!(value <= sample_max)) {
                if (std::isfinite(sample_max)) sample_worst = lambda;
                sample_max = value;
            }
        }
    }
    cert.m_est = spectrum_inside ? std::numeric_limits<double>::infinity() : sample_max;
    cert.worst_lambda = spectrum_inside ? offending : sample_worst;
    cert.pass = std::isfinite(cert.m_est) && cert.m_est <= cfg.m_cap;
    return cert;
}

// JSON --------------------------------------------------------------------

inline nlohmann::json to_json(const Matrix& m) {
    nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json rr = nlohmann::json::array(), ii = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            rr.push_back(m(i, j).real());
            ii.push_back(m(i, j).imag());
        }
        re.push_back(rr);
        im.push_back(ii);
    }
    return {{"dim", m.rows()}, {"re", re}, {"im", im}};
}

inline nlohmann::json to_json(const DenseOperator& a) { return to_json(a.matrix()); }

inline Matrix matrix_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("dim") || !j.contains("re"))
        throw ConfigError("matrix JSON needs \"dim\" and \"re\"");
    for (const auto& [key, _] : j.items())
        if (key != "dim" && key != "re" && key != "im") throw ConfigError("matrix JSON: unknown key " + key);
    const auto n = j.at("dim").get<Eigen::Index>();
    if (n < 1) throw ConfigError("matrix JSON: dim must be positive");
    Matrix m = Matrix::Zero(n, n);
    auto fill = [&](const nlohmann::json& rows, bool imag) {
        if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != n)
            throw ConfigError("matrix JSON: row count does not match dim");
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& row = rows[static_cast<std::size_t>(i)];
            if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
                throw ConfigError("matrix JSON: column count does not match dim");
            for (Eigen::Index k = 0; k < n; ++k) {
                const double v = row[static_cast<std::size_t>(k)].get<double>();
                if (imag) m(i, k).imag(v);
                else m(i, k).real(v);
            }
        }
    };
    fill(j.at("re"), false);
    if (j.contains("im")) fill(j.at("im"), true);
    return m;
}

inline DenseOperator operator_from_json(const nlohmann::json& j, std::string label = {}) {
    return DenseOperator(matrix_from_json(j), std::move(label));
}

inline nlohmann::json to_json(const SectorCertificate& c) {
    return {{"theta", c.theta},
            {"M_est", std::isfinite(c.m_est) ? nlohmann::json(c.m_est) : nlohmann::json("inf")},
            {"sample_count", c.sample_count},
            {"pass", c.pass},
            {"worst_lambda", {c.worst_lambda.real(), c.worst_lambda.imag()}}};
}

}  // namespace singevo
