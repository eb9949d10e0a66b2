// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "rmtbias/errors.hpp"
#include "rmtbias/numeric.hpp"
#include "rmtbias/special.hpp"

namespace rmtbias {

// First moments of one channel entry x: pseudo-variance, fourth cumulant and
// third mixed moment. The scaling convention E|x|^2 = 1 is assumed throughout
// and checked where the moments are produced.
struct EntryMoments {
    cplx vartheta{0.0, 0.0}; // E x^2
    double kappa = 0.0;      // E|x|^4 - |vartheta|^2 - 2
    cplx zeta{0.0, 0.0};     // E|x|^2 x

    double fourth_moment() const { return kappa + std::norm(vartheta) + 2.0; }

    void validate() const {
        if (!std::isfinite(vartheta.real()) || !std::isfinite(vartheta.imag()) ||
            !std::isfinite(kappa) || !std::isfinite(zeta.real()) || !std::isfinite(zeta.imag()))
            throw config_error("entry moments must be finite");
        if (std::abs(vartheta) > 1.0 + 1e-12)
            throw config_error("|vartheta| cannot exceed E|x|^2 = 1");
        if (fourth_moment() < 1.0 - 1e-12)
            throw config_error("fourth moment below (E|x|^2)^2, moments are inconsistent");
    }
};

enum class ModulusLaw { weibull, lognormal, nakagami };

inline std::string law_name(ModulusLaw law) {
    switch (law) {
        case ModulusLaw::weibull: return "weibull";
        case ModulusLaw::lognormal: return "lognormal";
        case ModulusLaw::nakagami: return "nakagami";
    }
    return "?";
}

// One channel entry is x = r (s_r cos(phi) + i s_i sin(phi)) with phi uniform
// on [0, 2pi) independent of the modulus r. The law parameter is the shape k
// for Weibull, the log-domain sigma for Lognormal, the fading figure m for
// Nakagami; the remaining scale is always pinned by E r^2 = 1, and
// sigma_r2 + sigma_i2 = 2 keeps E|x|^2 = 1.
struct EntryDistribution {
    ModulusLaw law;
    double param;
    double sigma_r2;
    double sigma_i2;

    EntryDistribution(ModulusLaw law_, double param_, double sigma_r2_ = 1.0, double sigma_i2_ = 1.0)
        : law(law_), param(param_), sigma_r2(sigma_r2_), sigma_i2(sigma_i2_) {
        if (!(param > 0.0) || !std::isfinite(param))
            throw config_error("entry law parameter must be positive and finite");
        if (law == ModulusLaw::nakagami && param < 0.5)
            throw config_error("nakagami fading figure must be at least 0.5");
        if (!(sigma_r2 >= 0.0) || !(sigma_i2 >= 0.0))
            throw config_error("component variances must be nonnegative");
        if (std::abs(sigma_r2 + sigma_i2 - 2.0) > 1e-12)
            throw config_error("component variances must satisfy sigma_r2 + sigma_i2 = 2");
    }
};

// E r, E r^4 and the Weibull scale under the E r^2 = 1 normalization.
inline double modulus_scale(const EntryDistribution& d) {
    switch (d.law) {
        case ModulusLaw::weibull: return 1.0 / std::sqrt(std::tgamma(1.0 + 2.0 / d.param));
        case ModulusLaw::lognormal: return -d.param * d.param; // mu in the log domain
        case ModulusLaw::nakagami: return 1.0;                 // spread Omega
    }
    return 0.0;
}

inline double modulus_mean(const EntryDistribution& d) {
    switch (d.law) {
        case ModulusLaw::weibull:
            return modulus_scale(d) * std::tgamma(1.0 + 1.0 / d.param);
        case ModulusLaw::lognormal:
            return std::exp(-0.5 * d.param * d.param);
        case ModulusLaw::nakagami:
            return std::tgamma(d.param + 0.5) / (std::tgamma(d.param) * std::sqrt(d.param));
    }
    return 0.0;
}

inline double modulus_fourth_moment(const EntryDistribution& d) {
    switch (d.law) {
        case ModulusLaw::weibull: {
            const double g2 = std::tgamma(1.0 + 2.0 / d.param);
            return std::tgamma(1.0 + 4.0 / d.param) / (g2 * g2);
        }
        case ModulusLaw::lognormal:
            return std::exp(4.0 * d.param * d.param);
        case ModulusLaw::nakagami:
            return 1.0 + 1.0 / d.param;
    }
    return 0.0;
}

// Exact entry moments of the phase/modulus construction. The phase average
// of |x|^4 contributes the (3/8, 3/8, 2/8) weights; zeta vanishes because
// E cos^a(phi) sin^b(phi) = 0 whenever a+b is odd.
inline EntryMoments moments_of(const EntryDistribution& d) {
    EntryMoments m;
    m.vartheta = cplx(0.5 * (d.sigma_r2 - d.sigma_i2), 0.0);
    const double r4 = modulus_fourth_moment(d);
    const double p = 0.375 * d.sigma_r2 * d.sigma_r2 + 0.375 * d.sigma_i2 * d.sigma_i2 +
                     0.25 * d.sigma_r2 * d.sigma_i2;
    m.kappa = p * r4 - std::norm(m.vartheta) - 2.0;
    m.zeta = cplx(0.0, 0.0);
    m.validate();
    return m;
}

// E|x| = f(vartheta) E r where f reduces to a complete elliptic integral of
// the second kind. Negative vartheta (sigma_i2 > sigma_r2) is handled by the
// phi -> pi/2 - phi symmetry, which swaps the two component variances.
inline double entry_abs_mean(const EntryDistribution& d) {
    const double vt = 0.5 * (d.sigma_r2 - d.sigma_i2);
    const double s2 = vt >= 0.0 ? d.sigma_r2 : d.sigma_i2;
    double f;
    if (s2 == 0.0) {
        f = 0.0; // both variances zero cannot happen under the sum constraint
    } else {
        const double k = std::sqrt(2.0 * std::abs(vt) / s2);
        f = 2.0 * std::sqrt(s2) / 3.141592653589793 * complete_elliptic_e(std::min(k, 1.0));
    }
    return f * modulus_mean(d);
}

// Coefficient of variation of |x|; E|x|^2 = 1 makes this sqrt(1/(E|x|)^2 - 1).
inline double cv_of(const EntryDistribution& d) {
    const double mean_abs = entry_abs_mean(d);
    if (!(mean_abs > 0.0)) throw numeric_error("degenerate E|x| in cv computation");
    return std::sqrt(1.0 / (mean_abs * mean_abs) - 1.0);
}

// Line-of-sight steering matrix for a uniform linear array: column m is
// [1, e^{i a_m}, ..., e^{i (N-1) a_m}]^T. Default angles are a_m = 2 pi m / N.
inline Eigen::MatrixXcd ula_los(int n, int m, const std::vector<double>* angles = nullptr) {
    if (n < 1 || m < 1) throw config_error("array dimensions must be positive");
    if (angles && static_cast<int>(angles->size()) != m)
        throw config_error("angle list length must match the number of columns");
    Eigen::MatrixXcd a(n, m);
    for (int col = 0; col < m; ++col) {
        const double alpha = angles ? (*angles)[col] : 6.283185307179586 * col / n;
        for (int row = 0; row < n; ++row)
            a(row, col) = std::polar(1.0, alpha * row);
    }
    return a;
}

// Largest singular value through the smaller Gram matrix.
inline double operator_norm(const Eigen::MatrixXcd& a) {
    if (a.size() == 0 || a.isZero(0.0)) return 0.0;
    Eigen::MatrixXcd gram;
    if (a.rows() <= a.cols())
        gram = a * a.adjoint();
    else
        gram = a.adjoint() * a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gram, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

// Non-centered channel model H = A + M^{-1/2} D^{1/2} X Dt^{1/2} with X iid
// entries of the given moments. A carries any 1/sqrt(M) scaling already.
struct ChannelModel {
    int N = 0;
    int M = 0;
    Eigen::MatrixXcd A;  // N x M deterministic part
    Eigen::VectorXd D;   // row variance profile, length N
    Eigen::VectorXd Dt;  // column variance profile, length M
    EntryMoments moments;

    ChannelModel(Eigen::MatrixXcd a, Eigen::VectorXd d, Eigen::VectorXd dt, EntryMoments mom)
        : N(static_cast<int>(d.size())), M(static_cast<int>(dt.size())), A(std::move(a)),
          D(std::move(d)), Dt(std::move(dt)), moments(mom) {
        if (N < 1 || M < 1) throw config_error("variance profiles must be non-empty");
        if (A.rows() != N || A.cols() != M)
            throw config_error("deterministic part must be N x M to match the profiles");
        if (!D.allFinite() || !Dt.allFinite() || D.minCoeff() < 0.0 || Dt.minCoeff() < 0.0)
            throw config_error("variance profiles must be nonnegative and finite");
        if (!(D.sum() > 0.0) || !(Dt.sum() > 0.0))
            throw config_error("variance profiles must not vanish identically");
        moments.validate();
        if (!A.allFinite()) throw config_error("deterministic part must be finite");

        // Guard against wildly scaled deterministic parts: the operator norm
        // may not exceed 10 max(1, sqrt(N/M)) times the largest column norm.
        const double max_col = A.colwise().norm().maxCoeff();
        const double cap = 10.0 * std::max(1.0, std::sqrt(static_cast<double>(N) / M)) * max_col;
        if (operator_norm(A) > cap + 1e-12)
            throw config_error("operator norm of the deterministic part exceeds its column-norm cap");
    }

    double aspect() const { return static_cast<double>(N) / M; }
};

// Rician composition: H = sqrt(K/(K+1)) Los/sqrt(M) + sqrt(1/(K+1)) scattered
// part. The 1/(K+1) power split is folded into the row profile, so downstream
// code sees a plain non-centered model.
inline ChannelModel rician_model(const Eigen::MatrixXcd& los, double k_factor,
                                 const Eigen::VectorXd& d, const Eigen::VectorXd& dt,
                                 const EntryMoments& mom) {
    if (!(k_factor >= 0.0) || !std::isfinite(k_factor))
        throw config_error("rician K factor must be nonnegative and finite");
    const double m_cols = static_cast<double>(los.cols());
    const Eigen::MatrixXcd a =
        std::sqrt(k_factor / (k_factor + 1.0)) / std::sqrt(m_cols) * los;
    const Eigen::VectorXd d_eff = d / (k_factor + 1.0);
    return ChannelModel(a, d_eff, dt, mom);
}

} // namespace rmtbias
