// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "rmtbias/channel_model.hpp"
#include "rmtbias/errors.hpp"
#include "rmtbias/fixed_point.hpp"
#include "rmtbias/quantities.hpp"
#include "rmtbias/special.hpp"

namespace rmtbias {

// Closed-form CLT package for the mutual information at z = -sigma2. All
// values are in nats; unit conversion is a presentation concern.
struct MIStatistics {
    double sigma2 = 0.0;
    double V = 0.0;         // deterministic mean (Gaussian reference)
    double B_C = 0.0;       // bias of the mean
    double B_C_theta = 0.0; // non-circularity part of B_C
    double B_C_kappa = 0.0; // heavy-fading part of B_C
    double Theta_G = 0.0;   // Gaussian variance -log(Delta)
    double Theta_B = 0.0;   // non-Gaussian variance correction
    double Theta = 0.0;     // total variance Theta_G + Theta_B
    double mean = 0.0;      // V + B_C
};

// log det of a Hermitian positive definite matrix through Cholesky. The
// input is symmetrized first so tiny asymmetries from iterative solves do
// not trip the factorization.
inline double log_det_hpd(const Eigen::MatrixXcd& m) {
    const Eigen::MatrixXcd h = 0.5 * (m + m.adjoint());
    Eigen::LLT<Eigen::MatrixXcd> llt(h);
    if (llt.info() != Eigen::Success)
        throw numeric_error("log det requested for a matrix that is not positive definite");
    return 2.0 * llt.matrixLLT().diagonal().real().array().log().sum();
}

// log det(I + H H^H / sigma2) in nats, through the smaller Gram side.
inline double mutual_information(const Eigen::MatrixXcd& h, double sigma2) {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        throw config_error("noise level sigma2 must be positive and finite");
    const Eigen::Index n = h.rows();
    const Eigen::Index m = h.cols();
    Eigen::MatrixXcd gram;
    if (m <= n)
        gram = Eigen::MatrixXcd::Identity(m, m) + h.adjoint() * h / sigma2;
    else
        gram = Eigen::MatrixXcd::Identity(n, n) + h * h.adjoint() / sigma2;
    return log_det_hpd(gram);
}

// Mean, bias and variance of the MI CLT. Theta_B is emitted as -2 B_C from
// the same subexpressions, so the coupling between the mean bias and the
// variance correction holds exactly as computed, not merely to rounding.
inline MIStatistics mi_clt(const ChannelModel& mod, double sigma2,
                           const SolverOptions& opts = {}) {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        throw config_error("noise level sigma2 must be positive and finite");

    const cplx z(-sigma2, 0.0);
    const FixedPointSolution sol = solve(mod, z, opts);
    const QuantityContext ctx(mod, sol);
    const DeterministicQuantities q = table1(mod, sol, ctx); // rejects Delta, Delta_T <= 0

    MIStatistics out;
    out.sigma2 = sigma2;

    const double n = static_cast<double>(mod.N);
    const double m = static_cast<double>(mod.M);
    const double delta = sol.delta.real();
    const double delta_t = sol.delta_tilde.real();

    const double log_det_t = log_det_hpd(sol.T);
    const double log_det_rt =
        (1.0 + delta * mod.Dt.array()).log().sum(); // log det(I + delta Dt)
    out.V = -(n * std::log(sigma2) + log_det_t) + log_det_rt - m * sigma2 * delta * delta_t;

    const double log_delta_T = std::log(q.Delta_T.real());
    const double kappa_term = mod.moments.kappa * sigma2 * sigma2 *
                              (q.tr_D2S2 * q.tr_Dt2St2).real() / (m * m);
    out.B_C_theta = 0.5 * log_delta_T;
    out.B_C_kappa = -0.5 * kappa_term;
    out.B_C = out.B_C_theta + out.B_C_kappa;

    out.Theta_G = -std::log(q.Delta.real());
    out.Theta_B = -2.0 * out.B_C;
    out.Theta = out.Theta_G + out.Theta_B;
    out.mean = out.V + out.B_C;

    if (!(out.Theta > 0.0))
        throw numeric_error("variance Theta is not positive; the model is outside the "
                            "fluctuation regime");
    return out;
}

// P(C <= R) under the corrected normal law: Phi((R - mean) / sqrt(Theta)).
inline double outage_probability(const MIStatistics& stats, double rate) {
    if (!(stats.Theta > 0.0))
        throw numeric_error("outage probability needs a positive variance");
    if (!std::isfinite(rate)) throw config_error("rate threshold must be finite");
    return gaussian_cdf((rate - stats.mean) / std::sqrt(stats.Theta));
}

} // namespace rmtbias
