// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <limits>

#include "rmtbias/channel_model.hpp"
#include "rmtbias/errors.hpp"
#include "rmtbias/fixed_point.hpp"
#include "rmtbias/numeric.hpp"
#include "rmtbias/quantities.hpp"

namespace rmtbias {

struct BiasValue {
    cplx theta_part{0.0, 0.0}; // pseudo-variance contribution
    cplx kappa_part{0.0, 0.0}; // fourth-cumulant contribution
    cplx total() const { return theta_part + kappa_part; }
};

namespace detail {

inline void check_delta_T(const DeterministicQuantities& q) {
    const double scale = 1.0 + std::abs(q.gamma_T * q.gamma_tilde_T * q.z * q.z);
    if (std::abs(q.Delta_T) < 1e-13 * scale)
        throw numeric_error("Delta_T is degenerate at z = " + format_complex(q.z));
}

// Caches for the kappa functionals:
//   Y_k(U)  = (z k eta / M) Tr[Dt^2 St Rt^2 A^H T U T A] + (k z^2 eta_t / M) Tr[S D^2 T U T]
//   Yt_k(U) = (z k eta_t / M) Tr[D^2 S R^2 A Tt U Tt A^H] + (k z^2 eta / M) Tr[St Dt^2 Tt U Tt]
// with the traces rearranged so U leads.
struct KappaCache {
    Eigen::MatrixXcd k1, k2;   // resolvent side
    Eigen::MatrixXcd k1t, k2t; // co-resolvent side

    KappaCache(const ChannelModel& mod, const FixedPointSolution& sol,
               const DeterministicQuantities& q) {
        const Eigen::VectorXcd w2t = mod.Dt.cast<cplx>().array().square() * q.St.array() *
                                     q.Rt.array().square(); // Dt^2 St Rt^2
        const Eigen::VectorXcd w2 = mod.D.cast<cplx>().array().square() * q.S.array() *
                                    q.R.array().square(); // D^2 S R^2
        const Eigen::VectorXcd sd2 = q.S.array() * mod.D.cast<cplx>().array().square();
        const Eigen::VectorXcd std2 = q.St.array() * mod.Dt.cast<cplx>().array().square();

        k1 = sol.T * (mod.A * w2t.asDiagonal()) * (mod.A.adjoint() * sol.T);
        k2 = sol.T * sd2.asDiagonal() * sol.T;
        k1t = sol.T_tilde * (mod.A.adjoint() * w2.asDiagonal()) * (mod.A * sol.T_tilde);
        k2t = sol.T_tilde * std2.asDiagonal() * sol.T_tilde;
    }
};

inline cplx y_kappa_impl(const ChannelModel& mod, cplx z, const DeterministicQuantities& q,
                         const KappaCache& kc, const Eigen::MatrixXcd& u) {
    const double m = static_cast<double>(mod.M);
    return z * mod.moments.kappa * q.eta * trace_prod(u, kc.k1) / m +
           mod.moments.kappa * z * z * q.eta_tilde * trace_prod(u, kc.k2) / m;
}

inline cplx y_kappa_tilde_impl(const ChannelModel& mod, cplx z, const DeterministicQuantities& q,
                               const KappaCache& kc, const Eigen::MatrixXcd& u) {
    const double m = static_cast<double>(mod.M);
    return z * mod.moments.kappa * q.eta_tilde * trace_prod(u, kc.k1t) / m +
           mod.moments.kappa * z * z * q.eta * trace_prod(u, kc.k2t) / m;
}

} // namespace detail

// Pseudo-variance functional with a free N x N argument.
inline cplx y_theta(const ChannelModel& mod, const FixedPointSolution& sol,
                    const DeterministicQuantities& q, const QuantityContext& ctx,
                    const Eigen::MatrixXcd& u) {
    detail::check_delta_T(q);
    const cplx vt = mod.moments.vartheta;
    if (vt == cplx(0.0, 0.0)) return {0.0, 0.0};
    const cplx vt_c = std::conj(vt);
    const double vt2 = std::norm(vt);
    const cplx z = sol.z;

    const Eigen::MatrixXcd dtu = mod.D.cast<cplx>().asDiagonal() * sol.T * u;
    const Eigen::MatrixXcd utd = u * sol.T * mod.D.cast<cplx>().asDiagonal();

    const cplx term1 = vt_c * ctx.n_side(dtu).F_T_under_u * (1.0 - vt * q.F_T);
    const UFunctionals utd_f = ctx.n_side(utd);
    const cplx term2 = vt * utd_f.F_T_u * (1.0 - vt_c * q.F_T_under);
    // The script functional pairs with gamma_T of its own side (the side the
    // free argument lives on); only that pairing reproduces d(z^2 gamma_T
    // gamma_tilde_T)/dz and keeps this form equal to the derivative form.
    const cplx term3 = vt2 * z * q.gamma_T * ctx.n_side(u).script_F_tilde_T_u;
    const cplx term4 = vt2 * z * z * q.gamma_tilde_T * utd_f.gamma_T_u;
    return (term1 + term2 + term3 + term4) / q.Delta_T;
}

// Co-resolvent mirror of y_theta with a free M x M argument; note the
// conjugation pattern is swapped relative to the resolvent side.
inline cplx y_theta_tilde(const ChannelModel& mod, const FixedPointSolution& sol,
                          const DeterministicQuantities& q, const QuantityContext& ctx,
                          const Eigen::MatrixXcd& u) {
    detail::check_delta_T(q);
    const cplx vt = mod.moments.vartheta;
    if (vt == cplx(0.0, 0.0)) return {0.0, 0.0};
    const cplx vt_c = std::conj(vt);
    const double vt2 = std::norm(vt);
    const cplx z = sol.z;

    const Eigen::MatrixXcd dtu = mod.Dt.cast<cplx>().asDiagonal() * sol.T_tilde * u;
    const Eigen::MatrixXcd utd = u * sol.T_tilde * mod.Dt.cast<cplx>().asDiagonal();

    const cplx term1 = vt * ctx.m_side(dtu).F_T_under_u * (1.0 - vt_c * q.F_tilde_T);
    const UFunctionalsTilde utd_f = ctx.m_side(utd);
    const cplx term2 = vt_c * utd_f.F_T_u * (1.0 - vt * q.F_tilde_T_under);
    // Same-side pairing as in y_theta: the script functional carries the
    // co-resolvent gamma_tilde_T here.
    const cplx term3 = vt2 * z * q.gamma_tilde_T * ctx.m_side(u).script_F_T_u;
    const cplx term4 = vt2 * z * z * q.gamma_T * utd_f.gamma_T_u;
    return (term1 + term2 + term3 + term4) / q.Delta_T;
}

inline cplx y_kappa(const ChannelModel& mod, const FixedPointSolution& sol,
                    const DeterministicQuantities& q, const Eigen::MatrixXcd& u) {
    if (mod.moments.kappa == 0.0) return {0.0, 0.0};
    detail::KappaCache kc(mod, sol, q);
    return detail::y_kappa_impl(mod, sol.z, q, kc, u);
}

inline cplx y_kappa_tilde(const ChannelModel& mod, const FixedPointSolution& sol,
                          const DeterministicQuantities& q, const Eigen::MatrixXcd& u) {
    if (mod.moments.kappa == 0.0) return {0.0, 0.0};
    detail::KappaCache kc(mod, sol, q);
    return detail::y_kappa_tilde_impl(mod, sol.z, q, kc, u);
}

// Explicit bias decomposition B(z) = B_theta(z) + B_kappa(z):
//   B_x = Y_x(I) + (delta_tilde + z dtprime) Y_x(D) + z dprime Yt_x(Dt).
inline BiasValue bias_theorem1(const ChannelModel& mod, const FixedPointSolution& sol) {
    QuantityContext ctx(mod, sol);
    const DeterministicQuantities q = table1(mod, sol, ctx);
    const cplx z = sol.z;
    const cplx wd = sol.delta_tilde + z * q.dtprime;
    const cplx wdt = z * q.dprime;

    const Eigen::MatrixXcd id_n = Eigen::MatrixXcd::Identity(mod.N, mod.N);
    const Eigen::MatrixXcd d_mat = mod.D.cast<cplx>().asDiagonal();
    const Eigen::MatrixXcd dt_mat = mod.Dt.cast<cplx>().asDiagonal();

    BiasValue out;
    if (mod.moments.vartheta != cplx(0.0, 0.0)) {
        out.theta_part = y_theta(mod, sol, q, ctx, id_n) + wd * y_theta(mod, sol, q, ctx, d_mat) +
                         wdt * y_theta_tilde(mod, sol, q, ctx, dt_mat);
    }
    if (mod.moments.kappa != 0.0) {
        detail::KappaCache kc(mod, sol, q);
        out.kappa_part = detail::y_kappa_impl(mod, z, q, kc, id_n) +
                         wd * detail::y_kappa_impl(mod, z, q, kc, d_mat) +
                         wdt * detail::y_kappa_tilde_impl(mod, z, q, kc, dt_mat);
    }
    return out;
}

// Derivative form: B(z) = 1/2 d/dz [ -log Delta_T + (kappa z^2 / M^2) TrD^2S^2 TrDt^2St^2 ],
// evaluated by a central difference with real step h (default 1e-4 |z|).
// The log difference is taken as log of the ratio, which keeps the principal
// branch continuous for small steps.
inline BiasValue bias_theorem2(const ChannelModel& mod, cplx z, double h = 0.0,
                               const SolverOptions& opts = {}) {
    SpectralPoint point(z);
    if (h == 0.0) h = 1e-4 * std::abs(z);
    if (!(h > 0.0)) throw config_error("finite-difference step must be positive");
    if (z.imag() == 0.0 && z.real() + h >= 0.0)
        throw config_error("step reaches the nonnegative real axis, reduce h");

    const FixedPointSolution sol_p = solve(mod, z + h, opts);
    const FixedPointSolution sol_m = solve(mod, z - h, opts);
    const DeterministicQuantities qp = table1(mod, sol_p);
    const DeterministicQuantities qm = table1(mod, sol_m);

    const double eps_noise = 1e3 * std::numeric_limits<double>::epsilon();
    BiasValue out;

    detail::check_delta_T(qp);
    detail::check_delta_T(qm);
    const cplx ratio = qp.Delta_T / qm.Delta_T;
    if (ratio != cplx(1.0, 0.0)) {
        if (std::abs(ratio - 1.0) < eps_noise)
            throw numeric_error("Delta_T difference is below the rounding floor, "
                                "increase the finite-difference step");
        out.theta_part = -std::log(ratio) / (4.0 * h);
    }

    const double kap = mod.moments.kappa;
    if (kap != 0.0) {
        const double m2 = static_cast<double>(mod.M) * mod.M;
        const cplx zp = z + h;
        const cplx zm = z - h;
        const cplx gp = kap * zp * zp / m2 * qp.tr_D2S2 * qp.tr_Dt2St2;
        const cplx gm = kap * zm * zm / m2 * qm.tr_D2S2 * qm.tr_Dt2St2;
        if (gp != gm) {
            if (std::abs(gp - gm) < eps_noise * std::max(std::abs(gp), std::abs(gm)))
                throw numeric_error("cumulant term difference is below the rounding floor, "
                                    "increase the finite-difference step");
            out.kappa_part = (gp - gm) / (4.0 * h);
        }
    }
    return out;
}

} // namespace rmtbias
