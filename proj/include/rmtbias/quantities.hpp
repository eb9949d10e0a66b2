// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>

#include "rmtbias/channel_model.hpp"
#include "rmtbias/errors.hpp"
#include "rmtbias/fixed_point.hpp"
#include "rmtbias/numeric.hpp"

namespace rmtbias {

// Scalar ledger evaluated at one spectral point. Naming follows the usual
// symbols: *_tilde marks the co-resolvent side, *_T the transposed variants,
// *_under the variants with the transposed/conjugated steering order swapped.
struct DeterministicQuantities {
    cplx z;
    Eigen::VectorXcd R, Rt; // diagonals of (I + dt D)^{-1} and (I + d Dt)^{-1}
    Eigen::VectorXcd S, St; // diagonals of T and T_tilde

    cplx gamma, gamma_T, gamma_tilde, gamma_tilde_T;
    cplx eta, eta_tilde;
    cplx F, F_T, F_T_under, F_tilde_T, F_tilde_T_under;
    cplx Delta, Delta_T;
    cplx dprime, dtprime;   // d delta / dz and d delta_tilde / dz
    cplx tr_D2S2, tr_Dt2St2;
};

// U-functionals with a free square matrix argument; the resolvent side takes
// N x N arguments, the co-resolvent side M x M ones.
struct UFunctionals {
    cplx gamma_u;            // (1/M) Tr U T D T
    cplx gamma_T_u;          // (1/M) Tr D T U T^t
    cplx F_u;                // (1/M) Tr U T A Rt^2 Dt A^H T
    cplx F_T_u;              // (1/M) Tr U T^t conj(A) Rt^2 Dt A^H T
    cplx F_T_under_u;        // (1/M) Tr U T A Rt^2 Dt A^t T^t
    cplx script_F_tilde_T_u; // (1/M) Tr Dt Tt^t Dt Tt A^H R^2 U A Tt
};

struct UFunctionalsTilde {
    cplx gamma_u;            // (1/M) Tr U Tt Dt Tt
    cplx gamma_T_u;          // (1/M) Tr Dt Tt U Tt^t
    cplx F_u;                // (1/M) Tr U Tt A^H R^2 D A Tt
    cplx F_T_u;              // (1/M) Tr U Tt^t A^t R^2 D A Tt
    cplx F_T_under_u;        // (1/M) Tr U Tt A^H R^2 D conj(A) Tt^t
    cplx script_F_T_u;       // (1/M) Tr D T^t D T A Rt^2 U A^H T
};

// Shared matrix products behind the ledger and the U-functionals. Building
// the context costs a handful of dense multiplications; evaluating any
// functional afterwards is a single elementwise trace.
class QuantityContext {
public:
    QuantityContext(const ChannelModel& mod, const FixedPointSolution& sol)
        : mod_(&mod), sol_(&sol) {
        const int n = mod.N;
        const int m = mod.M;
        if (sol.T.rows() != n || sol.T_tilde.rows() != m)
            throw config_error("solution dimensions do not match the model");

        r_diag = (Eigen::VectorXcd::Ones(n) + sol.delta_tilde * mod.D.cast<cplx>()).cwiseInverse();
        rt_diag = (Eigen::VectorXcd::Ones(m) + sol.delta * mod.Dt.cast<cplx>()).cwiseInverse();

        const Eigen::VectorXcd r2 = r_diag.array().square();
        const Eigen::VectorXcd rt2 = rt_diag.array().square();
        const Eigen::VectorXcd w = r2.array() * mod.D.cast<cplx>().array();    // R^2 D
        const Eigen::VectorXcd wt = rt2.array() * mod.Dt.cast<cplx>().array(); // Rt^2 Dt

        const Eigen::MatrixXcd& t = sol.T;
        const Eigen::MatrixXcd& tt = sol.T_tilde;
        const Eigen::MatrixXcd dt_ = mod.D.cast<cplx>().asDiagonal() * t;    // D T
        const Eigen::MatrixXcd dtt_ = mod.Dt.cast<cplx>().asDiagonal() * tt; // Dt Tt

        c_gamma = t * dt_;
        c_gamma_T = t.transpose() * dt_;
        c_gamma_t = tt * dtt_;
        c_gamma_t_T = tt.transpose() * dtt_;

        const Eigen::MatrixXcd aht = mod.A.adjoint() * t;  // A^H T
        const Eigen::MatrixXcd att = mod.A * tt;           // A Tt

        c_F = t * (mod.A * wt.asDiagonal()) * aht;
        c_F_T = t.transpose() * (mod.A.conjugate() * wt.asDiagonal()) * aht;
        c_F_under = t * (mod.A * wt.asDiagonal()) * (mod.A.transpose() * t.transpose());
        c_Ft = tt * (mod.A.adjoint() * w.asDiagonal()) * att;
        c_Ft_T = tt.transpose() * (mod.A.transpose() * w.asDiagonal()) * att;
        c_Ft_under = tt * (mod.A.adjoint() * w.asDiagonal()) * (mod.A.conjugate() * tt.transpose());

        // script functionals, cyclically rearranged so the free argument sits
        // in front: Tr(U . [A Tt Dt Tt^t Dt Tt A^H R^2]) on the resolvent
        // side, Tr(U . [A^H T D T^t D T A Rt^2]) on the co-resolvent side.
        c_script_t = (att * mod.Dt.cast<cplx>().asDiagonal()) * dtt_.transpose() *
                     (tt * mod.A.adjoint()) * r2.asDiagonal();
        c_script = (aht * mod.D.cast<cplx>().asDiagonal()) * dt_.transpose() * (t * mod.A) *
                   rt2.asDiagonal();
    }

    UFunctionals n_side(const Eigen::MatrixXcd& u) const {
        if (u.rows() != mod_->N || u.cols() != mod_->N)
            throw config_error("resolvent-side functional argument must be N x N");
        const double m = static_cast<double>(mod_->M);
        UFunctionals out;
        out.gamma_u = trace_prod(u, c_gamma) / m;
        out.gamma_T_u = trace_prod(u, c_gamma_T) / m;
        out.F_u = trace_prod(u, c_F) / m;
        out.F_T_u = trace_prod(u, c_F_T) / m;
        out.F_T_under_u = trace_prod(u, c_F_under) / m;
        out.script_F_tilde_T_u = trace_prod(u, c_script_t) / m;
        return out;
    }

    UFunctionalsTilde m_side(const Eigen::MatrixXcd& u) const {
        if (u.rows() != mod_->M || u.cols() != mod_->M)
            throw config_error("co-resolvent-side functional argument must be M x M");
        const double m = static_cast<double>(mod_->M);
        UFunctionalsTilde out;
        out.gamma_u = trace_prod(u, c_gamma_t) / m;
        out.gamma_T_u = trace_prod(u, c_gamma_t_T) / m;
        out.F_u = trace_prod(u, c_Ft) / m;
        out.F_T_u = trace_prod(u, c_Ft_T) / m;
        out.F_T_under_u = trace_prod(u, c_Ft_under) / m;
        out.script_F_T_u = trace_prod(u, c_script) / m;
        return out;
    }

    // Diagonal-argument fast paths (the ledger only ever needs these).
    cplx gamma_diag(const Eigen::VectorXd& d) const { return diag_trace(d, c_gamma) / m(); }
    cplx gamma_T_diag(const Eigen::VectorXd& d) const { return diag_trace(d, c_gamma_T) / m(); }
    cplx F_diag(const Eigen::VectorXd& d) const { return diag_trace(d, c_F) / m(); }
    cplx F_T_diag(const Eigen::VectorXd& d) const { return diag_trace(d, c_F_T) / m(); }
    cplx F_under_diag(const Eigen::VectorXd& d) const { return diag_trace(d, c_F_under) / m(); }
    cplx gamma_t_diag(const Eigen::VectorXd& d) const { return diag_trace(d, c_gamma_t) / m(); }
    cplx gamma_t_T_diag(const Eigen::VectorXd& d) const { return diag_trace(d, c_gamma_t_T) / m(); }
    cplx Ft_diag(const Eigen::VectorXd& d) const { return diag_trace(d, c_Ft) / m(); }
    cplx Ft_T_diag(const Eigen::VectorXd& d) const { return diag_trace(d, c_Ft_T) / m(); }
    cplx Ft_under_diag(const Eigen::VectorXd& d) const { return diag_trace(d, c_Ft_under) / m(); }

    const ChannelModel& model() const { return *mod_; }
    const FixedPointSolution& solution() const { return *sol_; }
    double m() const { return static_cast<double>(mod_->M); }

    Eigen::VectorXcd r_diag, rt_diag;
    Eigen::MatrixXcd c_gamma, c_gamma_T, c_gamma_t, c_gamma_t_T;
    Eigen::MatrixXcd c_F, c_F_T, c_F_under, c_Ft, c_Ft_T, c_Ft_under;
    Eigen::MatrixXcd c_script_t, c_script;

private:
    const ChannelModel* mod_;
    const FixedPointSolution* sol_;
};

inline UFunctionals u_functionals(const ChannelModel& mod, const FixedPointSolution& sol,
                                  const Eigen::MatrixXcd& u) {
    return QuantityContext(mod, sol).n_side(u);
}

inline UFunctionalsTilde u_functionals_tilde(const ChannelModel& mod,
                                             const FixedPointSolution& sol,
                                             const Eigen::MatrixXcd& u) {
    return QuantityContext(mod, sol).m_side(u);
}

// Derivatives of the fixed-point pair in z through the 2x2 linear system; its
// determinant is exactly Delta, which also guards against a degenerate
// fluctuation scale.
struct DerivativePair {
    cplx dprime;
    cplx dtprime;
    cplx determinant;
};

inline DerivativePair solve_derivatives(const ChannelModel& mod, const FixedPointSolution& sol,
                                        const QuantityContext& ctx) {
    const double m = static_cast<double>(mod.M);
    const cplx omega = -sol.z;
    const cplx gamma = ctx.gamma_diag(mod.D);
    const cplx gamma_t = ctx.gamma_t_diag(mod.Dt);
    const cplx f = ctx.F_diag(mod.D);

    const cplx tr_dt2 = trace_prod(mod.D.cast<cplx>().asDiagonal() * sol.T, sol.T) / m;
    const cplx tr_dtt2 =
        trace_prod(mod.Dt.cast<cplx>().asDiagonal() * sol.T_tilde, sol.T_tilde) / m;

    const cplx rhs1 = -tr_dt2 - sol.delta_tilde * gamma;
    const cplx rhs2 = -tr_dtt2 - sol.delta * gamma_t;
    const cplx det = (1.0 - f) * (1.0 - f) - omega * omega * gamma * gamma_t;

    const double scale = std::norm(1.0 - f) + std::abs(omega * omega * gamma * gamma_t) + 1e-30;
    if (std::abs(det) < 1e-13 * scale)
        throw numeric_error("fluctuation determinant Delta is degenerate at z = " +
                            format_complex(sol.z));

    DerivativePair out;
    const cplx d_omega = (rhs1 * (1.0 - f) - omega * gamma * rhs2) / det;
    const cplx dt_omega = ((1.0 - f) * rhs2 - omega * gamma_t * rhs1) / det;
    out.dprime = -d_omega; // d/dz = -d/domega
    out.dtprime = -dt_omega;
    out.determinant = det;
    return out;
}

inline DerivativePair solve_derivatives(const ChannelModel& mod, const FixedPointSolution& sol) {
    QuantityContext ctx(mod, sol);
    return solve_derivatives(mod, sol, ctx);
}

// Full Table-I ledger at the solution's spectral point.
inline DeterministicQuantities table1(const ChannelModel& mod, const FixedPointSolution& sol,
                                      const QuantityContext& ctx) {
    const double m = static_cast<double>(mod.M);
    const cplx z = sol.z;
    DeterministicQuantities q;
    q.z = z;
    q.R = ctx.r_diag;
    q.Rt = ctx.rt_diag;
    q.S = sol.T.diagonal();
    q.St = sol.T_tilde.diagonal();

    q.gamma = ctx.gamma_diag(mod.D);
    q.gamma_T = ctx.gamma_T_diag(mod.D);
    q.gamma_tilde = ctx.gamma_t_diag(mod.Dt);
    q.gamma_tilde_T = ctx.gamma_t_T_diag(mod.Dt);

    q.eta = (q.S.array().square() * mod.D.cast<cplx>().array().square()).sum() / m;
    q.eta_tilde = (q.St.array().square() * mod.Dt.cast<cplx>().array().square()).sum() / m;
    q.tr_D2S2 = (q.S.array().square() * mod.D.cast<cplx>().array().square()).sum();
    q.tr_Dt2St2 = (q.St.array().square() * mod.Dt.cast<cplx>().array().square()).sum();

    q.F = ctx.F_diag(mod.D);
    q.F_T = ctx.F_T_diag(mod.D);
    q.F_T_under = ctx.F_under_diag(mod.D);
    q.F_tilde_T = ctx.Ft_T_diag(mod.Dt);
    q.F_tilde_T_under = ctx.Ft_under_diag(mod.Dt);

    const cplx vt = mod.moments.vartheta;
    const cplx vt_c = std::conj(vt);
    q.Delta = (1.0 - q.F) * (1.0 - q.F) - z * z * q.gamma * q.gamma_tilde;
    q.Delta_T = (1.0 - vt * q.F_T) * (1.0 - vt_c * q.F_T_under) -
                std::norm(vt) * z * z * q.gamma_T * q.gamma_tilde_T;

    // At real z < 0 both determinants are real and positive; enforce it so a
    // broken input surfaces here rather than inside a logarithm later.
    if (z.imag() == 0.0) {
        const double dt_mag = std::abs(q.Delta_T);
        const double d_mag = std::abs(q.Delta);
        if (d_mag > 0.0 && (std::abs(q.Delta.imag()) > 1e-10 * std::max(1.0, d_mag) ||
                            q.Delta.real() <= 0.0))
            throw numeric_error("Delta must be real positive at real z, got " +
                                format_complex(q.Delta));
        if (dt_mag > 0.0 && (std::abs(q.Delta_T.imag()) > 1e-10 * std::max(1.0, dt_mag) ||
                             q.Delta_T.real() <= 0.0))
            throw numeric_error("Delta_T must be real positive at real z, got " +
                                format_complex(q.Delta_T));
    }

    const DerivativePair der = solve_derivatives(mod, sol, ctx);
    q.dprime = der.dprime;
    q.dtprime = der.dtprime;
    return q;
}

inline DeterministicQuantities table1(const ChannelModel& mod, const FixedPointSolution& sol) {
    QuantityContext ctx(mod, sol);
    return table1(mod, sol, ctx);
}

} // namespace rmtbias
