// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>

#include "rmtbias/channel_model.hpp"
#include "rmtbias/errors.hpp"
#include "rmtbias/numeric.hpp"

namespace rmtbias {

// A point z where the resolvent is evaluated; anything off the closed
// nonnegative real axis is admissible.
struct SpectralPoint {
    cplx z;

    explicit SpectralPoint(cplx z_) : z(z_) {
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
            throw config_error("spectral point must be finite");
        if (z.imag() == 0.0 && z.real() >= 0.0)
            throw config_error("spectral point must avoid the nonnegative real axis");
    }
};

struct SolverOptions {
    double tol = 1e-12;   // fixed-point residual target (absolute)
    int max_iter = 10000; // iteration cap before giving up
    double damping = 1.0; // 1 = undamped; smaller values relax the update
};

struct FixedPointSolution {
    cplx z;
    cplx delta;
    cplx delta_tilde;
    Eigen::MatrixXcd T;       // N x N deterministic equivalent of the resolvent
    Eigen::MatrixXcd T_tilde; // M x M co-resolvent equivalent
    int iterations = 0;
    double residual = 0.0;
};

namespace detail {

// Inverts -z(I + dt D) + A (I + d Dt)^{-1} A^H (or the mirrored co-resolvent
// form). For real z < 0 with real positive iterates the matrix is Hermitian
// positive definite and a Cholesky factorization applies; elsewhere LU.
inline Eigen::MatrixXcd invert_system(const Eigen::MatrixXcd& k, bool hermitian) {
    const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(k.rows(), k.cols());
    if (hermitian) {
        Eigen::LLT<Eigen::MatrixXcd> llt(k);
        if (llt.info() == Eigen::Success) return llt.solve(id);
        throw numeric_error("resolvent system lost positive definiteness");
    }
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(k);
    return lu.solve(id);
}

inline Eigen::MatrixXcd build_T(const ChannelModel& mod, cplx delta, cplx delta_tilde, cplx z,
                                bool hermitian) {
    const Eigen::VectorXcd rt_diag =
        (Eigen::VectorXcd::Ones(mod.M) + delta * mod.Dt.cast<cplx>()).cwiseInverse();
    Eigen::MatrixXcd k = mod.A * rt_diag.asDiagonal() * mod.A.adjoint();
    k.diagonal() -= z * (Eigen::VectorXcd::Ones(mod.N) + delta_tilde * mod.D.cast<cplx>());
    return invert_system(k, hermitian);
}

inline Eigen::MatrixXcd build_T_tilde(const ChannelModel& mod, cplx delta, cplx delta_tilde,
                                      cplx z, bool hermitian) {
    const Eigen::VectorXcd r_diag =
        (Eigen::VectorXcd::Ones(mod.N) + delta_tilde * mod.D.cast<cplx>()).cwiseInverse();
    Eigen::MatrixXcd k = mod.A.adjoint() * r_diag.asDiagonal() * mod.A;
    k.diagonal() -= z * (Eigen::VectorXcd::Ones(mod.M) + delta * mod.Dt.cast<cplx>());
    return invert_system(k, hermitian);
}

} // namespace detail

// Gauss-Seidel sweep on the two scalar equations: the delta update is built
// from the previous pair, the delta_tilde update already sees the fresh
// delta. Damping at factor 0.5 switches on by itself once 200 steps failed to
// shrink monotonically. The reported residual is the genuine fixed-point
// defect of the returned pair, not the last step size.
inline FixedPointSolution solve(const ChannelModel& mod, cplx z, const SolverOptions& opts = {}) {
    SpectralPoint point(z);
    if (!(opts.tol > 0.0) || opts.max_iter < 1 || !(opts.damping > 0.0) || opts.damping > 1.0)
        throw config_error("solver options out of range");

    const bool real_z = z.imag() == 0.0 && z.real() < 0.0;
    cplx delta(1.0, 0.0);
    cplx delta_tilde(1.0, 0.0);
    double theta = opts.damping;
    bool auto_damped = false;
    int non_monotone = 0;
    double prev_step = std::numeric_limits<double>::infinity();
    int iter = 0;

    const double step_target = 0.05 * opts.tol;
    while (iter < opts.max_iter) {
        ++iter;
        const Eigen::MatrixXcd t = detail::build_T(mod, delta, delta_tilde, z, real_z);
        cplx delta_next = diag_trace(mod.D, t) / static_cast<double>(mod.M);
        delta_next = theta * delta_next + (1.0 - theta) * delta;
        if (real_z) delta_next = cplx(delta_next.real(), 0.0);

        const Eigen::MatrixXcd tt = detail::build_T_tilde(mod, delta_next, delta_tilde, z, real_z);
        cplx delta_tilde_next = diag_trace(mod.Dt, tt) / static_cast<double>(mod.M);
        delta_tilde_next = theta * delta_tilde_next + (1.0 - theta) * delta_tilde;
        if (real_z) delta_tilde_next = cplx(delta_tilde_next.real(), 0.0);

        const double step =
            std::max(std::abs(delta_next - delta), std::abs(delta_tilde_next - delta_tilde));
        delta = delta_next;
        delta_tilde = delta_tilde_next;

        if (step > prev_step) {
            ++non_monotone;
            if (!auto_damped && opts.damping == 1.0 && non_monotone >= 200) {
                theta = 0.5;
                auto_damped = true;
            }
        }
        prev_step = step;
        if (step <= step_target) {
            // Verify the true residual before declaring convergence.
            const Eigen::MatrixXcd tv = detail::build_T(mod, delta, delta_tilde, z, real_z);
            const Eigen::MatrixXcd ttv = detail::build_T_tilde(mod, delta, delta_tilde, z, real_z);
            const double res = std::max(
                std::abs(delta - diag_trace(mod.D, tv) / static_cast<double>(mod.M)),
                std::abs(delta_tilde - diag_trace(mod.Dt, ttv) / static_cast<double>(mod.M)));
            if (res <= opts.tol) {
                FixedPointSolution sol;
                sol.z = z;
                sol.delta = delta;
                sol.delta_tilde = delta_tilde;
                sol.T = tv;
                sol.T_tilde = ttv;
                sol.iterations = iter;
                sol.residual = res;
                return sol;
            }
        }
    }

    std::ostringstream msg;
    msg << "fixed point did not reach tol " << opts.tol << " within " << opts.max_iter
        << " iterations at z = " << format_complex(z) << " (last step " << prev_step << ")";
    throw numeric_error(msg.str());
}

// Tr T(z), the deterministic equivalent of E Tr (H H^H - zI)^{-1}.
inline cplx resolvent_trace_de(const FixedPointSolution& sol) { return sol.T.trace(); }

// Structural identities every converged solution must satisfy, each reported
// as a scale-relative deviation:
//   woodbury:      T_tilde = -z^{-1} Rt + z^{-1} Rt A^H T A Rt
//   intertwining:  T A Rt = R A T_tilde   and   Rt A^H T = T_tilde A^H R
//   trace_swap:    (1/M) Tr Dt Tt A^H D R^2 A Tt = (1/M) Tr D T A Dt Rt^2 A^H T
struct IdentityReport {
    double woodbury = 0.0;
    double intertwining = 0.0;
    double trace_swap = 0.0;
    double max() const { return std::max({woodbury, intertwining, trace_swap}); }
};

inline IdentityReport verify_identities(const ChannelModel& mod, const FixedPointSolution& sol) {
    const cplx z = sol.z;
    const Eigen::VectorXcd r_diag =
        (Eigen::VectorXcd::Ones(mod.N) + sol.delta_tilde * mod.D.cast<cplx>()).cwiseInverse();
    const Eigen::VectorXcd rt_diag =
        (Eigen::VectorXcd::Ones(mod.M) + sol.delta * mod.Dt.cast<cplx>()).cwiseInverse();

    IdentityReport rep;
    {
        const Eigen::MatrixXcd lhs = sol.T_tilde;
        const Eigen::MatrixXcd core = mod.A.adjoint() * sol.T * mod.A;
        const Eigen::MatrixXcd rhs =
            (-1.0 / z) * rt_diag.asDiagonal().toDenseMatrix() +
            (1.0 / z) * (rt_diag.asDiagonal() * core * rt_diag.asDiagonal());
        const double scale = lhs.cwiseAbs().maxCoeff();
        rep.woodbury = (lhs - rhs).cwiseAbs().maxCoeff() / std::max(scale, 1e-300);
    }
    {
        const Eigen::MatrixXcd l1 = sol.T * mod.A * rt_diag.asDiagonal();
        const Eigen::MatrixXcd r1 = r_diag.asDiagonal() * mod.A * sol.T_tilde;
        const Eigen::MatrixXcd l2 = rt_diag.asDiagonal() * mod.A.adjoint() * sol.T;
        const Eigen::MatrixXcd r2 = sol.T_tilde * mod.A.adjoint() * r_diag.asDiagonal();
        const double s1 = std::max(l1.norm(), 1e-300);
        const double s2 = std::max(l2.norm(), 1e-300);
        rep.intertwining = std::max((l1 - r1).norm() / s1, (l2 - r2).norm() / s2);
    }
    {
        const Eigen::VectorXcd r2 = r_diag.array().square();
        const Eigen::VectorXcd rt2 = rt_diag.array().square();
        const cplx lhs = (mod.Dt.cast<cplx>().asDiagonal() * sol.T_tilde * mod.A.adjoint() *
                          mod.D.cast<cplx>().asDiagonal() * r2.asDiagonal() * mod.A * sol.T_tilde)
                             .trace() /
                         static_cast<double>(mod.M);
        const cplx rhs = (mod.D.cast<cplx>().asDiagonal() * sol.T * mod.A *
                          mod.Dt.cast<cplx>().asDiagonal() * rt2.asDiagonal() * mod.A.adjoint() *
                          sol.T)
                             .trace() /
                         static_cast<double>(mod.M);
        rep.trace_swap = std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-300});
    }
    return rep;
}

} // namespace rmtbias
