// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rmtbias/fixed_point.hpp"
#include "rmtbias/rng.hpp"

#include "helpers.hpp"

using namespace rmtbias;
using testhelpers::random_model;
using testhelpers::rel_err;

namespace {

ChannelModel scalar_model() {
    EntryMoments mom;
    return ChannelModel(Eigen::MatrixXcd::Zero(1, 1), Eigen::VectorXd::Ones(1),
                        Eigen::VectorXd::Ones(1), mom);
}

ChannelModel white_model(int n, int m) {
    EntryMoments mom;
    return ChannelModel(Eigen::MatrixXcd::Zero(n, m), Eigen::VectorXd::Ones(n),
                        Eigen::VectorXd::Ones(m), mom);
}

} // namespace

TEST_CASE("scalar white model solves to the golden ratio") {
    const auto sol = solve(scalar_model(), cplx(-1.0, 0.0));
    const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
    REQUIRE(std::abs(sol.delta - cplx(golden, 0.0)) < 1e-12);
    REQUIRE(std::abs(sol.delta_tilde - cplx(golden, 0.0)) < 1e-12);
    REQUIRE(std::abs(sol.T(0, 0) - cplx(golden, 0.0)) < 1e-12);
    REQUIRE(std::abs(sol.T_tilde(0, 0) - cplx(golden, 0.0)) < 1e-12);
}

TEST_CASE("white rectangular model matches the quadratic closed form") {
    // For A = 0, D = I_N, Dt = I_M, z = -s2 the system collapses to
    // s2 d^2 + d (s2 + 1 - c) - c = 0 with c = N/M.
    const double s2 = 0.2;
    const double c = 0.5;
    const auto sol = solve(white_model(4, 8), cplx(-s2, 0.0));
    const double b = s2 + 1.0 - c;
    const double root = (-b + std::sqrt(b * b + 4.0 * s2 * c)) / (2.0 * s2);
    REQUIRE(rel_err(sol.delta, cplx(root, 0.0)) < 1e-12);
    // delta_tilde follows from the coupled scalar equation.
    const double root_t = 1.0 / (s2 * (1.0 + root));
    REQUIRE(rel_err(sol.delta_tilde, cplx(root_t, 0.0)) < 1e-12);
}

TEST_CASE("deep in the spectrum delta approaches tr D / (M omega)") {
    PhiloxRng rng(31, 0);
    const auto mod = random_model(rng, 8);
    const double omega = 1e8;
    const auto sol = solve(mod, cplx(-omega, 0.0));
    const double limit = mod.D.sum() / (static_cast<double>(mod.M) * omega);
    REQUIRE(rel_err(sol.delta, cplx(limit, 0.0)) < 1e-4);
    const double limit_t = mod.Dt.sum() / (static_cast<double>(mod.M) * omega);
    REQUIRE(rel_err(sol.delta_tilde, cplx(limit_t, 0.0)) < 1e-4);
}

TEST_CASE("delta decreases monotonically along the negative axis") {
    PhiloxRng rng(32, 0);
    const auto mod = random_model(rng, 8);
    double prev = std::numeric_limits<double>::infinity();
    for (double omega : {0.05, 0.2, 1.0, 5.0, 25.0, 125.0}) {
        const auto sol = solve(mod, cplx(-omega, 0.0));
        REQUIRE(sol.delta.imag() == 0.0);
        REQUIRE(sol.delta.real() > 0.0);
        REQUIRE(sol.delta.real() < prev);
        prev = sol.delta.real();
    }
}

TEST_CASE("solution satisfies the defining matrix equations") {
    PhiloxRng rng(33, 0);
    for (cplx z : {cplx(-0.5, 0.0), cplx(-1.0, 0.5), cplx(0.3, 1.2)}) {
        const auto mod = random_model(rng, 10);
        const auto sol = solve(mod, z);

        const Eigen::VectorXcd rt =
            (Eigen::VectorXcd::Ones(mod.M) + sol.delta * mod.Dt.cast<cplx>()).cwiseInverse();
        Eigen::MatrixXcd k = mod.A * rt.asDiagonal() * mod.A.adjoint();
        k.diagonal() -= z * (Eigen::VectorXcd::Ones(mod.N) + sol.delta_tilde * mod.D.cast<cplx>());
        const Eigen::MatrixXcd should_be_id = sol.T * k;
        REQUIRE((should_be_id - Eigen::MatrixXcd::Identity(mod.N, mod.N)).norm() < 1e-9);

        // The scalars reproduce themselves from the matrices.
        const cplx d = trace_prod(mod.D.cast<cplx>().asDiagonal(), sol.T) / double(mod.M);
        const cplx dt = trace_prod(mod.Dt.cast<cplx>().asDiagonal(), sol.T_tilde) / double(mod.M);
        REQUIRE(std::abs(d - sol.delta) < 1e-10 * std::max(1.0, std::abs(sol.delta)));
        REQUIRE(std::abs(dt - sol.delta_tilde) < 1e-10 * std::max(1.0, std::abs(sol.delta_tilde)));

        REQUIRE(sol.residual <= 1e-12);
        REQUIRE(sol.iterations >= 1);
    }
}

TEST_CASE("resolvent identities hold on random models") {
    PhiloxRng rng(34, 0);
    for (int rep = 0; rep < 8; ++rep) {
        const auto mod = random_model(rng, 10);
        const cplx z = rep % 2 == 0 ? cplx(-0.7, 0.0) : cplx(-0.4, 0.9);
        const auto sol = solve(mod, z);
        const auto rep_id = verify_identities(mod, sol);
        REQUIRE(rep_id.woodbury < 1e-10);
        REQUIRE(rep_id.intertwining < 1e-10);
        REQUIRE(rep_id.trace_swap < 1e-10);
        REQUIRE(rep_id.max() < 1e-10);
    }
}

TEST_CASE("damping converges to the same fixed point") {
    PhiloxRng rng(35, 0);
    const auto mod = random_model(rng, 8);
    const cplx z(-0.3, 0.0);
    const auto plain = solve(mod, z);
    SolverOptions opts;
    opts.damping = 0.5;
    const auto damped = solve(mod, z, opts);
    REQUIRE(std::abs(plain.delta - damped.delta) < 1e-10);
    REQUIRE(std::abs(plain.delta_tilde - damped.delta_tilde) < 1e-10);
}

TEST_CASE("repeated solves are bit identical") {
    PhiloxRng rng(36, 0);
    const auto mod = random_model(rng, 8);
    const cplx z(-0.6, 0.2);
    const auto a = solve(mod, z);
    const auto b = solve(mod, z);
    REQUIRE(a.delta == b.delta);
    REQUIRE(a.delta_tilde == b.delta_tilde);
    REQUIRE(a.iterations == b.iterations);
    REQUIRE(a.T == b.T);
}

TEST_CASE("spectral point validation") {
    REQUIRE_THROWS_AS(SpectralPoint(cplx(1.0, 0.0)), config_error);
    REQUIRE_THROWS_AS(SpectralPoint(cplx(0.0, 0.0)), config_error);
    REQUIRE_THROWS_AS(SpectralPoint(cplx(std::nan(""), 0.0)), config_error);
    REQUIRE_NOTHROW(SpectralPoint(cplx(-1.0, 0.0)));
    REQUIRE_NOTHROW(SpectralPoint(cplx(1.0, 1e-3)));
}

TEST_CASE("solver option validation and iteration cap") {
    const auto mod = scalar_model();
    SolverOptions bad;
    bad.tol = 0.0;
    REQUIRE_THROWS_AS(solve(mod, cplx(-1.0, 0.0), bad), config_error);
    bad = SolverOptions{};
    bad.max_iter = 0;
    REQUIRE_THROWS_AS(solve(mod, cplx(-1.0, 0.0), bad), config_error);
    bad = SolverOptions{};
    bad.damping = 1.5;
    REQUIRE_THROWS_AS(solve(mod, cplx(-1.0, 0.0), bad), config_error);

    SolverOptions capped;
    capped.max_iter = 1;
    capped.tol = 1e-15;
    REQUIRE_THROWS_AS(solve(mod, cplx(-1.0, 0.0), capped), numeric_error);
}
