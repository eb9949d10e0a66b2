// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rmtbias/contour.hpp"
#include "rmtbias/mi_statistics.hpp"
#include "rmtbias/rng.hpp"

#include "helpers.hpp"

using namespace rmtbias;
using testhelpers::random_model;
using testhelpers::rel_err;

namespace {

ChannelModel white_model(int n, int m) {
    EntryMoments mom;
    return ChannelModel(Eigen::MatrixXcd::Zero(n, m), Eigen::VectorXd::Ones(n),
                        Eigen::VectorXd::Ones(m), mom);
}

ContourSpec spec_for(const ChannelModel& mod, int nodes, ContourShape shape, bool half) {
    ContourSpec spec = default_contour(mod, nodes, std::nullopt, std::nullopt, shape);
    spec.half = half;
    return spec;
}

} // namespace

TEST_CASE("support bound closed forms for white models") {
    REQUIRE(rel_err(support_bound(white_model(8, 8)), 8.0) < 1e-14);
    REQUIRE(rel_err(support_bound(white_model(2, 8)), 4.5) < 1e-14);
}

TEST_CASE("contour geometry") {
    ContourSpec spec;
    spec.u_plus = 4.0;
    spec.margin = 0.4;
    spec.nodes = 64;

    for (ContourShape shape : {ContourShape::ellipse, ContourShape::rectangle}) {
        spec.shape = shape;
        spec.half = true;
        const auto upper = contour_nodes(spec);
        REQUIRE(upper.size() == 32);
        for (const auto& nd : upper) REQUIRE(nd.z.imag() > 0.0);

        spec.half = false;
        const auto closed = contour_nodes(spec);
        REQUIRE(closed.size() == 64);
        cplx total(0.0, 0.0);
        for (std::size_t k = 0; k < closed.size(); ++k) total += closed[k].w;
        REQUIRE(std::abs(total) < 1e-12);
        // The lower half mirrors the upper half in reverse order.
        for (std::size_t k = 0; k < 32; ++k) {
            REQUIRE(closed[63 - k].z == std::conj(closed[k].z));
            REQUIRE(closed[63 - k].w == -std::conj(closed[k].w));
        }
    }

    spec.nodes = 7;
    REQUIRE_THROWS_AS(contour_nodes(spec), config_error);
    spec.nodes = 64;
    spec.margin = 0.0;
    REQUIRE_THROWS_AS(contour_nodes(spec), config_error);
    spec.margin = 0.4;
    spec.u_plus = -1.0;
    REQUIRE_THROWS_AS(contour_nodes(spec), config_error);
}

TEST_CASE("zero integrand gives exact zeros") {
    PhiloxRng rng(71, 0);
    const auto mod = random_model(rng, 6);
    const auto res = lss_mean(mod, polynomial_function({0.0}), spec_for(mod, 64, ContourShape::ellipse, true));
    REQUIRE(res.V_f == cplx(0.0, 0.0));
    REQUIRE(res.B_f == cplx(0.0, 0.0));
    REQUIRE(res.nodes_evaluated == 32);
}

TEST_CASE("constant function counts the deterministic mass") {
    PhiloxRng rng(72, 0);
    const auto mod = random_model(rng, 8);
    const auto f = polynomial_function({1.0});

    const auto ellipse = lss_mean(mod, f, spec_for(mod, 512, ContourShape::ellipse, true));
    REQUIRE(rel_err(ellipse.V_f.real(), static_cast<double>(mod.N)) < 1e-8);
    REQUIRE(std::abs(ellipse.B_f) < 1e-8 * mod.N);

    const auto full = lss_mean(mod, f, spec_for(mod, 512, ContourShape::ellipse, false));
    REQUIRE(rel_err(full.V_f.real(), static_cast<double>(mod.N)) < 1e-8);
    REQUIRE(std::abs(full.V_f - ellipse.V_f) < 1e-10 * mod.N);
    REQUIRE(full.nodes_evaluated == 512);

    const auto rect = lss_mean(mod, f, spec_for(mod, 512, ContourShape::rectangle, true));
    REQUIRE(rel_err(rect.V_f.real(), static_cast<double>(mod.N)) < 2e-3);
}

TEST_CASE("first moment of the deterministic measure is exact") {
    PhiloxRng rng(73, 0);
    const auto mod = random_model(rng, 8);
    const auto res = lss_mean(mod, polynomial_function({0.0, 1.0}),
                              spec_for(mod, 512, ContourShape::ellipse, true));
    const double expected =
        (mod.A * mod.A.adjoint()).trace().real() + mod.D.sum() * mod.Dt.sum() / mod.M;
    REQUIRE(rel_err(res.V_f.real(), expected) < 1e-8);
    REQUIRE(std::abs(res.B_f) < 1e-6 * std::max(1.0, expected));
}

TEST_CASE("doubling the nodes moves the ellipse result below 1e-6") {
    PhiloxRng rng(74, 0);
    const auto mod = random_model(rng, 8);
    const double sigma2 = 0.3;
    const auto f = mi_function(sigma2);
    const ContourSpec coarse = default_contour(mod, 256, sigma2);
    ContourSpec fine = coarse;
    fine.nodes = 512;
    const auto a = lss_mean(mod, f, coarse);
    const auto b = lss_mean(mod, f, fine);
    const double scale = std::max(1.0, std::abs(b.V_f.real()));
    REQUIRE(std::abs(a.V_f - b.V_f) < 1e-6 * scale);
    REQUIRE(std::abs(a.B_f - b.B_f) < 1e-6 * std::max(1.0, std::abs(b.B_f.real())));
}

TEST_CASE("mi contour integral matches the closed-form statistics") {
    PhiloxRng rng(75, 0);
    for (int rep = 0; rep < 3; ++rep) {
        const auto mod = random_model(rng, 8);
        const double sigma2 = 0.25 + 0.25 * rep;
        const auto stats = mi_clt(mod, sigma2);
        const auto res = lss_mean(mod, mi_function(sigma2), default_contour(mod, 512, sigma2));
        REQUIRE(rel_err(res.V_f.real(), stats.V) < 1e-6);
        REQUIRE(std::abs(res.B_f.real() - stats.B_C) <
                1e-4 * std::max({std::abs(stats.B_C), 1e-3}));
    }
}

TEST_CASE("rectangle and ellipse agree on the mi statistics") {
    PhiloxRng rng(76, 0);
    const auto mod = random_model(rng, 7);
    const double sigma2 = 0.4;
    const auto f = mi_function(sigma2);
    const auto e = lss_mean(mod, f, default_contour(mod, 512, sigma2));
    const auto r = lss_mean(
        mod, f, default_contour(mod, 2048, sigma2, std::nullopt, ContourShape::rectangle));
    REQUIRE(rel_err(e.V_f.real(), r.V_f.real()) < 1e-3);
}

TEST_CASE("margin overrides that cross the branch point are rejected") {
    const auto mod = white_model(4, 8);
    REQUIRE_THROWS_AS(default_contour(mod, 256, 0.2, 0.3), config_error);
    REQUIRE_NOTHROW(default_contour(mod, 256, 0.2, 0.1));
    // The automatic margin always stays below the branch point.
    REQUIRE_NOTHROW(default_contour(mod, 256, 1e-4));
}

TEST_CASE("worker count does not change the reduction") {
    PhiloxRng rng(77, 0);
    const auto mod = random_model(rng, 7);
    const auto f = mi_function(0.3);
    const ContourSpec spec = default_contour(mod, 128, 0.3);
    const auto one = lss_mean(mod, f, spec, {}, 1);
    const auto four = lss_mean(mod, f, spec, {}, 4);
    REQUIRE(one.V_f == four.V_f);
    REQUIRE(one.B_f == four.B_f);
}

TEST_CASE("scalar function factories validate their inputs") {
    REQUIRE_THROWS_AS(mi_function(0.0), config_error);
    REQUIRE_THROWS_AS(mi_function(-1.0), config_error);
    REQUIRE_THROWS_AS(polynomial_function({}), config_error);
    const auto p = polynomial_function({1.0, 2.0, 3.0});
    REQUIRE(std::abs(p(cplx(2.0, 0.0)) - cplx(17.0, 0.0)) < 1e-14);
}
