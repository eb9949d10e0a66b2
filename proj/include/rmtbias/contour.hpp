// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rmtbias/bias.hpp"
#include "rmtbias/channel_model.hpp"
#include "rmtbias/errors.hpp"
#include "rmtbias/fixed_point.hpp"
#include "rmtbias/numeric.hpp"
#include "rmtbias/parallel.hpp"

namespace rmtbias {

enum class ContourShape { rectangle, ellipse };

// Closed curve around the spectral support [0, u_plus], described by the
// support bound, the clearance between the interval and the curve at the real
// axis, the total node count of the quadrature rule and the curve family.
//
// margin fixes where the curve crosses the real axis (at -margin and
// u_plus + margin); any branch cut of the integrand on the negative axis
// limits it. height is the vertical semi-axis (ellipse) or edge offset
// (rectangle) and carries no such limit, since the only off-support
// singularities live on the real axis. Leaving height at 0 picks it
// automatically.
struct ContourSpec {
    double u_plus = 0.0;
    double margin = 0.0;
    double height = 0.0; // 0 = automatic
    int nodes = 256;
    ContourShape shape = ContourShape::ellipse;
    bool half = true; // evaluate the upper half only, reflect the rest

    void validate() const {
        if (!(u_plus > 0.0) || !std::isfinite(u_plus))
            throw config_error("contour support bound must be positive and finite");
        if (!(margin > 0.0) || !std::isfinite(margin))
            throw config_error("contour margin must be positive and finite");
        if (height < 0.0 || !std::isfinite(height))
            throw config_error("contour height must be non-negative and finite");
        if (nodes < 8 || nodes % 2 != 0)
            throw config_error("contour node count must be even and at least 8");
    }
};

// Upper edge of the spectrum of H H^H: 2 ||A||^2 + 2 d_max dt_max (1+sqrt(c))^2.
inline double support_bound(const ChannelModel& mod) {
    const double na = operator_norm(mod.A);
    const double root = 1.0 + std::sqrt(mod.aspect());
    return 2.0 * na * na + 2.0 * mod.D.maxCoeff() * mod.Dt.maxCoeff() * root * root;
}

// Default curve for a model. For the MI integrand the clearance stays below
// sigma2/2 so the logarithm's branch point at -sigma2 is left outside; the
// request is rejected when an explicit margin would swallow it.
inline ContourSpec default_contour(const ChannelModel& mod, int nodes = 256,
                                   std::optional<double> mi_sigma2 = std::nullopt,
                                   std::optional<double> margin_override = std::nullopt,
                                   ContourShape shape = ContourShape::ellipse) {
    ContourSpec spec;
    spec.u_plus = support_bound(mod);
    spec.nodes = nodes;
    spec.shape = shape;
    if (margin_override) {
        spec.margin = *margin_override;
    } else if (mi_sigma2) {
        spec.margin = std::min(0.5 * *mi_sigma2, 0.1 * spec.u_plus);
    } else {
        spec.margin = 0.1 * spec.u_plus;
    }
    if (mi_sigma2 && spec.margin >= *mi_sigma2)
        throw config_error("contour margin " + format_double(spec.margin) +
                           " reaches the MI branch point at -" + format_double(*mi_sigma2) +
                           "; use a margin below sigma2");
    spec.validate();
    return spec;
}

// One quadrature node: location z and the complex line element w, so that
// a contour integral of g is approximated by sum g(z_k) w_k.
struct ContourNode {
    cplx z;
    cplx w;
};

namespace detail {

inline void append_segment(std::vector<ContourNode>& out, cplx from, cplx to, int count) {
    const cplx step = (to - from) / static_cast<double>(count);
    for (int k = 0; k < count; ++k)
        out.push_back({from + (static_cast<double>(k) + 0.5) * step, step});
}

// Vertical extent of the curve. A flat ellipse (height = margin) hugs the
// support, where the integrands are nearly singular, and the trapezoid rule
// converges very slowly; lifting the curve fixes that, but the quadrature
// must still resolve the passage between the branch point and the support
// end, whose width is set by margin. Node spacing near the crossings is
// about 2 pi height / nodes, so height grows with the node budget as
// margin * nodes / 16 and is capped at a tenth of the support length.
inline double effective_height(const ContourSpec& spec) {
    if (spec.height > 0.0) return spec.height;
    if (spec.shape == ContourShape::rectangle) return spec.margin;
    const double lifted = spec.margin * static_cast<double>(spec.nodes) / 16.0;
    return std::min(std::max(lifted, spec.margin), 0.1 * spec.u_plus);
}

} // namespace detail

// Nodes of the upper half of the curve, traversed in the positive direction
// (from the right end towards the left end above the axis). When spec.half is
// false, the reflected lower half is appended in traversal order, completing
// the closed curve. Midpoint placement keeps every node strictly off the real
// axis.
inline std::vector<ContourNode> contour_nodes(const ContourSpec& spec) {
    spec.validate();
    std::vector<ContourNode> out;
    const int upper = spec.nodes / 2;
    out.reserve(spec.half ? upper : spec.nodes);

    if (spec.shape == ContourShape::ellipse) {
        const double c0 = 0.5 * spec.u_plus;
        const double a = 0.5 * spec.u_plus + spec.margin;
        const double b = detail::effective_height(spec);
        const double dt = 2.0 * 3.14159265358979323846 / spec.nodes;
        for (int k = 0; k < upper; ++k) {
            const double t = dt * (static_cast<double>(k) + 0.5);
            const cplx z(c0 + a * std::cos(t), b * std::sin(t));
            const cplx w = cplx(-a * std::sin(t), b * std::cos(t)) * dt;
            out.push_back({z, w});
        }
    } else {
        const double x_lo = -spec.margin;
        const double x_hi = spec.u_plus + spec.margin;
        const double b = detail::effective_height(spec);
        const double top = x_hi - x_lo;
        int side = std::max(1, static_cast<int>(std::llround(upper * b / (top + 2.0 * b))));
        side = std::min(side, (upper - 1) / 2);
        side = std::max(side, 1);
        const int across = upper - 2 * side;
        detail::append_segment(out, cplx(x_hi, 0.0), cplx(x_hi, b), side);
        detail::append_segment(out, cplx(x_hi, b), cplx(x_lo, b), across);
        detail::append_segment(out, cplx(x_lo, b), cplx(x_lo, 0.0), side);
    }

    if (!spec.half) {
        for (int k = upper - 1; k >= 0; --k)
            out.push_back({std::conj(out[k].z), -std::conj(out[k].w)});
    }
    return out;
}

struct LssResult {
    cplx V_f{0.0, 0.0}; // deterministic part of E Tr f(H H^H)
    cplx B_f{0.0, 0.0}; // non-Gaussian bias part
    int nodes_evaluated = 0;
};

// Scalar functions handled by the command-line surface.
inline std::function<cplx(cplx)> mi_function(double sigma2) {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        throw config_error("noise level sigma2 must be positive and finite");
    return [sigma2](cplx x) { return std::log(1.0 + x / sigma2); };
}

inline std::function<cplx(cplx)> polynomial_function(const std::vector<double>& coeffs) {
    if (coeffs.empty()) throw config_error("polynomial needs at least one coefficient");
    return [coeffs](cplx x) {
        cplx acc(0.0, 0.0);
        for (std::size_t k = coeffs.size(); k-- > 0;) acc = acc * x + coeffs[k];
        return acc;
    };
}

// (V_f, B_f) = (-1/2 pi j) * contour integrals of f(z) Tr T(z) and f(z) B(z).
// Nodes are evaluated independently (optionally across threads) and reduced
// in node order, so the result does not depend on the worker count. In half
// mode conjugate symmetry makes both results exactly real by construction; in
// full mode the surviving imaginary part is checked against rounding noise.
inline LssResult lss_mean(const ChannelModel& mod, const std::function<cplx(cplx)>& f,
                          const ContourSpec& spec, const SolverOptions& opts = {},
                          unsigned threads = 0) {
    const std::vector<ContourNode> nodes = contour_nodes(spec);
    std::vector<cplx> trace_term(nodes.size());
    std::vector<cplx> bias_term(nodes.size());

    parallel_blocks(nodes.size(), thread_budget(threads), [&](std::size_t k) {
        try {
            const FixedPointSolution sol = solve(mod, nodes[k].z, opts);
            const cplx fz = f(nodes[k].z);
            trace_term[k] = fz * sol.T.trace() * nodes[k].w;
            bias_term[k] = fz * bias_theorem1(mod, sol).total() * nodes[k].w;
        } catch (const numeric_error& err) {
            throw numeric_error(std::string(err.what()) + " [contour node " + std::to_string(k) +
                                ", z = " + format_complex(nodes[k].z) + "]");
        }
    });

    LssResult out;
    out.nodes_evaluated = static_cast<int>(nodes.size());
    if (spec.half) {
        double v = 0.0;
        double b = 0.0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            v += trace_term[k].imag();
            b += bias_term[k].imag();
        }
        const double pi = 3.14159265358979323846;
        out.V_f = cplx(-v / pi, 0.0);
        out.B_f = cplx(-b / pi, 0.0);
    } else {
        cplx v(0.0, 0.0);
        cplx b(0.0, 0.0);
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            v += trace_term[k];
            b += bias_term[k];
        }
        const cplx scale(0.0, 1.0 / (2.0 * 3.14159265358979323846)); // -1/(2 pi j)
        out.V_f = scale * v;
        out.B_f = scale * b;
        const double v_floor = 1e-8 * std::max(1.0, std::abs(out.V_f.real()));
        const double b_floor = 1e-8 * std::max(1.0, std::abs(out.B_f.real()));
        if (std::abs(out.V_f.imag()) > v_floor || std::abs(out.B_f.imag()) > b_floor)
            throw numeric_error("contour results failed the conjugate-symmetry check: V_f = " +
                                format_complex(out.V_f) + ", B_f = " + format_complex(out.B_f));
    }
    return out;
}

} // namespace rmtbias
