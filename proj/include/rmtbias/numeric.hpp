// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <complex>
#include <string>

#include "rmtbias/errors.hpp"

namespace rmtbias {

using cplx = std::complex<double>;

// Tr(A*B) without forming the product. A is m-by-n, B is n-by-m.
inline cplx trace_prod(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    return (a.array() * b.transpose().array()).sum();
}

// Tr(diag(d) * T) for a real weight vector d.
inline cplx diag_trace(const Eigen::VectorXd& d, const Eigen::MatrixXcd& t) {
    return (d.array().cast<cplx>() * t.diagonal().array()).sum();
}

// Shortest decimal representation that round-trips to the same double.
// Used everywhere a number is serialized so reruns are byte-identical.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

// Parses "a", "a+bi", "a-bj" style complex literals (both i and j accepted).
inline cplx parse_complex(const std::string& text) {
    std::string s;
    s.reserve(text.size());
    for (char ch : text)
        if (!std::isspace(static_cast<unsigned char>(ch))) s.push_back(ch);
    if (s.empty()) throw config_error("empty complex literal");

    auto read_num = [&](std::size_t pos, double& out) -> std::size_t {
        // from_chars accepts a leading '-' but not an explicit '+'.
        if (pos < s.size() && s[pos] == '+') ++pos;
        auto res = std::from_chars(s.data() + pos, s.data() + s.size(), out);
        if (res.ec != std::errc()) throw config_error("malformed complex literal: " + text);
        return static_cast<std::size_t>(res.ptr - s.data());
    };

    double re = 0.0;
    std::size_t pos = read_num(0, re);
    if (pos == s.size()) return cplx(re, 0.0);
    if (s[pos] == 'i' || s[pos] == 'j') {
        if (pos + 1 != s.size()) throw config_error("malformed complex literal: " + text);
        return cplx(0.0, re);
    }
    if (s[pos] != '+' && s[pos] != '-') throw config_error("malformed complex literal: " + text);
    double im = 0.0;
    std::size_t pos2 = read_num(pos, im);
    if (pos2 + 1 != s.size() || (s[pos2] != 'i' && s[pos2] != 'j'))
        throw config_error("malformed complex literal: " + text);
    return cplx(re, im);
}

inline std::string format_complex(cplx z) {
    std::string out = format_double(z.real());
    // An exactly-zero imaginary part is omitted; parse_complex accepts both
    // spellings, so the representation still round-trips.
    if (z.imag() == 0.0) return out;
    if (z.imag() >= 0 || std::isnan(z.imag()))
        out += "+" + format_double(z.imag());
    else
        out += format_double(z.imag());
    out += "i";
    return out;
}

} // namespace rmtbias
