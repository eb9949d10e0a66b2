// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rmtbias/channel_model.hpp"
#include "rmtbias/numeric.hpp"
#include "rmtbias/rng.hpp"

namespace testhelpers {

using rmtbias::cplx;

inline double rel_err(cplx a, cplx b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

inline double rel_err(double a, double b) { return rel_err(cplx(a, 0.0), cplx(b, 0.0)); }

// Random model per the property-test corpus recipe: dimensions up to max_dim,
// diagonal profiles in [0.2, 2], unit-norm columns in A, |vartheta| <= 0.9,
// kappa in [-1, 6].
inline rmtbias::ChannelModel random_model(rmtbias::PhiloxRng& rng, int max_dim = 12,
                                          bool with_a = true, bool circular = false) {
    const int n = 2 + static_cast<int>(rng.uniform() * (max_dim - 1));
    const int m = 2 + static_cast<int>(rng.uniform() * (max_dim - 1));
    Eigen::VectorXd d(n), dt(m);
    for (int i = 0; i < n; ++i) d(i) = 0.2 + 1.8 * rng.uniform();
    for (int j = 0; j < m; ++j) dt(j) = 0.2 + 1.8 * rng.uniform();

    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(n, m);
    if (with_a) {
        for (int j = 0; j < m; ++j) {
            for (int i = 0; i < n; ++i) a(i, j) = cplx(rng.normal(), rng.normal());
            a.col(j) /= a.col(j).norm();
        }
    }

    rmtbias::EntryMoments mom;
    if (circular) {
        mom.vartheta = cplx(0.0, 0.0);
        mom.kappa = 0.0;
    } else {
        const double mag = 0.9 * rng.uniform();
        const double phase = 6.283185307179586 * rng.uniform();
        mom.vartheta = std::polar(mag, phase);
        mom.kappa = -1.0 + 7.0 * rng.uniform();
    }
    mom.zeta = cplx(0.0, 0.0);
    return rmtbias::ChannelModel(a, d, dt, mom);
}

// Scratch directory for files a test writes; cleaned lazily by the OS.
inline std::string temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "rmtbias_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

// Parse a quantity/value CSV emitted by the command surface into a map-like
// vector (duplicate keys preserved in order).
inline std::vector<std::pair<std::string, std::string>> parse_kv_csv(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::stringstream ss(text);
    std::string line;
    bool first = true;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            continue;
        }
        const auto cut = line.find(',');
        if (cut == std::string::npos) continue;
        const auto cut2 = line.find(',', cut + 1);
        const std::string value = cut2 == std::string::npos
                                      ? line.substr(cut + 1)
                                      : line.substr(cut + 1, cut2 - cut - 1);
        out.emplace_back(line.substr(0, cut), value);
    }
    return out;
}

inline std::string kv_lookup(const std::vector<std::pair<std::string, std::string>>& kv,
                             const std::string& key) {
    for (const auto& [k, v] : kv)
        if (k == key) return v;
    return {};
}

} // namespace testhelpers
