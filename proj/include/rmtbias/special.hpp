// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "rmtbias/errors.hpp"

namespace rmtbias {

// Complete elliptic integral of the second kind,
// E(k) = int_0^{pi/2} sqrt(1 - k^2 sin^2 x) dx, modulus convention.
// Arithmetic-geometric mean iteration, converges quadratically; the loop
// exits once the c_n correction drops below 1e-14 absolute.
inline double complete_elliptic_e(double k) {
    if (!(k >= 0.0 && k <= 1.0))
        throw config_error("elliptic modulus must lie in [0,1]");
    if (k == 0.0) return 1.5707963267948966;
    if (k == 1.0) return 1.0;

    double a = 1.0;
    double b = std::sqrt(1.0 - k * k);
    double c = k;
    double sum = 0.5 * c * c;
    double pow2 = 0.5; // 2^(n-1) weight for n = 0
    for (int n = 0; n < 64 && std::abs(c) > 1e-14; ++n) {
        const double an = 0.5 * (a + b);
        const double bn = std::sqrt(a * b);
        c = 0.5 * (a - b);
        a = an;
        b = bn;
        pow2 *= 2.0;
        sum += pow2 * c * c;
    }
    const double big_k = 1.5707963267948966 / a;
    return big_k * (1.0 - sum);
}

// Standard normal CDF and tail probability, both through erfc so the
// extreme tails keep full relative accuracy.
inline double gaussian_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.7071067811865476);
}

inline double gaussian_q(double x) {
    return 0.5 * std::erfc(x * 0.7071067811865476);
}

} // namespace rmtbias
