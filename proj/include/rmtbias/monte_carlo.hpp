// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rmtbias/channel_model.hpp"
#include "rmtbias/errors.hpp"
#include "rmtbias/fixed_point.hpp"
#include "rmtbias/mi_statistics.hpp"
#include "rmtbias/parallel.hpp"
#include "rmtbias/rng.hpp"
#include "rmtbias/special.hpp"

namespace rmtbias {

// Streaming central moments up to order four (Welford update, pairwise
// merge). The merge is exact in the same sense as the update, so block
// results combined in a fixed order give one deterministic answer no matter
// how blocks were scheduled.
struct StreamingMoments {
    long long n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    double m3 = 0.0;
    double m4 = 0.0;

    void add(double x) {
        const double n1 = static_cast<double>(n);
        n += 1;
        const double nn = static_cast<double>(n);
        const double delta = x - mean;
        const double delta_n = delta / nn;
        const double delta_n2 = delta_n * delta_n;
        const double term1 = delta * delta_n * n1;
        mean += delta_n;
        m4 += term1 * delta_n2 * (nn * nn - 3.0 * nn + 3.0) + 6.0 * delta_n2 * m2 -
              4.0 * delta_n * m3;
        m3 += term1 * delta_n * (nn - 2.0) - 3.0 * delta_n * m2;
        m2 += term1;
    }

    void merge(const StreamingMoments& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        const double na = static_cast<double>(n);
        const double nb = static_cast<double>(o.n);
        const double nn = na + nb;
        const double delta = o.mean - mean;
        const double d2 = delta * delta;
        const double m4_new = m4 + o.m4 + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) /
                                              (nn * nn * nn) +
                              6.0 * d2 * (na * na * o.m2 + nb * nb * m2) / (nn * nn) +
                              4.0 * delta * (na * o.m3 - nb * m3) / nn;
        const double m3_new = m3 + o.m3 + delta * d2 * na * nb * (na - nb) / (nn * nn) +
                              3.0 * delta * (na * o.m2 - nb * m2) / nn;
        const double m2_new = m2 + o.m2 + d2 * na * nb / nn;
        mean += delta * nb / nn;
        m4 = m4_new;
        m3 = m3_new;
        m2 = m2_new;
        n += o.n;
    }

    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
    double std_error_of_mean() const {
        return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
    }
    // Fourth-moment plug-in for Var(s^2): (m4c - (n-3)/(n-1) s^4) / n.
    double std_error_of_variance() const {
        if (n < 4) return 0.0;
        const double nn = static_cast<double>(n);
        const double m4c = m4 / nn;
        const double s2 = variance();
        const double v = (m4c - (nn - 3.0) / (nn - 1.0) * s2 * s2) / nn;
        return std::sqrt(std::max(v, 0.0));
    }
};

// Modulus draw under the E r^2 = 1 normalization of each law.
inline double sample_modulus(const EntryDistribution& d, PhiloxRng& rng) {
    switch (d.law) {
        case ModulusLaw::weibull:
            return modulus_scale(d) * std::pow(-std::log(rng.uniform_pos()), 1.0 / d.param);
        case ModulusLaw::lognormal:
            // modulus_scale returns mu = -param^2, the log-domain location.
            return std::exp(modulus_scale(d) + d.param * rng.normal());
        case ModulusLaw::nakagami:
            return std::sqrt(rng.gamma(d.param) / d.param);
    }
    throw config_error("unknown modulus law");
}

// One channel entry: r scaled on the real and imaginary axes by the
// non-circularity weights, phase uniform on [0, 2 pi).
inline cplx sample_entry(const EntryDistribution& d, PhiloxRng& rng) {
    const double r = sample_modulus(d, rng);
    const double phi = 6.283185307179586476925287 * rng.uniform();
    return cplx(r * std::sqrt(d.sigma_r2) * std::cos(phi),
                r * std::sqrt(d.sigma_i2) * std::sin(phi));
}

inline void require_matching_moments(const ChannelModel& mod, const EntryDistribution& dist) {
    const EntryMoments m = moments_of(dist);
    const double kappa_scale = std::max(1.0, std::abs(m.kappa));
    if (std::abs(m.vartheta - mod.moments.vartheta) > 1e-12 ||
        std::abs(m.kappa - mod.moments.kappa) > 1e-12 * kappa_scale)
        throw config_error("entry-law moments do not match the model moments");
}

// H = A + (1/sqrt(M)) D^{1/2} X Dt^{1/2}, X i.i.d. from the entry law. Column
// -major draw order is part of the reproducibility contract.
inline Eigen::MatrixXcd sample_channel(const ChannelModel& mod, const EntryDistribution& dist,
                                       PhiloxRng& rng) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(mod.M));
    const Eigen::VectorXd ds = mod.D.cwiseSqrt();
    const Eigen::VectorXd dts = mod.Dt.cwiseSqrt();
    Eigen::MatrixXcd h = mod.A;
    for (int j = 0; j < mod.M; ++j) {
        const double col = scale * dts(j);
        for (int i = 0; i < mod.N; ++i) h(i, j) += col * ds(i) * sample_entry(dist, rng);
    }
    return h;
}

struct MonteCarloSummary {
    long long trials = 0;
    std::uint64_t seed = 0;
    double sigma2 = 0.0;
    double mean_C = 0.0;
    double var_C = 0.0;
    double se_mean = 0.0;
    double se_var = 0.0;
    std::vector<double> ecdf; // sorted ascending, deterministically thinned

    // Analytic companions and the empirical gaps against them.
    double V = 0.0;
    double B_C = 0.0;
    double Theta_G = 0.0;
    double Theta = 0.0;
    double emp_bias_mean = 0.0;            // mean_C - V
    double emp_bias_var = 0.0;             // var_C - Theta_G
    cplx emp_resolvent_bias{0.0, 0.0};     // filled by the resolvent experiment
};

namespace detail {

constexpr long long mc_block_size = 1024;
constexpr long long ecdf_cap_default = 200000;

// Deterministic thinning: trial t is kept iff the integer ramp
// floor((t+1) cap / n) advances at t. Keeps exactly cap samples, chosen by
// index only, so parallel scheduling cannot change the retained set.
inline bool keep_sample(long long t, long long trials, long long cap) {
    if (trials <= cap) return true;
    return (t + 1) * cap / trials > t * cap / trials;
}

} // namespace detail

// Empirical MI statistics with per-trial counter-seeded substreams. Blocks
// accumulate independently (optionally across threads) and merge in block
// order, making the summary a pure function of (model, dist, sigma2, trials,
// seed).
inline MonteCarloSummary run_mi_experiment(const ChannelModel& mod, const EntryDistribution& dist,
                                           double sigma2, long long trials, std::uint64_t seed,
                                           const SolverOptions& opts = {}, unsigned threads = 0,
                                           long long ecdf_cap = detail::ecdf_cap_default) {
    if (trials < 2) throw config_error("need at least two trials");
    require_matching_moments(mod, dist);
    const MIStatistics stats = mi_clt(mod, sigma2, opts);

    const std::size_t n_blocks =
        static_cast<std::size_t>((trials + detail::mc_block_size - 1) / detail::mc_block_size);
    std::vector<StreamingMoments> acc(n_blocks);
    std::vector<std::vector<double>> kept(n_blocks);

    parallel_blocks(n_blocks, thread_budget(threads), [&](std::size_t b) {
        const long long lo = static_cast<long long>(b) * detail::mc_block_size;
        const long long hi = std::min(trials, lo + detail::mc_block_size);
        for (long long t = lo; t < hi; ++t) {
            PhiloxRng rng(seed, static_cast<std::uint64_t>(t));
            double c = 0.0;
            try {
                c = mutual_information(sample_channel(mod, dist, rng), sigma2);
            } catch (const numeric_error& err) {
                throw numeric_error(std::string(err.what()) + " [trial " + std::to_string(t) +
                                    "]");
            }
            acc[b].add(c);
            if (detail::keep_sample(t, trials, ecdf_cap)) kept[b].push_back(c);
        }
    });

    StreamingMoments total;
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(std::min(trials, ecdf_cap)));
    for (std::size_t b = 0; b < n_blocks; ++b) {
        total.merge(acc[b]);
        samples.insert(samples.end(), kept[b].begin(), kept[b].end());
    }
    std::sort(samples.begin(), samples.end());

    MonteCarloSummary out;
    out.trials = trials;
    out.seed = seed;
    out.sigma2 = sigma2;
    out.mean_C = total.mean;
    out.var_C = total.variance();
    out.se_mean = total.std_error_of_mean();
    out.se_var = total.std_error_of_variance();
    out.ecdf = std::move(samples);
    out.V = stats.V;
    out.B_C = stats.B_C;
    out.Theta_G = stats.Theta_G;
    out.Theta = stats.Theta;
    out.emp_bias_mean = out.mean_C - stats.V;
    out.emp_bias_var = out.var_C - stats.Theta_G;
    return out;
}

struct ResolventBiasEstimate {
    cplx z{0.0, 0.0};
    long long trials = 0;
    std::uint64_t seed = 0;
    cplx mean_trace{0.0, 0.0}; // empirical E Tr Q(z)
    cplx trace_de{0.0, 0.0};   // Tr T(z)
    cplx bias{0.0, 0.0};       // mean_trace - trace_de
    double se_real = 0.0;
    double se_imag = 0.0;
};

// Empirical E Tr(H H^H - zI)^{-1} minus the deterministic equivalent trace.
inline ResolventBiasEstimate run_resolvent_experiment(const ChannelModel& mod,
                                                      const EntryDistribution& dist, cplx z,
                                                      long long trials, std::uint64_t seed,
                                                      const SolverOptions& opts = {},
                                                      unsigned threads = 0) {
    if (trials < 2) throw config_error("need at least two trials");
    require_matching_moments(mod, dist);
    SpectralPoint point(z);
    const FixedPointSolution sol = solve(mod, z, opts);
    const bool real_z = z.imag() == 0.0;
    const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(mod.N, mod.N);

    const std::size_t n_blocks =
        static_cast<std::size_t>((trials + detail::mc_block_size - 1) / detail::mc_block_size);
    std::vector<StreamingMoments> acc_re(n_blocks);
    std::vector<StreamingMoments> acc_im(n_blocks);

    parallel_blocks(n_blocks, thread_budget(threads), [&](std::size_t b) {
        const long long lo = static_cast<long long>(b) * detail::mc_block_size;
        const long long hi = std::min(trials, lo + detail::mc_block_size);
        for (long long t = lo; t < hi; ++t) {
            PhiloxRng rng(seed, static_cast<std::uint64_t>(t));
            const Eigen::MatrixXcd h = sample_channel(mod, dist, rng);
            Eigen::MatrixXcd k = h * h.adjoint();
            k.diagonal().array() -= z;
            cplx tr;
            if (real_z)
                tr = Eigen::LLT<Eigen::MatrixXcd>(k).solve(eye).trace();
            else
                tr = Eigen::PartialPivLU<Eigen::MatrixXcd>(k).solve(eye).trace();
            acc_re[b].add(tr.real());
            acc_im[b].add(tr.imag());
        }
    });

    StreamingMoments re;
    StreamingMoments im;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        re.merge(acc_re[b]);
        im.merge(acc_im[b]);
    }

    ResolventBiasEstimate out;
    out.z = z;
    out.trials = trials;
    out.seed = seed;
    out.mean_trace = cplx(re.mean, im.mean);
    out.trace_de = sol.T.trace();
    out.bias = out.mean_trace - out.trace_de;
    out.se_real = re.std_error_of_mean();
    out.se_imag = im.std_error_of_mean();
    return out;
}

struct QuadFormCov {
    cplx analytic{0.0, 0.0};
    cplx empirical{0.0, 0.0};
    double se_real = 0.0;
    double se_imag = 0.0;
    long long trials = 0;
};

// Covariance of z^H Gamma z and z^H Lambda z for z = a + N^{-1/2} D^{1/2} x:
// the nine-term expansion against a sampled estimate. The empirical side uses
// fixed-index batches, so its value and standard errors are deterministic.
inline QuadFormCov quadratic_form_cov_oracle(const Eigen::VectorXcd& a, const Eigen::VectorXd& d,
                                             const Eigen::MatrixXcd& gamma,
                                             const Eigen::MatrixXcd& lambda,
                                             const EntryDistribution& dist, long long trials,
                                             std::uint64_t seed, unsigned threads = 0) {
    const Eigen::Index n = a.size();
    if (d.size() != n || gamma.rows() != n || gamma.cols() != n || lambda.rows() != n ||
        lambda.cols() != n)
        throw config_error("quadratic-form oracle arguments must share one dimension");
    if ((d.array() < 0.0).any()) throw config_error("profile D must be nonnegative");
    if (trials < 200) throw config_error("need at least 200 trials for batched errors");

    const EntryMoments mom = moments_of(dist);
    const double nn = static_cast<double>(n);

    // Analytic expansion: variance profile, LoS cross terms, pseudo-variance
    // terms, crossed third-order terms and the fourth-cumulant diagonal term.
    const Eigen::MatrixXcd gd = gamma * d.cast<cplx>().asDiagonal();
    const Eigen::MatrixXcd ld = lambda * d.cast<cplx>().asDiagonal();
    const Eigen::VectorXcd d32 = d.array().pow(1.5).cast<cplx>();
    cplx analytic = (gd * ld).trace() / (nn * nn);
    analytic += a.dot(gd * (lambda * a)) / nn;
    analytic += a.dot(ld * (gamma * a)) / nn;
    analytic += std::norm(mom.vartheta) * (gd * lambda.transpose() * d.cast<cplx>().asDiagonal()).trace() /
                (nn * nn);
    analytic += mom.vartheta * a.dot(ld * (gamma.transpose() * a.conjugate())) / nn;
    analytic += std::conj(mom.vartheta) *
                (a.transpose() *
                 (lambda.transpose() * (d.cast<cplx>().asDiagonal() * (gamma * a))))(0) /
                nn;
    analytic += mom.zeta * a.dot(lambda * d32.cwiseProduct(gamma.diagonal())) /
                std::pow(nn, 1.5);
    analytic += std::conj(mom.zeta) * a.dot(gamma * d32.cwiseProduct(lambda.diagonal())) /
                std::pow(nn, 1.5);
    analytic += mom.kappa *
                (d.array().square().cast<cplx>() * lambda.diagonal().array() *
                 gamma.diagonal().array())
                    .sum() /
                (nn * nn);

    // Empirical covariance by fixed-index batches.
    constexpr std::size_t n_batches = 50;
    std::vector<cplx> batch_cov(n_batches);
    const Eigen::VectorXd dsq = d.cwiseSqrt();
    const double root_n = std::sqrt(nn);

    parallel_blocks(n_batches, thread_budget(threads), [&](std::size_t b) {
        const long long lo = static_cast<long long>(trials * b / n_batches);
        const long long hi = static_cast<long long>(trials * (b + 1) / n_batches);
        cplx su(0.0, 0.0), sv(0.0, 0.0), suv(0.0, 0.0);
        Eigen::VectorXcd zv(n);
        for (long long t = lo; t < hi; ++t) {
            PhiloxRng rng(seed, static_cast<std::uint64_t>(t));
            for (Eigen::Index i = 0; i < n; ++i)
                zv(i) = a(i) + dsq(i) * sample_entry(dist, rng) / root_n;
            const cplx u = zv.dot(gamma * zv);
            const cplx v = zv.dot(lambda * zv);
            su += u;
            sv += v;
            suv += u * v;
        }
        const double nb = static_cast<double>(hi - lo);
        batch_cov[b] = (suv - su * sv / nb) / (nb - 1.0);
    });

    cplx est(0.0, 0.0);
    for (const cplx& c : batch_cov) est += c;
    est /= static_cast<double>(n_batches);
    double var_re = 0.0;
    double var_im = 0.0;
    for (const cplx& c : batch_cov) {
        var_re += (c.real() - est.real()) * (c.real() - est.real());
        var_im += (c.imag() - est.imag()) * (c.imag() - est.imag());
    }
    var_re /= static_cast<double>(n_batches - 1);
    var_im /= static_cast<double>(n_batches - 1);

    QuadFormCov out;
    out.analytic = analytic;
    out.empirical = est;
    out.se_real = std::sqrt(var_re / static_cast<double>(n_batches));
    out.se_imag = std::sqrt(var_im / static_cast<double>(n_batches));
    out.trials = trials;
    return out;
}

// Kolmogorov-Smirnov distance between a sorted sample and N(mu, sd^2).
inline double ks_distance_normal(const std::vector<double>& sorted, double mu, double sd) {
    if (sorted.empty() || !(sd > 0.0)) throw config_error("KS distance needs data and sd > 0");
    const double n = static_cast<double>(sorted.size());
    double dist = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double f = gaussian_cdf((sorted[i] - mu) / sd);
        dist = std::max(dist, std::max(f - static_cast<double>(i) / n,
                                       static_cast<double>(i + 1) / n - f));
    }
    return dist;
}

} // namespace rmtbias
