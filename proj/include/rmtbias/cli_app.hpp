// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rmtbias/bias.hpp"
#include "rmtbias/channel_model.hpp"
#include "rmtbias/contour.hpp"
#include "rmtbias/csv.hpp"
#include "rmtbias/errors.hpp"
#include "rmtbias/fixed_point.hpp"
#include "rmtbias/mi_statistics.hpp"
#include "rmtbias/monte_carlo.hpp"
#include "rmtbias/numeric.hpp"
#include "rmtbias/quantities.hpp"
#include "rmtbias/scenario.hpp"
#include "rmtbias/special.hpp"

namespace rmtbias {
namespace cli_detail {

// Tabular result that can render as CSV (default) or as a JSON array of row
// objects. Cells are stored as JSON values so numbers stay numbers in JSON
// output while CSV goes through the shortest round-trip formatter.
struct Report {
    std::vector<std::string> header;
    std::vector<std::vector<ordered_json>> rows;

    void add(std::vector<ordered_json> cells) { rows.push_back(std::move(cells)); }

    static std::string cell_text(const ordered_json& c) {
        if (c.is_null()) return "";
        if (c.is_string()) return c.get<std::string>();
        if (c.is_number_float()) return format_double(c.get<double>());
        return c.dump();
    }

    std::string csv_text() const {
        std::ostringstream ss;
        CsvWriter w(ss, header);
        for (const auto& r : rows) {
            std::vector<std::string> cells;
            cells.reserve(r.size());
            for (const auto& c : r) cells.push_back(cell_text(c));
            w.row(cells);
        }
        return ss.str();
    }

    std::string json_text() const {
        ordered_json arr = ordered_json::array();
        for (const auto& r : rows) {
            ordered_json obj;
            for (std::size_t i = 0; i < header.size() && i < r.size(); ++i)
                obj[header[i]] = r[i];
            arr.push_back(obj);
        }
        return arr.dump(2) + "\n";
    }
};

// Every flag the command surface knows about; a single instance is shared
// because exactly one subcommand runs per invocation.
struct CliState {
    std::string config_path;
    std::string out_path;
    std::string format;
    bool bits = false;

    std::string z_str;
    double sigma2 = 0.0;
    double tol = 0.0;
    int max_iter = 0;
    double damping = 0.0;

    std::string method = "both";
    double fd_step = 0.0;

    std::string f_spec = "mi";
    int nodes = 256;
    double margin = 0.0;
    double height = 0.0;
    std::string shape = "ellipse";
    bool full = false;

    long long trials = 0;
    std::uint64_t seed = 0;
    std::string dump_samples;

    double rate = 0.0;
    std::string figure;
};

inline void apply_overrides(ExperimentConfig& cfg, const CliState& st, const CLI::App* sub) {
    // Not every subcommand registers every flag; probe without throwing.
    const auto given = [sub](const char* name) {
        const CLI::Option* opt = sub->get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
    };
    if (given("--tol")) cfg.solver.tol = st.tol;
    if (given("--max-iter")) cfg.solver.max_iter = st.max_iter;
    if (given("--damping")) cfg.solver.damping = st.damping;
    if (given("--sigma2")) cfg.sigma2 = st.sigma2;
    if (given("--z")) cfg.z = parse_complex(st.z_str);
    if (given("--rate")) cfg.rate = st.rate;
    if (given("--trials")) cfg.mc.trials = st.trials;
    if (given("--seed")) cfg.mc.seed = st.seed;
    if (given("--out")) cfg.output = OutputConfig{st.out_path, cfg.output
                                                                   ? cfg.output->format
                                                                   : "csv"};
    if (given("--format")) {
        if (!cfg.output) cfg.output = OutputConfig{"", st.format};
        cfg.output->format = st.format;
    }
    if (!(cfg.solver.tol > 0.0) || cfg.solver.max_iter < 1 || !(cfg.solver.damping > 0.0) ||
        cfg.solver.damping > 1.0)
        throw config_error("solver options out of range");
}

inline double require_sigma2(const ExperimentConfig& cfg) {
    if (!cfg.sigma2) throw config_error("a noise level is needed; set sigma2 or pass --sigma2");
    if (!(*cfg.sigma2 > 0.0) || !std::isfinite(*cfg.sigma2))
        throw config_error("sigma2 must be positive and finite");
    return *cfg.sigma2;
}

inline cplx resolve_z(const ExperimentConfig& cfg) {
    if (cfg.z) return *cfg.z;
    if (cfg.sigma2) return cplx(-require_sigma2(cfg), 0.0);
    throw config_error("a spectral point is needed; pass --z or set sigma2");
}

inline int emit(const Report& rep, const ExperimentConfig& cfg, std::ostream& out) {
    const std::string fmt = cfg.output ? cfg.output->format : "csv";
    std::string text;
    if (fmt == "csv")
        text = rep.csv_text();
    else if (fmt == "json")
        text = rep.json_text();
    else
        throw config_error("unknown output format '" + fmt + "'");
    if (cfg.output && !cfg.output->path.empty()) {
        std::ofstream f(cfg.output->path);
        if (!f) throw config_error("cannot write output file '" + cfg.output->path + "'");
        f << text;
    } else {
        out << text;
    }
    return 0;
}

inline const double kLn2 = std::log(2.0);

inline ordered_json num(double v) { return ordered_json(v); }

// --------------------------------------------------------------------------
// Subcommand bodies
// --------------------------------------------------------------------------

inline int cmd_solve(const ExperimentConfig& cfg, std::ostream& out) {
    const BuiltScenario built = build_model(cfg.scenario);
    const FixedPointSolution sol = solve(built.model, resolve_z(cfg), cfg.solver);
    Report rep{{"quantity", "value"}, {}};
    rep.add({"z", format_complex(sol.z)});
    rep.add({"delta", format_complex(sol.delta)});
    rep.add({"delta_tilde", format_complex(sol.delta_tilde)});
    rep.add({"trace_T", format_complex(sol.T.trace())});
    rep.add({"trace_T_tilde", format_complex(sol.T_tilde.trace())});
    rep.add({"iterations", sol.iterations});
    rep.add({"residual", num(sol.residual)});
    const IdentityReport ids = verify_identities(built.model, sol);
    rep.add({"identity_woodbury", num(ids.woodbury)});
    rep.add({"identity_intertwining", num(ids.intertwining)});
    rep.add({"identity_trace_swap", num(ids.trace_swap)});
    return emit(rep, cfg, out);
}

inline int cmd_quantities(const ExperimentConfig& cfg, std::ostream& out) {
    const BuiltScenario built = build_model(cfg.scenario);
    const FixedPointSolution sol = solve(built.model, resolve_z(cfg), cfg.solver);
    const DeterministicQuantities q = table1(built.model, sol);
    Report rep{{"quantity", "value"}, {}};
    auto kv = [&](const char* name, cplx v) { rep.add({name, format_complex(v)}); };
    kv("z", q.z);
    kv("delta", sol.delta);
    kv("delta_tilde", sol.delta_tilde);
    kv("gamma", q.gamma);
    kv("gamma_T", q.gamma_T);
    kv("gamma_tilde", q.gamma_tilde);
    kv("gamma_tilde_T", q.gamma_tilde_T);
    kv("eta", q.eta);
    kv("eta_tilde", q.eta_tilde);
    kv("F", q.F);
    kv("F_T", q.F_T);
    kv("F_T_under", q.F_T_under);
    kv("F_tilde_T", q.F_tilde_T);
    kv("F_tilde_T_under", q.F_tilde_T_under);
    kv("Delta", q.Delta);
    kv("Delta_T", q.Delta_T);
    kv("delta_prime", q.dprime);
    kv("delta_tilde_prime", q.dtprime);
    kv("tr_D2S2", q.tr_D2S2);
    kv("tr_Dt2St2", q.tr_Dt2St2);
    rep.add({"iterations", sol.iterations});
    rep.add({"residual", num(sol.residual)});
    return emit(rep, cfg, out);
}

inline int cmd_bias(const ExperimentConfig& cfg, const CliState& st, std::ostream& out) {
    const BuiltScenario built = build_model(cfg.scenario);
    const cplx z = resolve_z(cfg);
    Report rep{{"quantity", "value"}, {}};
    rep.add({"z", format_complex(z)});

    std::optional<BiasValue> t1, t2;
    if (st.method == "t1" || st.method == "both")
        t1 = bias_theorem1(built.model, solve(built.model, z, cfg.solver));
    if (st.method == "t2" || st.method == "both")
        t2 = bias_theorem2(built.model, z, st.fd_step, cfg.solver);

    if (t1) {
        rep.add({"t1_theta", format_complex(t1->theta_part)});
        rep.add({"t1_kappa", format_complex(t1->kappa_part)});
        rep.add({"t1_total", format_complex(t1->total())});
    }
    if (t2) {
        rep.add({"t2_theta", format_complex(t2->theta_part)});
        rep.add({"t2_kappa", format_complex(t2->kappa_part)});
        rep.add({"t2_total", format_complex(t2->total())});
    }
    if (t1 && t2) {
        const double gap = std::abs(t1->total() - t2->total());
        const double scale = std::max({std::abs(t1->total()), std::abs(t2->total()), 1e-12});
        rep.add({"gap_abs", num(gap)});
        rep.add({"gap_rel", num(gap / scale)});
    }
    return emit(rep, cfg, out);
}

inline int cmd_lss(const ExperimentConfig& cfg, const CliState& st, const CLI::App* sub,
                   std::ostream& out) {
    const BuiltScenario built = build_model(cfg.scenario);

    std::function<cplx(cplx)> f;
    bool is_mi = false;
    std::optional<double> mi_sigma2;
    if (st.f_spec == "mi") {
        const double s2 = require_sigma2(cfg);
        f = mi_function(s2);
        is_mi = true;
        mi_sigma2 = s2;
    } else if (st.f_spec.rfind("poly:", 0) == 0) {
        std::vector<double> coeffs;
        std::stringstream ss(st.f_spec.substr(5));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                coeffs.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw config_error("bad polynomial coefficient '" + tok + "'");
            }
        }
        f = polynomial_function(coeffs);
    } else {
        throw config_error("unknown function '" + st.f_spec + "'; use mi or poly:c0,c1,...");
    }

    ContourShape shape = ContourShape::ellipse;
    if (st.shape == "rectangle")
        shape = ContourShape::rectangle;
    else if (st.shape != "ellipse")
        throw config_error("unknown contour shape '" + st.shape + "'");

    std::optional<double> margin;
    if (sub->count("--margin")) margin = st.margin;
    ContourSpec spec = default_contour(built.model, st.nodes, mi_sigma2, margin, shape);
    if (sub->count("--height")) spec.height = st.height;
    spec.half = !st.full;

    const LssResult res = lss_mean(built.model, f, spec, cfg.solver);
    const double k = (st.bits && is_mi) ? 1.0 / kLn2 : 1.0;

    Report rep{{"quantity", "value"}, {}};
    rep.add({"u_plus", num(spec.u_plus)});
    rep.add({"margin", num(spec.margin)});
    rep.add({"nodes", res.nodes_evaluated});
    rep.add({"V_f", num(res.V_f.real() * k)});
    rep.add({"B_f", num(res.B_f.real() * k)});
    rep.add({"mean_f", num((res.V_f.real() + res.B_f.real()) * k)});
    return emit(rep, cfg, out);
}

inline int cmd_clt(const ExperimentConfig& cfg, const CliState& st, std::ostream& out) {
    const BuiltScenario built = build_model(cfg.scenario);
    const MIStatistics s = mi_clt(built.model, require_sigma2(cfg), cfg.solver);
    const double k = st.bits ? 1.0 / kLn2 : 1.0;
    const double k2 = k * k;
    Report rep{{"quantity", "value"}, {}};
    rep.add({"sigma2", num(s.sigma2)});
    rep.add({"V", num(s.V * k)});
    rep.add({"B_C", num(s.B_C * k)});
    rep.add({"B_C_theta", num(s.B_C_theta * k)});
    rep.add({"B_C_kappa", num(s.B_C_kappa * k)});
    rep.add({"Theta_G", num(s.Theta_G * k2)});
    rep.add({"Theta_B", num(s.Theta_B * k2)});
    rep.add({"Theta", num(s.Theta * k2)});
    rep.add({"mean", num(s.mean * k)});
    rep.add({"std", num(std::sqrt(s.Theta) * k)});
    return emit(rep, cfg, out);
}

inline int cmd_outage(const ExperimentConfig& cfg, const CliState& st, std::ostream& out) {
    const BuiltScenario built = build_model(cfg.scenario);
    const MIStatistics s = mi_clt(built.model, require_sigma2(cfg), cfg.solver);

    std::vector<double> rates;
    if (cfg.sweep && cfg.sweep->variable == "R")
        rates = cfg.sweep->values;
    else if (cfg.rate)
        rates = {*cfg.rate};
    else
        throw config_error("no rates given; pass --rate or sweep the variable R");

    Report rep{{"rate", "p_out"}, {}};
    for (double r : rates) {
        const double r_nats = st.bits ? r * kLn2 : r;
        rep.add({num(r), num(outage_probability(s, r_nats))});
    }
    return emit(rep, cfg, out);
}

inline int cmd_mc(const ExperimentConfig& cfg, const CliState& st, std::ostream& out) {
    const BuiltScenario built = build_model(cfg.scenario);
    if (cfg.mc.trials < 2) throw config_error("need at least two trials");
    if (!cfg.sigma2 && !cfg.z)
        throw config_error("nothing to simulate; set sigma2 for MI or z for the resolvent");
    if (!st.dump_samples.empty() && !cfg.sigma2)
        throw config_error("--dump-samples needs an MI experiment; set sigma2");

    Report rep{{"quantity", "value", "stderr"}, {}};
    rep.add({"trials", cfg.mc.trials, nullptr});
    rep.add({"seed", cfg.mc.seed, nullptr});

    if (cfg.sigma2) {
        const double s2 = require_sigma2(cfg);
        const MonteCarloSummary s =
            run_mi_experiment(built.model, built.dist, s2, cfg.mc.trials, cfg.mc.seed, cfg.solver);
        const double k = st.bits ? 1.0 / kLn2 : 1.0;
        const double k2 = k * k;
        rep.add({"sigma2", num(s2), nullptr});
        rep.add({"mean_C", num(s.mean_C * k), num(s.se_mean * k)});
        rep.add({"var_C", num(s.var_C * k2), num(s.se_var * k2)});
        rep.add({"V", num(s.V * k), nullptr});
        rep.add({"B_C", num(s.B_C * k), nullptr});
        rep.add({"Theta_G", num(s.Theta_G * k2), nullptr});
        rep.add({"Theta", num(s.Theta * k2), nullptr});
        rep.add({"pred_mean", num((s.V + s.B_C) * k), nullptr});
        rep.add({"emp_bias_mean", num(s.emp_bias_mean * k), num(s.se_mean * k)});
        rep.add({"emp_bias_var", num(s.emp_bias_var * k2), num(s.se_var * k2)});
        if (!st.dump_samples.empty()) {
            std::ofstream f(st.dump_samples);
            if (!f) throw config_error("cannot write samples file '" + st.dump_samples + "'");
            for (double c : s.ecdf) f << format_double(c * k) << '\n';
        }
    }

    if (cfg.z) {
        const cplx z = *cfg.z;
        const ResolventBiasEstimate r = run_resolvent_experiment(
            built.model, built.dist, z, cfg.mc.trials, cfg.mc.seed, cfg.solver);
        const BiasValue pred = bias_theorem1(built.model, solve(built.model, z, cfg.solver));
        rep.add({"z", format_complex(z), nullptr});
        rep.add({"resolvent_mean_re", num(r.mean_trace.real()), num(r.se_real)});
        rep.add({"resolvent_mean_im", num(r.mean_trace.imag()), num(r.se_imag)});
        rep.add({"resolvent_de_re", num(r.trace_de.real()), nullptr});
        rep.add({"resolvent_de_im", num(r.trace_de.imag()), nullptr});
        rep.add({"emp_resolvent_bias_re", num(r.bias.real()), num(r.se_real)});
        rep.add({"emp_resolvent_bias_im", num(r.bias.imag()), num(r.se_imag)});
        rep.add({"pred_resolvent_bias_re", num(pred.total().real()), nullptr});
        rep.add({"pred_resolvent_bias_im", num(pred.total().imag()), nullptr});
    }
    return emit(rep, cfg, out);
}

inline int cmd_validate(const ExperimentConfig& cfg, std::ostream& out) {
    Report rep{{"level", "check", "detail"}, {}};
    for (const Diagnostic& d : validate_config(cfg)) rep.add({d.level, d.check, d.detail});
    emit(rep, cfg, out);
    return 0; // failing checks still report cleanly
}

// --------------------------------------------------------------------------
// Figure reproduction. Every grid point carries its own status cell so one
// diverging point cannot hide the others; the exit code distinguishes full,
// partial, and failed sweeps.
// --------------------------------------------------------------------------

struct FigureTally {
    int ok = 0;
    int failed = 0;
    int code() const {
        if (failed == 0) return 0;
        return ok == 0 ? 3 : 4;
    }
};

inline std::string flatten_error(const std::exception& e) {
    std::string s = e.what();
    for (char& c : s)
        if (c == ',' || c == '\n') c = ';';
    return s;
}

inline int cmd_reproduce(const ExperimentConfig& cfg, const CliState& st, std::ostream& out) {
    const double k = st.bits ? 1.0 / kLn2 : 1.0;
    const double k2 = k * k;
    FigureTally tally;
    Report rep;

    if (st.figure == "bias_vs_N") {
        const double s2 = require_sigma2(cfg);
        std::vector<double> ns = {8, 16, 32, 64};
        if (cfg.sweep && cfg.sweep->variable == "N") ns = cfg.sweep->values;
        rep.header = {"N",        "analytic_bias", "emp_bias_mean",      "se_mean",
                      "emp_bias_var", "se_var",    "analytic_resolvent", "emp_resolvent",
                      "se_resolvent", "status"};
        for (double nv : ns) {
            try {
                const ScenarioConfig sc = scaled_to(cfg.scenario, static_cast<int>(nv));
                const BuiltScenario b = build_model(sc);
                const MonteCarloSummary s = run_mi_experiment(b.model, b.dist, s2, cfg.mc.trials,
                                                              cfg.mc.seed, cfg.solver);
                const cplx z(-s2, 0.0);
                const ResolventBiasEstimate r = run_resolvent_experiment(
                    b.model, b.dist, z, cfg.mc.trials, cfg.mc.seed, cfg.solver);
                const BiasValue pred = bias_theorem1(b.model, solve(b.model, z, cfg.solver));
                rep.add({num(nv), num(s.B_C * k), num(s.emp_bias_mean * k), num(s.se_mean * k),
                         num(s.emp_bias_var * k * k), num(s.se_var * k * k),
                         num(pred.total().real()), num(r.bias.real()), num(r.se_real), "ok"});
                ++tally.ok;
            } catch (const std::exception& e) {
                rep.add({num(nv), nullptr, nullptr, nullptr, nullptr, nullptr, nullptr, nullptr,
                         nullptr, flatten_error(e)});
                ++tally.failed;
            }
        }
    } else if (st.figure == "clt_pdf") {
        rep.header = {"u", "density_mc", "density_normal", "status"};
        try {
            const double s2 = require_sigma2(cfg);
            const BuiltScenario b = build_model(cfg.scenario);
            const MonteCarloSummary s =
                run_mi_experiment(b.model, b.dist, s2, cfg.mc.trials, cfg.mc.seed, cfg.solver);
            const double mu = s.V + s.B_C;
            const double sd = std::sqrt(s.Theta);
            constexpr int bins = 40;
            const double lo = -4.0, hi = 4.0;
            const double width = (hi - lo) / bins;
            std::vector<long long> count(bins, 0);
            long long inside = 0;
            for (double c : s.ecdf) {
                const double u = (c - mu) / sd;
                if (u < lo || u >= hi) continue;
                ++count[static_cast<int>((u - lo) / width)];
                ++inside;
            }
            const double n_all = static_cast<double>(s.ecdf.size());
            (void)inside; // density uses all samples so the tails keep mass
            for (int i = 0; i < bins; ++i) {
                const double center = lo + (i + 0.5) * width;
                const double dens = static_cast<double>(count[i]) / (n_all * width);
                const double normal =
                    std::exp(-0.5 * center * center) / std::sqrt(2.0 * 3.14159265358979323846);
                rep.add({num(center), num(dens), num(normal), "ok"});
                ++tally.ok;
            }
        } catch (const std::exception& e) {
            rep.add({nullptr, nullptr, nullptr, flatten_error(e)});
            ++tally.failed;
        }
    } else if (st.figure == "cdf_comparison") {
        rep.header = {"C", "ecdf", "cdf_modified", "cdf_classic", "status"};
        try {
            const double s2 = require_sigma2(cfg);
            const BuiltScenario b = build_model(cfg.scenario);
            const MonteCarloSummary s =
                run_mi_experiment(b.model, b.dist, s2, cfg.mc.trials, cfg.mc.seed, cfg.solver);
            const double n = static_cast<double>(s.ecdf.size());
            const std::size_t pts = std::min<std::size_t>(s.ecdf.size(), 201);
            for (std::size_t i = 0; i < pts; ++i) {
                const std::size_t idx = pts == 1 ? 0 : i * (s.ecdf.size() - 1) / (pts - 1);
                const double c = s.ecdf[idx];
                const double modified = gaussian_cdf((c - (s.V + s.B_C)) / std::sqrt(s.Theta));
                const double classic = gaussian_cdf((c - s.V) / std::sqrt(s.Theta_G));
                rep.add({num(c * k), num((static_cast<double>(idx) + 1.0) / n), num(modified),
                         num(classic), "ok"});
                ++tally.ok;
            }
        } catch (const std::exception& e) {
            rep.add({nullptr, nullptr, nullptr, nullptr, flatten_error(e)});
            ++tally.failed;
        }
    } else if (st.figure == "outage_vs_snr") {
        if (!cfg.rate) throw config_error("outage_vs_snr needs a rate; pass --rate");
        const double r_nats = st.bits ? *cfg.rate * kLn2 : *cfg.rate;
        std::vector<double> sigmas;
        if (cfg.sweep && cfg.sweep->variable == "sigma2") {
            sigmas = cfg.sweep->values;
        } else {
            for (double snr = -5.0; snr <= 25.0 + 1e-9; snr += 2.5)
                sigmas.push_back(std::pow(10.0, -snr / 10.0));
        }
        rep.header = {"snr_db", "sigma2", "p_out_analytic", "p_out_empirical", "status"};
        const BuiltScenario b = build_model(cfg.scenario);
        for (double s2 : sigmas) {
            try {
                const MIStatistics s = mi_clt(b.model, s2, cfg.solver);
                const MonteCarloSummary m = run_mi_experiment(b.model, b.dist, s2, cfg.mc.trials,
                                                              cfg.mc.seed, cfg.solver);
                const auto below = std::upper_bound(m.ecdf.begin(), m.ecdf.end(), r_nats) -
                                   m.ecdf.begin();
                const double emp = static_cast<double>(below) / static_cast<double>(m.ecdf.size());
                rep.add({num(10.0 * std::log10(1.0 / s2)), num(s2),
                         num(outage_probability(s, r_nats)), num(emp), "ok"});
                ++tally.ok;
            } catch (const std::exception& e) {
                rep.add({num(10.0 * std::log10(1.0 / s2)), num(s2), nullptr, nullptr,
                         flatten_error(e)});
                ++tally.failed;
            }
        }
    } else if (st.figure == "cv_vs_variance") {
        const double s2 = require_sigma2(cfg);
        std::vector<double> params;
        if (cfg.sweep && cfg.sweep->variable == "cv")
            params = cfg.sweep->values;
        else
            throw config_error("cv_vs_variance needs a sweep over the variable cv "
                               "(values are modulus-law parameters)");
        rep.header = {"param", "cv", "kappa", "Theta_G", "Theta", "status"};
        for (double p : params) {
            try {
                ScenarioConfig sc = cfg.scenario;
                sc.entry.params = p;
                const BuiltScenario b = build_model(sc);
                const MIStatistics s = mi_clt(b.model, s2, cfg.solver);
                rep.add({num(p), num(cv_of(b.dist)), num(b.model.moments.kappa),
                         num(s.Theta_G * k2), num(s.Theta * k2), "ok"});
                ++tally.ok;
            } catch (const std::exception& e) {
                rep.add({num(p), nullptr, nullptr, nullptr, nullptr, flatten_error(e)});
                ++tally.failed;
            }
        }
    } else {
        throw config_error("unknown figure '" + st.figure + "'");
    }

    emit(rep, cfg, out);
    return tally.code();
}

} // namespace cli_detail

// ---------------------------------------------------------------------------
// Entry point shared by the binary and the tests. Returns the process exit
// code: 0 success, 2 configuration or usage error, 3 numeric failure,
// 4 partial figure results.
// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    using namespace cli_detail;
    CliState st;

    CLI::App app{"Deterministic equivalents, bias corrections, and Gaussian approximations "
                 "for the mutual information of non-centered random matrix channels"};
    app.require_subcommand(1);

    auto add_common = [&st](CLI::App* sub) {
        sub->add_option("--config", st.config_path, "scenario file (JSON)")->required();
        sub->add_option("--out", st.out_path, "write results to this file instead of stdout");
        sub->add_option("--format", st.format, "output format")
            ->check(CLI::IsMember({"csv", "json"}));
        sub->add_option("--tol", st.tol, "fixed-point residual target");
        sub->add_option("--max-iter", st.max_iter, "fixed-point iteration cap");
        sub->add_option("--damping", st.damping, "fixed-point damping in (0, 1]");
        return sub;
    };

    CLI::App* c_solve = add_common(app.add_subcommand(
        "solve", "solve the canonical fixed point at one spectral point"));
    c_solve->add_option("--z", st.z_str, "spectral point, written a+bi");
    c_solve->add_option("--sigma2", st.sigma2, "noise level; sets z = -sigma2");

    CLI::App* c_quant = add_common(app.add_subcommand(
        "quantities", "dump the deterministic-equivalent ledger at one spectral point"));
    c_quant->add_option("--z", st.z_str, "spectral point, written a+bi");
    c_quant->add_option("--sigma2", st.sigma2, "noise level; sets z = -sigma2");

    CLI::App* c_bias = add_common(app.add_subcommand(
        "bias", "resolvent-trace bias via the explicit and the derivative form"));
    c_bias->add_option("--z", st.z_str, "spectral point, written a+bi");
    c_bias->add_option("--sigma2", st.sigma2, "noise level; sets z = -sigma2");
    c_bias->add_option("--method", st.method, "t1, t2, or both")
        ->check(CLI::IsMember({"t1", "t2", "both"}));
    c_bias->add_option("--fd-step", st.fd_step, "finite-difference step for the t2 form");

    CLI::App* c_lss = add_common(app.add_subcommand(
        "lss", "mean of a linear spectral statistic via contour integration"));
    c_lss->add_option("--f", st.f_spec, "function: mi or poly:c0,c1,...");
    c_lss->add_option("--sigma2", st.sigma2, "noise level for the mi function");
    c_lss->add_option("--nodes", st.nodes, "quadrature node count (even)");
    c_lss->add_option("--margin", st.margin, "contour clearance at the real-axis crossings");
    c_lss->add_option("--height", st.height, "contour vertical extent (default: automatic)");
    c_lss->add_option("--shape", st.shape, "contour shape")
        ->check(CLI::IsMember({"ellipse", "rectangle"}));
    c_lss->add_flag("--full", st.full, "traverse the full contour instead of reflecting");
    c_lss->add_flag("--bits", st.bits, "report mutual information in bits");

    CLI::App* c_clt = add_common(app.add_subcommand(
        "clt", "mean, bias, and variance of the mutual information"));
    c_clt->add_option("--sigma2", st.sigma2, "noise level");
    c_clt->add_flag("--bits", st.bits, "report in bits");

    CLI::App* c_outage = add_common(app.add_subcommand(
        "outage", "outage probability from the Gaussian approximation"));
    c_outage->add_option("--sigma2", st.sigma2, "noise level");
    c_outage->add_option("--rate", st.rate, "target rate");
    c_outage->add_flag("--bits", st.bits, "rates are in bits");

    CLI::App* c_mc = add_common(app.add_subcommand(
        "mc", "Monte-Carlo reference for the analytic predictions"));
    c_mc->add_option("--trials", st.trials, "number of channel draws");
    c_mc->add_option("--seed", st.seed, "base seed for the counter RNG");
    c_mc->add_option("--sigma2", st.sigma2, "noise level for the MI experiment");
    c_mc->add_option("--z", st.z_str, "spectral point for the resolvent experiment");
    c_mc->add_option("--dump-samples", st.dump_samples,
                     "write retained MI samples to this file, one per line");
    c_mc->add_flag("--bits", st.bits, "report MI quantities in bits");

    CLI::App* c_repro = add_common(app.add_subcommand(
        "reproduce", "recompute a reference figure as a CSV grid"));
    c_repro
        ->add_option("--figure", st.figure,
                     "bias_vs_N, clt_pdf, cdf_comparison, outage_vs_snr, or cv_vs_variance")
        ->required()
        ->check(CLI::IsMember(
            {"bias_vs_N", "clt_pdf", "cdf_comparison", "outage_vs_snr", "cv_vs_variance"}));
    c_repro->add_option("--trials", st.trials, "number of channel draws per point");
    c_repro->add_option("--seed", st.seed, "base seed for the counter RNG");
    c_repro->add_option("--sigma2", st.sigma2, "noise level");
    c_repro->add_option("--rate", st.rate, "target rate for outage figures");
    c_repro->add_flag("--bits", st.bits, "report in bits");

    CLI::App* c_validate = add_common(app.add_subcommand(
        "validate", "check a scenario file and report pass/warn/fail diagnostics"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? 0 : 2;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        ExperimentConfig cfg = load_config(st.config_path);
        apply_overrides(cfg, st, sub);

        if (sub == c_solve) return cmd_solve(cfg, out);
        if (sub == c_quant) return cmd_quantities(cfg, out);
        if (sub == c_bias) return cmd_bias(cfg, st, out);
        if (sub == c_lss) return cmd_lss(cfg, st, sub, out);
        if (sub == c_clt) return cmd_clt(cfg, st, out);
        if (sub == c_outage) return cmd_outage(cfg, st, out);
        if (sub == c_mc) return cmd_mc(cfg, st, out);
        if (sub == c_repro) return cmd_reproduce(cfg, st, out);
        if (sub == c_validate) return cmd_validate(cfg, out);
        err << "error: unhandled subcommand\n";
        return 2;
    } catch (const config_error& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        err << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("rmtbias");
    for (const std::string& s : args) argv.push_back(s.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace rmtbias
