// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmtbias/channel_model.hpp"
#include "rmtbias/errors.hpp"
#include "rmtbias/fixed_point.hpp"
#include "rmtbias/numeric.hpp"
#include "rmtbias/quantities.hpp"

namespace rmtbias {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Config records. These mirror the JSON scenario document one to one and
// round-trip through parse_config / serialize_config.
// ---------------------------------------------------------------------------

struct LosConfig {
    std::string kind = "zero"; // "ula" | "zero" | "file"
    std::optional<std::vector<double>> angles;
    std::optional<std::string> path;
};

struct ProfileConfig {
    std::string kind = "identity"; // "identity" | "values" | "path"
    std::vector<double> values;
    std::string path;
};

struct EntryConfig {
    std::string law = "weibull";
    double params = 2.0;
    double sigma_r2 = 1.0;
    double sigma_i2 = 1.0;
};

struct ScenarioConfig {
    int N = 0;
    int M = 0;
    LosConfig los;
    std::optional<double> rician_K;
    ProfileConfig D;
    ProfileConfig Dt;
    EntryConfig entry;
    std::string base_dir; // directory of the config file; not serialized
};

struct SweepConfig {
    std::string variable; // "N" | "sigma2" | "R" | "cv"
    std::vector<double> values;
};

struct McConfig {
    long long trials = 20000;
    std::uint64_t seed = 1;
};

struct OutputConfig {
    std::string path;
    std::string format = "csv"; // "csv" | "json"
};

struct ExperimentConfig {
    ScenarioConfig scenario;
    std::optional<SweepConfig> sweep;
    SolverOptions solver;
    McConfig mc;
    std::optional<double> sigma2;
    std::optional<cplx> z;
    std::optional<double> rate;
    std::optional<OutputConfig> output;
};

// ---------------------------------------------------------------------------
// Law names. "gaussian" is accepted as a convenience alias for the Rayleigh
// modulus (Weibull with k = 2), which reproduces complex normal entries when
// the circularity weights are equal.
// ---------------------------------------------------------------------------

inline ModulusLaw law_from_string(const std::string& name, double* param_override) {
    if (name == "weibull") return ModulusLaw::weibull;
    if (name == "lognormal") return ModulusLaw::lognormal;
    if (name == "nakagami") return ModulusLaw::nakagami;
    if (name == "gaussian") {
        if (param_override) *param_override = 2.0;
        return ModulusLaw::weibull;
    }
    throw config_error("unknown entry law '" + name + "'");
}

inline EntryDistribution entry_distribution(const EntryConfig& e) {
    double param = e.params;
    const ModulusLaw law = law_from_string(e.law, &param);
    return EntryDistribution(law, param, e.sigma_r2, e.sigma_i2);
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline const ordered_json& expect(const ordered_json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) throw config_error(std::string("config is missing key '") + key + "'");
    return *it;
}

inline std::string resolve_path(const std::string& base_dir, const std::string& path) {
    if (path.empty() || path.front() == '/' || base_dir.empty()) return path;
    return base_dir + "/" + path;
}

inline std::vector<double> load_real_vector(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open profile file '" + path + "'");
    std::vector<double> out;
    double x = 0.0;
    while (in >> x) out.push_back(x);
    if (out.empty()) throw config_error("profile file '" + path + "' holds no numbers");
    return out;
}

inline Eigen::MatrixXcd load_complex_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open matrix file '" + path + "'");
    std::vector<std::vector<cplx>> rows;
    std::string line;
    while (std::getline(in, line)) {
        for (char& ch : line)
            if (ch == ',') ch = ' ';
        std::istringstream ls(line);
        std::vector<cplx> row;
        std::string tok;
        while (ls >> tok) row.push_back(parse_complex(tok));
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw config_error("matrix file '" + path + "' holds no entries");
    const std::size_t cols = rows.front().size();
    Eigen::MatrixXcd a(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != cols)
            throw config_error("matrix file '" + path + "' has ragged rows");
        for (std::size_t j = 0; j < cols; ++j)
            a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return a;
}

inline ProfileConfig parse_profile(const ordered_json& j, const char* key) {
    ProfileConfig p;
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "identity") {
            p.kind = "identity";
        } else {
            p.kind = "path";
            p.path = s;
        }
    } else if (j.is_array()) {
        p.kind = "values";
        p.values = j.get<std::vector<double>>();
    } else {
        throw config_error(std::string("profile '") + key +
                           "' must be \"identity\", a number list, or a file path");
    }
    return p;
}

inline ordered_json profile_to_json(const ProfileConfig& p) {
    if (p.kind == "identity") return ordered_json("identity");
    if (p.kind == "path") return ordered_json(p.path);
    return ordered_json(p.values);
}

} // namespace detail

inline ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = "") {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& err) {
        throw config_error(std::string("config is not valid JSON: ") + err.what());
    }
    try {
        ExperimentConfig cfg;
        const ordered_json& sc = detail::expect(j, "scenario");
        cfg.scenario.N = detail::expect(sc, "N").get<int>();
        cfg.scenario.M = detail::expect(sc, "M").get<int>();
        cfg.scenario.base_dir = base_dir;

        if (sc.contains("los")) {
            const ordered_json& los = sc["los"];
            cfg.scenario.los.kind = detail::expect(los, "kind").get<std::string>();
            if (los.contains("angles"))
                cfg.scenario.los.angles = los["angles"].get<std::vector<double>>();
            if (los.contains("path")) cfg.scenario.los.path = los["path"].get<std::string>();
        }
        if (sc.contains("rician_K")) cfg.scenario.rician_K = sc["rician_K"].get<double>();
        cfg.scenario.D = detail::parse_profile(detail::expect(sc, "D"), "D");
        cfg.scenario.Dt = detail::parse_profile(detail::expect(sc, "Dt"), "Dt");

        const ordered_json& entry = detail::expect(sc, "entry");
        cfg.scenario.entry.law = detail::expect(entry, "law").get<std::string>();
        if (entry.contains("params")) cfg.scenario.entry.params = entry["params"].get<double>();
        if (entry.contains("sigma_r2"))
            cfg.scenario.entry.sigma_r2 = entry["sigma_r2"].get<double>();
        if (entry.contains("sigma_i2"))
            cfg.scenario.entry.sigma_i2 = entry["sigma_i2"].get<double>();

        if (j.contains("sweep")) {
            SweepConfig sw;
            sw.variable = detail::expect(j["sweep"], "variable").get<std::string>();
            sw.values = detail::expect(j["sweep"], "values").get<std::vector<double>>();
            cfg.sweep = sw;
        }
        if (j.contains("solver")) {
            const ordered_json& so = j["solver"];
            if (so.contains("tol")) cfg.solver.tol = so["tol"].get<double>();
            if (so.contains("max_iter")) cfg.solver.max_iter = so["max_iter"].get<int>();
            if (so.contains("damping")) cfg.solver.damping = so["damping"].get<double>();
        }
        if (j.contains("mc")) {
            const ordered_json& mc = j["mc"];
            if (mc.contains("trials")) cfg.mc.trials = mc["trials"].get<long long>();
            if (mc.contains("seed")) cfg.mc.seed = mc["seed"].get<std::uint64_t>();
        }
        if (j.contains("sigma2")) cfg.sigma2 = j["sigma2"].get<double>();
        if (j.contains("z")) {
            if (j["z"].is_string())
                cfg.z = parse_complex(j["z"].get<std::string>());
            else
                cfg.z = cplx(j["z"].get<double>(), 0.0);
        }
        if (j.contains("rate")) cfg.rate = j["rate"].get<double>();
        if (j.contains("output")) {
            OutputConfig out;
            out.path = detail::expect(j["output"], "path").get<std::string>();
            if (j["output"].contains("format"))
                out.format = j["output"]["format"].get<std::string>();
            cfg.output = out;
        }
        return cfg;
    } catch (const nlohmann::json::exception& err) {
        throw config_error(std::string("config field has the wrong type: ") + err.what());
    }
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::size_t cut = path.find_last_of('/');
    const std::string base = cut == std::string::npos ? std::string() : path.substr(0, cut);
    return parse_config(buf.str(), base);
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
    ordered_json sc;
    sc["N"] = cfg.scenario.N;
    sc["M"] = cfg.scenario.M;
    ordered_json los;
    los["kind"] = cfg.scenario.los.kind;
    if (cfg.scenario.los.angles) los["angles"] = *cfg.scenario.los.angles;
    if (cfg.scenario.los.path) los["path"] = *cfg.scenario.los.path;
    sc["los"] = los;
    if (cfg.scenario.rician_K) sc["rician_K"] = *cfg.scenario.rician_K;
    sc["D"] = detail::profile_to_json(cfg.scenario.D);
    sc["Dt"] = detail::profile_to_json(cfg.scenario.Dt);
    ordered_json entry;
    entry["law"] = cfg.scenario.entry.law;
    entry["params"] = cfg.scenario.entry.params;
    entry["sigma_r2"] = cfg.scenario.entry.sigma_r2;
    entry["sigma_i2"] = cfg.scenario.entry.sigma_i2;
    sc["entry"] = entry;

    ordered_json j;
    j["scenario"] = sc;
    if (cfg.sweep) {
        ordered_json sw;
        sw["variable"] = cfg.sweep->variable;
        sw["values"] = cfg.sweep->values;
        j["sweep"] = sw;
    }
    ordered_json so;
    so["tol"] = cfg.solver.tol;
    so["max_iter"] = cfg.solver.max_iter;
    so["damping"] = cfg.solver.damping;
    j["solver"] = so;
    ordered_json mc;
    mc["trials"] = cfg.mc.trials;
    mc["seed"] = cfg.mc.seed;
    j["mc"] = mc;
    if (cfg.sigma2) j["sigma2"] = *cfg.sigma2;
    if (cfg.z) j["z"] = format_complex(*cfg.z);
    if (cfg.rate) j["rate"] = *cfg.rate;
    if (cfg.output) {
        ordered_json out;
        out["path"] = cfg.output->path;
        out["format"] = cfg.output->format;
        j["output"] = out;
    }
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Building models from configs
// ---------------------------------------------------------------------------

struct BuiltScenario {
    ChannelModel model;
    EntryDistribution dist;
};

inline Eigen::VectorXd build_profile(const ProfileConfig& p, int size,
                                     const std::string& base_dir, const char* name) {
    if (p.kind == "identity") return Eigen::VectorXd::Ones(size);
    std::vector<double> vals;
    if (p.kind == "values")
        vals = p.values;
    else if (p.kind == "path")
        vals = detail::load_real_vector(detail::resolve_path(base_dir, p.path));
    else
        throw config_error(std::string("profile '") + name + "' has unknown kind");
    if (static_cast<int>(vals.size()) != size)
        throw config_error(std::string("profile '") + name + "' has " +
                           std::to_string(vals.size()) + " entries, expected " +
                           std::to_string(size));
    return Eigen::Map<const Eigen::VectorXd>(vals.data(), size);
}

inline Eigen::MatrixXcd build_los(const ScenarioConfig& sc) {
    if (sc.los.kind == "zero") return Eigen::MatrixXcd::Zero(sc.N, sc.M);
    if (sc.los.kind == "ula") {
        if (sc.los.angles) {
            if (static_cast<int>(sc.los.angles->size()) != sc.M)
                throw config_error("ULA angle list must have M entries");
            return ula_los(sc.N, sc.M, &*sc.los.angles);
        }
        return ula_los(sc.N, sc.M);
    }
    if (sc.los.kind == "file") {
        if (!sc.los.path) throw config_error("los kind 'file' needs a path");
        Eigen::MatrixXcd a =
            detail::load_complex_matrix(detail::resolve_path(sc.base_dir, *sc.los.path));
        if (a.rows() != sc.N || a.cols() != sc.M)
            throw config_error("LoS file shape does not match N x M");
        return a;
    }
    throw config_error("unknown los kind '" + sc.los.kind + "'");
}

inline BuiltScenario build_model(const ScenarioConfig& sc) {
    if (sc.N < 1 || sc.M < 1) throw config_error("dimensions N and M must be positive");
    const EntryDistribution dist = entry_distribution(sc.entry);
    const EntryMoments mom = moments_of(dist);
    const Eigen::VectorXd d = build_profile(sc.D, sc.N, sc.base_dir, "D");
    const Eigen::VectorXd dt = build_profile(sc.Dt, sc.M, sc.base_dir, "Dt");
    const Eigen::MatrixXcd los = build_los(sc);
    if (sc.rician_K)
        return BuiltScenario{rician_model(los, *sc.rician_K, d, dt, mom), dist};
    return BuiltScenario{ChannelModel(los, d, dt, mom), dist};
}

// Scale a scenario to a new receive dimension, preserving the aspect ratio
// exactly. Inline profiles and angle lists cannot be rescaled meaningfully,
// so only identity profiles and default ULA angles are accepted in N sweeps.
inline ScenarioConfig scaled_to(const ScenarioConfig& sc, int new_n) {
    if (new_n < 1) throw config_error("swept N must be positive");
    const long long num = static_cast<long long>(new_n) * sc.M;
    if (num % sc.N != 0)
        throw config_error("swept N = " + std::to_string(new_n) +
                           " does not preserve the aspect ratio N/M");
    ScenarioConfig out = sc;
    out.N = new_n;
    out.M = static_cast<int>(num / sc.N);
    if (sc.D.kind != "identity" || sc.Dt.kind != "identity")
        throw config_error("N sweeps need identity variance profiles");
    if (sc.los.kind == "ula" && sc.los.angles)
        throw config_error("N sweeps need default ULA angles");
    if (sc.los.kind == "file") throw config_error("N sweeps cannot rescale a fixed LoS file");
    return out;
}

// ---------------------------------------------------------------------------
// Validation report
// ---------------------------------------------------------------------------

struct Diagnostic {
    std::string level; // "pass" | "warn" | "fail"
    std::string check;
    std::string detail;
};

inline std::vector<Diagnostic> validate_config(const ExperimentConfig& cfg) {
    std::vector<Diagnostic> out;
    const ScenarioConfig& sc = cfg.scenario;
    auto add = [&](bool ok, const std::string& check, const std::string& detail) {
        out.push_back({ok ? "pass" : "fail", check, detail});
    };

    add(sc.N >= 1 && sc.M >= 1, "dimension-ratio",
        "N = " + std::to_string(sc.N) + ", M = " + std::to_string(sc.M));

    // Entry-law and moment checks on the raw values, so one bad field yields
    // a report entry instead of an exception.
    const double norm_sum = sc.entry.sigma_r2 + sc.entry.sigma_i2;
    add(std::abs(norm_sum - 2.0) <= 1e-12 && sc.entry.sigma_r2 >= 0.0 && sc.entry.sigma_i2 >= 0.0,
        "moment-normalization", "sigma_r2 + sigma_i2 = " + format_double(norm_sum));

    bool law_ok = true;
    try {
        const EntryDistribution dist = entry_distribution(sc.entry);
        const EntryMoments mom = moments_of(dist);
        add(std::abs(mom.vartheta) <= 1.0 + 1e-12, "pseudo-variance",
            "|vartheta| = " + format_double(std::abs(mom.vartheta)));
        add(mom.fourth_moment() >= 1.0 - 1e-12, "fourth-moment",
            "E|x|^4 = " + format_double(mom.fourth_moment()));
        if (dist.law == ModulusLaw::lognormal && dist.param > 1.0)
            out.push_back({"warn", "heavy-tails",
                           "lognormal sigma = " + format_double(dist.param) +
                               " slows Monte-Carlo convergence"});
    } catch (const config_error& err) {
        law_ok = false;
        add(false, "entry-law", err.what());
    }

    if (sc.N >= 1 && sc.M >= 1) {
        try {
            const Eigen::VectorXd d = build_profile(sc.D, sc.N, sc.base_dir, "D");
            const Eigen::VectorXd dt = build_profile(sc.Dt, sc.M, sc.base_dir, "Dt");
            const bool d_ok = d.minCoeff() >= 0.0 && d.mean() > 0.0;
            const bool dt_ok = dt.minCoeff() >= 0.0 && dt.mean() > 0.0;
            add(d_ok && dt_ok, "variance-profile",
                "mean D = " + format_double(d.mean()) + ", mean Dt = " + format_double(dt.mean()));
        } catch (const config_error& err) {
            add(false, "variance-profile", err.what());
        }
        try {
            const Eigen::MatrixXcd los = build_los(sc);
            double norm = operator_norm(los);
            if (sc.rician_K) {
                if (*sc.rician_K < 0.0) throw config_error("rician_K must be nonnegative");
                norm *= std::sqrt(*sc.rician_K / (*sc.rician_K + 1.0)) /
                        std::sqrt(static_cast<double>(sc.M));
            }
            add(std::isfinite(norm), "los-norm", "||A|| = " + format_double(norm));
        } catch (const config_error& err) {
            add(false, "los-norm", err.what());
        }
    }

    if (cfg.sweep) {
        bool increasing = true;
        for (std::size_t k = 1; k < cfg.sweep->values.size(); ++k)
            if (!(cfg.sweep->values[k] > cfg.sweep->values[k - 1])) increasing = false;
        const bool known = cfg.sweep->variable == "N" || cfg.sweep->variable == "sigma2" ||
                           cfg.sweep->variable == "R" || cfg.sweep->variable == "cv";
        add(increasing && !cfg.sweep->values.empty(), "sweep-values",
            "values must be strictly increasing");
        add(known, "sweep-variable", "variable = " + cfg.sweep->variable);
        if (cfg.sweep->variable == "N") {
            bool ratio_ok = true;
            for (double v : cfg.sweep->values) {
                const long long n = static_cast<long long>(v);
                if (static_cast<double>(n) != v || n < 1 || (n * sc.M) % sc.N != 0)
                    ratio_ok = false;
            }
            add(ratio_ok, "sweep-aspect", "N values must keep N/M an exact ratio");
        }
    }

    const bool solver_ok = cfg.solver.tol > 0.0 && cfg.solver.max_iter > 0 &&
                           cfg.solver.damping > 0.0 && cfg.solver.damping <= 1.0;
    add(solver_ok, "solver-options",
        "tol = " + format_double(cfg.solver.tol) +
            ", max_iter = " + std::to_string(cfg.solver.max_iter) +
            ", damping = " + format_double(cfg.solver.damping));

    // Fluctuation scale at the requested noise level.
    bool structural_fail = false;
    for (const Diagnostic& d : out)
        if (d.level == "fail") structural_fail = true;
    if (!cfg.sigma2) {
        out.push_back({"warn", "fluctuation-scale", "sigma2 not set; check skipped"});
    } else if (structural_fail || !law_ok) {
        out.push_back({"warn", "fluctuation-scale", "skipped due to earlier failures"});
    } else {
        try {
            const BuiltScenario built = build_model(sc);
            const FixedPointSolution sol =
                solve(built.model, cplx(-*cfg.sigma2, 0.0), cfg.solver);
            const DeterministicQuantities q = table1(built.model, sol);
            add(q.Delta.real() > 0.0 && q.Delta_T.real() > 0.0, "fluctuation-scale",
                "Delta = " + format_double(q.Delta.real()) +
                    ", Delta_T = " + format_double(q.Delta_T.real()));
        } catch (const std::exception& err) {
            add(false, "fluctuation-scale", err.what());
        }
    }
    return out;
}

} // namespace rmtbias
