#pragma once

#include <initializer_list>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "seectl/cauchy.hpp"
#include "seectl/control.hpp"
#include "seectl/errors.hpp"
#include "seectl/io.hpp"

namespace seectl {

namespace cfgdetail {

using nlohmann::json;

inline void expect_keys(const json& j, std::initializer_list<const char*> allowed,
                        const std::string& ctx) {
    if (!j.is_object()) throw ConfigError(ctx + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + ctx);
    }
}

inline const json& require(const json& j, const char* key, const std::string& ctx) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(ctx + " is missing required key '" + key + "'");
    return *it;
}

inline double get_real(const json& j, const char* key, const std::string& ctx) {
    const json& v = require(j, key, ctx);
    if (!v.is_number()) throw ConfigError(ctx + "." + key + " must be a number");
    return v.get<double>();
}

inline double get_real_or(const json& j, const char* key, const std::string& ctx, double dflt) {
    if (!j.contains(key)) return dflt;
    return get_real(j, key, ctx);
}

inline long long get_int(const json& j, const char* key, const std::string& ctx) {
    const json& v = require(j, key, ctx);
    if (!v.is_number_integer()) throw ConfigError(ctx + "." + key + " must be an integer");
    return v.get<long long>();
}

inline long long get_int_or(const json& j, const char* key, const std::string& ctx,
                            long long dflt) {
    if (!j.contains(key)) return dflt;
    return get_int(j, key, ctx);
}

inline std::string get_string(const json& j, const char* key, const std::string& ctx) {
    const json& v = require(j, key, ctx);
    if (!v.is_string()) throw ConfigError(ctx + "." + key + " must be a string");
    return v.get<std::string>();
}

inline std::string get_string_or(const json& j, const char* key, const std::string& ctx,
                                 std::string dflt) {
    if (!j.contains(key)) return dflt;
    return get_string(j, key, ctx);
}

inline std::vector<double> get_real_array(const json& v, const std::string& ctx) {
    if (!v.is_array()) throw ConfigError(ctx + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError(ctx + " must contain only numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

inline VectorXd parse_vector(const json& v, const std::string& ctx) {
    const auto a = get_real_array(v, ctx);
    VectorXd out(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) out[static_cast<Eigen::Index>(i)] = a[i];
    return out;
}

inline MatrixXd parse_matrix(const json& v, const std::string& ctx) {
    if (!v.is_array() || v.empty()) throw ConfigError(ctx + " must be a non-empty array of rows");
    const auto first = get_real_array(v.front(), ctx + " row");
    MatrixXd out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(first.size()));
    for (std::size_t r = 0; r < v.size(); ++r) {
        const auto row = get_real_array(v[r], ctx + " row");
        if (row.size() != first.size()) throw ConfigError(ctx + " rows have unequal lengths");
        for (std::size_t c = 0; c < row.size(); ++c)
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
    }
    return out;
}

/// Named spatial/temporal coefficient selections usable from config files.
inline Coefficient parse_coefficient(const json& j, const std::string& ctx) {
    const std::string name = get_string(j, "name", ctx);
    if (name == "constant") {
        expect_keys(j, {"name", "value"}, ctx);
        return constant_coefficient(get_real(j, "value", ctx));
    }
    if (name == "cosine_z") {
        expect_keys(j, {"name", "offset", "amplitude", "wavenumber"}, ctx);
        const double off = get_real_or(j, "offset", ctx, 0.0);
        const double amp = get_real(j, "amplitude", ctx);
        const double wn = get_real(j, "wavenumber", ctx);
        return [off, amp, wn](double, double z) { return off + amp * std::cos(wn * z); };
    }
    if (name == "piecewise_t") {
        expect_keys(j, {"name", "breakpoint", "before", "after"}, ctx);
        const double tb = get_real(j, "breakpoint", ctx);
        const double v0 = get_real(j, "before", ctx);
        const double v1 = get_real(j, "after", ctx);
        return [tb, v0, v1](double t, double) { return t < tb ? v0 : v1; };
    }
    throw ConfigError(ctx + " uses unknown coefficient '" + name + "'");
}

}  // namespace cfgdetail

/// Initial/reference control requested by a config file.
struct ControlSpec {
    std::string kind = "zero";  ///< zero | constant | open_loop | riccati_feedback
    VectorXd constant;
    MatrixXd table;
    std::optional<std::pair<VectorXd, VectorXd>> box;
};

struct OptimizeSpec {
    std::string method = "hamiltonian";  ///< hamiltonian | gradient
    std::string klass = "linear_feedback";
    OptimizeOptions options;
};

struct AuditSpec {
    std::vector<double> deltas{0.1, 0.05, 0.025};
    int dependence_paths = 4000;
    int ito_paths = 64;
    double slope_lo = 1.9;
    double slope_hi = 2.1;
    double ito_rms_max = 0.5;
    double lipschitz_tol = 1e-6;
};

/// One experiment: a problem plus per-subcommand settings, parsed strictly
/// (schema version pinned, unknown keys rejected).
struct ExperimentConfig {
    CauchyConfig problem;
    std::optional<std::pair<MatrixXd, MatrixXd>> operator_override;
    ControlSpec control;
    OptimizeSpec optimize;
    AuditSpec audit;
    ExampleTolerances example;
    int threads = 1;
    std::string raw;  ///< exact config text, hashed into the manifest
};

inline ExperimentConfig parse_experiment_config(const std::string& text) {
    using cfgdetail::expect_keys;
    using cfgdetail::get_int;
    using cfgdetail::get_int_or;
    using cfgdetail::get_real;
    using cfgdetail::get_real_or;
    using cfgdetail::get_string_or;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    expect_keys(j, {"schema_version", "threads", "problem", "control", "optimize", "audit",
                    "example"},
                "config");
    if (get_int(j, "schema_version", "config") != 1)
        throw ConfigError("config: unsupported schema_version");

    ExperimentConfig cfg;
    cfg.raw = text;
    cfg.threads = static_cast<int>(get_int_or(j, "threads", "config", 1));
    if (cfg.threads < 1) throw ConfigError("config.threads must be >= 1");

    const nlohmann::json& p = cfgdetail::require(j, "problem", "config");
    expect_keys(p,
                {"modes", "domain_length", "horizon", "steps", "paths", "x0", "seed", "kappa",
                 "coefficient_bound", "gammas", "marks", "coefficients", "operators"},
                "problem");
    CauchyConfig& pc = cfg.problem;
    pc.modes = static_cast<int>(get_int(p, "modes", "problem"));
    pc.domain_length = get_real_or(p, "domain_length", "problem", pc.domain_length);
    pc.horizon = get_real(p, "horizon", "problem");
    pc.steps = static_cast<int>(get_int(p, "steps", "problem"));
    pc.paths = static_cast<int>(get_int(p, "paths", "problem"));
    pc.x0 = cfgdetail::parse_vector(cfgdetail::require(p, "x0", "problem"), "problem.x0");
    pc.seed = static_cast<std::uint64_t>(get_int_or(p, "seed", "problem", 2024));
    pc.kappa = get_real_or(p, "kappa", "problem", pc.kappa);
    pc.coefficient_bound = get_real_or(p, "coefficient_bound", "problem", pc.coefficient_bound);
    pc.threads = cfg.threads;

    {
        const nlohmann::json& marks = cfgdetail::require(p, "marks", "problem");
        expect_keys(marks, {"atoms", "intensities"}, "problem.marks");
        pc.marks = MarkSpace(
            cfgdetail::get_real_array(cfgdetail::require(marks, "atoms", "problem.marks"),
                                      "problem.marks.atoms"),
            cfgdetail::get_real_array(cfgdetail::require(marks, "intensities", "problem.marks"),
                                      "problem.marks.intensities"));
        pc.gammas = cfgdetail::get_real_array(cfgdetail::require(p, "gammas", "problem"),
                                              "problem.gammas");
    }

    if (p.contains("coefficients")) {
        const nlohmann::json& co = p["coefficients"];
        expect_keys(co, {"a", "b_drift", "c", "eta", "rho"}, "problem.coefficients");
        if (co.contains("a")) pc.a = cfgdetail::parse_coefficient(co["a"], "problem.coefficients.a");
        if (co.contains("b_drift"))
            pc.b_drift = cfgdetail::parse_coefficient(co["b_drift"], "problem.coefficients.b_drift");
        if (co.contains("c")) pc.c = cfgdetail::parse_coefficient(co["c"], "problem.coefficients.c");
        if (co.contains("eta"))
            pc.eta = cfgdetail::parse_coefficient(co["eta"], "problem.coefficients.eta");
        if (co.contains("rho"))
            pc.rho = cfgdetail::parse_coefficient(co["rho"], "problem.coefficients.rho");
    }

    if (p.contains("operators")) {
        const nlohmann::json& ops = p["operators"];
        expect_keys(ops, {"A", "B"}, "problem.operators");
        cfg.operator_override = {
            cfgdetail::parse_matrix(cfgdetail::require(ops, "A", "problem.operators"),
                                    "problem.operators.A"),
            cfgdetail::parse_matrix(cfgdetail::require(ops, "B", "problem.operators"),
                                    "problem.operators.B")};
    }

    if (j.contains("control")) {
        const nlohmann::json& c = j["control"];
        expect_keys(c, {"kind", "value", "table", "box"}, "control");
        cfg.control.kind = get_string_or(c, "kind", "control", "zero");
        if (cfg.control.kind == "constant")
            cfg.control.constant =
                cfgdetail::parse_vector(cfgdetail::require(c, "value", "control"), "control.value");
        else if (cfg.control.kind == "open_loop")
            cfg.control.table =
                cfgdetail::parse_matrix(cfgdetail::require(c, "table", "control"), "control.table");
        else if (cfg.control.kind != "zero" && cfg.control.kind != "riccati_feedback")
            throw ConfigError("control.kind must be zero, constant, open_loop, or riccati_feedback");
        if (c.contains("box")) {
            const nlohmann::json& b = c["box"];
            expect_keys(b, {"lo", "hi"}, "control.box");
            cfg.control.box = {
                cfgdetail::parse_vector(cfgdetail::require(b, "lo", "control.box"), "control.box.lo"),
                cfgdetail::parse_vector(cfgdetail::require(b, "hi", "control.box"),
                                        "control.box.hi")};
        }
    }

    if (j.contains("optimize")) {
        const nlohmann::json& o = j["optimize"];
        expect_keys(o,
                    {"method", "class", "max_outer", "damping", "cost_tol", "residual_tol",
                     "step0", "basis_degree"},
                    "optimize");
        cfg.optimize.method = get_string_or(o, "method", "optimize", "hamiltonian");
        if (cfg.optimize.method != "hamiltonian" && cfg.optimize.method != "gradient")
            throw ConfigError("optimize.method must be hamiltonian or gradient");
        cfg.optimize.klass = get_string_or(o, "class", "optimize", "linear_feedback");
        if (cfg.optimize.klass != "open_loop" && cfg.optimize.klass != "linear_feedback" &&
            cfg.optimize.klass != "tabulated")
            throw ConfigError("optimize.class must be open_loop, linear_feedback, or tabulated");
        auto& opts = cfg.optimize.options;
        opts.max_outer = static_cast<int>(get_int_or(o, "max_outer", "optimize", opts.max_outer));
        opts.damping = get_real_or(o, "damping", "optimize", opts.damping);
        opts.cost_tol = get_real_or(o, "cost_tol", "optimize", opts.cost_tol);
        opts.residual_tol = get_real_or(o, "residual_tol", "optimize", opts.residual_tol);
        opts.step0 = get_real_or(o, "step0", "optimize", opts.step0);
        const int deg = static_cast<int>(get_int_or(o, "basis_degree", "optimize", 1));
        opts.basis = RegressionBasis{deg};
    }

    if (j.contains("audit")) {
        const nlohmann::json& a = j["audit"];
        expect_keys(a,
                    {"deltas", "dependence_paths", "ito_paths", "slope_lo", "slope_hi",
                     "ito_rms_max", "lipschitz_tol"},
                    "audit");
        if (a.contains("deltas"))
            cfg.audit.deltas = cfgdetail::get_real_array(a["deltas"], "audit.deltas");
        cfg.audit.dependence_paths = static_cast<int>(
            get_int_or(a, "dependence_paths", "audit", cfg.audit.dependence_paths));
        cfg.audit.ito_paths =
            static_cast<int>(get_int_or(a, "ito_paths", "audit", cfg.audit.ito_paths));
        cfg.audit.slope_lo = get_real_or(a, "slope_lo", "audit", cfg.audit.slope_lo);
        cfg.audit.slope_hi = get_real_or(a, "slope_hi", "audit", cfg.audit.slope_hi);
        cfg.audit.ito_rms_max = get_real_or(a, "ito_rms_max", "audit", cfg.audit.ito_rms_max);
        cfg.audit.lipschitz_tol = get_real_or(a, "lipschitz_tol", "audit", cfg.audit.lipschitz_tol);
    }

    if (j.contains("example")) {
        const nlohmann::json& e = j["example"];
        expect_keys(e,
                    {"closed_form_riccati", "closed_form_regression_rel", "smp_residual_max",
                     "optimize_cost_rel", "gain_rel"},
                    "example");
        auto& t = cfg.example;
        t.closed_form_riccati =
            get_real_or(e, "closed_form_riccati", "example", t.closed_form_riccati);
        t.closed_form_regression_rel =
            get_real_or(e, "closed_form_regression_rel", "example", t.closed_form_regression_rel);
        t.smp_residual_max = get_real_or(e, "smp_residual_max", "example", t.smp_residual_max);
        t.optimize_cost_rel = get_real_or(e, "optimize_cost_rel", "example", t.optimize_cost_rel);
        t.gain_rel = get_real_or(e, "gain_rel", "example", t.gain_rel);
    }

    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    return parse_experiment_config(read_text_file(path));
}

/// Builds the problem, applying any direct operator override (bounds are
/// recomputed in the roles the operators play: V->V* for A, V->H for B).
inline ControlProblem build_experiment_problem(const ExperimentConfig& cfg) {
    ControlProblem prob = build_cauchy_problem(cfg.problem);
    if (cfg.operator_override) {
        const MatrixXd& MA = cfg.operator_override->first;
        const MatrixXd& MB = cfg.operator_override->second;
        const int N = prob.space.dim;
        if (MA.rows() != N || MA.cols() != N || MB.rows() != N || MB.cols() != N)
            throw ConfigError("operator override must be modes x modes");
        const VectorXd inv_sqrt_w = prob.space.weights.array().rsqrt().matrix();
        const VectorXd ones = VectorXd::Ones(N);
        prob.A = OperatorProcess::constant(MA, prob.grid.steps,
                                           detail::weighted_norm(MA, inv_sqrt_w, inv_sqrt_w));
        prob.B = OperatorProcess::constant(MB, prob.grid.steps,
                                           detail::weighted_norm(MB, ones, inv_sqrt_w));
    }
    return prob;
}

/// Realizes the configured control for a given problem.  Riccati feedback is
/// derived from the problem's own operators.
inline ControlLaw make_experiment_control(const ExperimentConfig& cfg, const ControlProblem& prob) {
    const int n = prob.grid.steps;
    const int U = prob.coeffs.control_dim;
    ControlLaw law = ControlLaw::zero(n, U);
    if (cfg.control.kind == "constant") {
        if (cfg.control.constant.size() != U)
            throw ConfigError("control.value size must equal the control dimension");
        law = ControlLaw::constant(n, cfg.control.constant);
    } else if (cfg.control.kind == "open_loop") {
        if (cfg.control.table.rows() != n || cfg.control.table.cols() != U)
            throw ConfigError("control.table must be steps x control dimension");
        law = ControlLaw::open_loop(cfg.control.table);
    } else if (cfg.control.kind == "riccati_feedback") {
        const RiccatiSolution ric = solve_riccati_lq(
            prob.A, prob.B, cauchy_gamma_matrices(cfg.problem), prob.marks, prob.grid);
        law = ric.feedback();
    }
    if (cfg.control.box) law = law.with_box(cfg.control.box->first, cfg.control.box->second);
    return law;
}

}  // namespace seectl
