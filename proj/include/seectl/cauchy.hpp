#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "seectl/adjoint.hpp"
#include "seectl/control.hpp"
#include "seectl/errors.hpp"
#include "seectl/forward.hpp"
#include "seectl/galerkin.hpp"
#include "seectl/noise.hpp"
#include "seectl/problem.hpp"

namespace seectl {

/// A controlled divergence-form parabolic SPDE with multiplicative Brownian
/// and compensated Poisson noise,
///   dX = [d_z(a d_z X) + b_drift d_z X + c X + u] dt
///        + [eta d_z X + rho X + u] dW
///        + sum_i [gamma_i X + u] dmu~_i,
/// quadratic cost int (||X||^2 + ||u||^2) dt + ||X(T)||^2, spectrally
/// truncated to `modes` Fourier coefficients.  The defaults are the scalar
/// canonical instance (one mode, c = -1, rho = 0.5, gamma = 0.1, nu = 1,
/// T = 1, x0 = 1) used throughout the test suite.
struct CauchyConfig {
    int modes = 1;
    double domain_length = 2.0 * M_PI;

    Coefficient a = constant_coefficient(1.0);
    Coefficient b_drift = constant_coefficient(0.0);
    Coefficient c = constant_coefficient(-1.0);
    Coefficient eta = constant_coefficient(0.0);
    Coefficient rho = constant_coefficient(0.5);

    std::vector<double> gammas{0.1};  ///< per-atom jump factors
    MarkSpace marks{{1.0}, {1.0}};

    double horizon = 1.0;
    int steps = 128;
    int paths = 10000;
    VectorXd x0 = VectorXd::Ones(1);  ///< Fourier coefficients of the start

    std::uint64_t seed = 2024;
    double kappa = 0.5;              ///< parabolicity slack in kappa + eta^2 <= 2a
    double coefficient_bound = 100.0;  ///< uniform bound K on all coefficients
    int threads = 1;
};

inline CauchyConfig canonical_lq_config() { return CauchyConfig{}; }

/// Structural and assumption checks; throws ConfigError with the failing
/// condition.  Coefficient bounds and parabolicity are sampled on the grid
/// times and a uniform z lattice.
inline void validate_cauchy_config(const CauchyConfig& cfg) {
    if (cfg.modes < 1) throw ConfigError("cauchy: modes must be >= 1");
    if (!(cfg.domain_length > 0.0)) throw ConfigError("cauchy: domain length must be positive");
    if (!(cfg.horizon > 0.0)) throw ConfigError("cauchy: horizon must be positive");
    if (cfg.steps < 1) throw ConfigError("cauchy: steps must be >= 1");
    if (cfg.paths < 2) throw ConfigError("cauchy: need at least two paths");
    if (cfg.x0.size() != cfg.modes) throw ConfigError("cauchy: x0 size must equal modes");
    if (static_cast<int>(cfg.gammas.size()) != cfg.marks.size())
        throw ConfigError("cauchy: one gamma per mark required");
    if (!(cfg.kappa > 0.0 && cfg.kappa < 1.0)) throw ConfigError("cauchy: kappa outside (0,1)");
    if (!(cfg.coefficient_bound > 0.0)) throw ConfigError("cauchy: coefficient bound must be positive");

    const TimeGrid grid{cfg.horizon, cfg.steps};
    const int z_samples = 128;
    const double K = cfg.coefficient_bound;
    for (int k = 0; k <= grid.steps; ++k) {
        const double t = grid.time(k);
        for (int q = 0; q < z_samples; ++q) {
            const double z = cfg.domain_length * q / z_samples;
            for (const auto* co : {&cfg.a, &cfg.b_drift, &cfg.c, &cfg.eta, &cfg.rho}) {
                if (!(std::abs((*co)(t, z)) <= K))
                    throw ConfigError("cauchy: coefficient exceeds the declared bound");
            }
        }
    }
    for (double gm : cfg.gammas)
        if (!(std::abs(gm) <= K))
            throw ConfigError("cauchy: jump factor exceeds the declared bound");
    if (!check_superparabolic(cfg.a, cfg.eta, cfg.kappa, grid, z_samples, cfg.domain_length,
                              2.0 * K))
        throw ConfigError("cauchy: super-parabolic condition fails");
}

/// Jump coefficient matrices gamma_i * I for the truncated problem.
inline std::vector<MatrixXd> cauchy_gamma_matrices(const CauchyConfig& cfg) {
    std::vector<MatrixXd> gs;
    gs.reserve(cfg.gammas.size());
    for (double gm : cfg.gammas)
        gs.push_back(gm * MatrixXd::Identity(cfg.modes, cfg.modes));
    return gs;
}

/// Assembles the truncated control problem: spectral operators for the
/// drift and noise parts, b = g = u, sigma_i = gamma_i x + u, quadratic
/// tracking cost.
inline ControlProblem build_cauchy_problem(const CauchyConfig& cfg) {
    validate_cauchy_config(cfg);
    ControlProblem prob;
    prob.space = build_fourier_space(1, cfg.modes, cfg.domain_length);
    prob.grid = TimeGrid{cfg.horizon, cfg.steps};
    prob.marks = cfg.marks;
    prob.A = assemble_divergence_operator(cfg.a, cfg.b_drift, cfg.c, prob.space, prob.grid);
    prob.B = assemble_noise_operator(cfg.eta, cfg.rho, prob.space, prob.grid);
    prob.coeffs = lq_coefficients(cfg.modes, cauchy_gamma_matrices(cfg), cfg.marks);
    prob.cost = quadratic_tracking_cost(cfg.modes, cfg.modes);
    prob.x0 = cfg.x0;
    return prob;
}

/// Pointwise minimizer of the example's Hamiltonian:
///   u* = -1/2 [ p + q + sum_i r(e_i) nu_i ].
inline VectorXd closed_form_control(const VectorXd& p, const VectorXd& q,
                                    const std::vector<VectorXd>& r, const MarkSpace& marks) {
    if (static_cast<int>(r.size()) != marks.size())
        throw ConfigError("closed_form_control: one r per mark required");
    VectorXd s = p + q;
    for (int i = 0; i < marks.size(); ++i) s += marks.intensities[i] * r[i];
    return (-0.5 * s).eval();
}

/// Tabulated law applying the closed-form minimizer along solved adjoints.
inline ControlLaw closed_form_law(const StateEnsemble& states, const AdjointEnsemble& adj,
                                  const MarkSpace& marks) {
    return ControlLaw::tabulated(states, states.state_dim, [&](int p, int k, const auto&) {
        std::vector<VectorXd> r(marks.size());
        for (int i = 0; i < marks.size(); ++i) r[i] = adj.r_at(p, k, i);
        return closed_form_control(adj.p_at(p, k), adj.q_at(p, k), r, marks);
    });
}

struct ClosedFormGap {
    double sup_abs = 0.0;  ///< worst pointwise |u_closed - Lambda x|
    double rel_rms = 0.0;  ///< ensemble RMS relative to RMS(Lambda x)
};

/// Distance between the closed-form control evaluated on an adjoint ensemble
/// and the Riccati feedback along the same paths.
inline ClosedFormGap closed_form_gap(const StateEnsemble& states, const AdjointEnsemble& adj,
                                     const MarkSpace& marks, const RiccatiSolution& ric) {
    const int n = states.grid.steps;
    const int M = states.paths();
    double sup = 0.0, num = 0.0, den = 0.0;
    std::vector<VectorXd> r(marks.size());
    for (int p = 0; p < M; ++p) {
        for (int k = 0; k < n; ++k) {
            for (int i = 0; i < marks.size(); ++i) r[i] = adj.r_at(p, k, i);
            const VectorXd uc = closed_form_control(adj.p_at(p, k), adj.q_at(p, k), r, marks);
            const VectorXd uf = ric.gain[static_cast<std::size_t>(k)] * states.state(p, k);
            sup = std::max(sup, (uc - uf).cwiseAbs().maxCoeff());
            num += (uc - uf).squaredNorm();
            den += uf.squaredNorm();
        }
    }
    ClosedFormGap gap;
    gap.sup_abs = sup;
    gap.rel_rms = std::sqrt(num / std::max(den, 1e-300));
    return gap;
}

/// Relative RMS distance of a fitted linear-feedback law from the Riccati
/// gains; offsets count toward the numerator since the target has none.
inline double gain_gap(const ControlLaw& law, const RiccatiSolution& ric) {
    if (law.kind() != ControlLaw::Kind::linear_feedback)
        throw ConfigError("gain_gap: law must be linear feedback");
    double num = 0.0, den = 0.0;
    for (int k = 0; k < law.steps(); ++k) {
        num += (law.gains()[k] - ric.gain[static_cast<std::size_t>(k)]).squaredNorm() +
               law.offsets()[k].squaredNorm();
        den += ric.gain[static_cast<std::size_t>(k)].squaredNorm();
    }
    return std::sqrt(num / std::max(den, 1e-300));
}

struct StageResult {
    std::string name;
    bool ran = false;
    bool ok = false;
    std::string detail;
};

/// Pass thresholds for the end-to-end pipeline.
struct ExampleTolerances {
    double closed_form_riccati = 1e-10;
    double closed_form_regression_rel = 0.05;
    double smp_residual_max = 1e-2;
    double optimize_cost_rel = 0.01;
    double gain_rel = 0.05;
};

struct ExampleReport {
    std::vector<StageResult> stages;
    bool ok = false;

    CoercivityReport coercivity;
    double riccati_cost = 0.0;
    CostValue feedback_cost;
    ClosedFormGap riccati_gap;
    ClosedFormGap regression_gap;
    double smp = 0.0;
    VerificationReport verification;
    OptimizeResult optimize;
    double gain_rel_rms = 0.0;
};

namespace detail {

inline std::string fmt_number(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace detail

/// Full demonstration pipeline: validate and build the problem, check
/// coercivity, solve the Riccati oracle, simulate under its feedback, solve
/// the adjoint both exactly and by regression, test the closed-form control
/// identity, audit stationarity and the sufficient conditions, then optimize
/// from zero and compare costs and gains against the oracle.  Any stage
/// failure is recorded and later stages are skipped.
inline ExampleReport run_example_end_to_end(const CauchyConfig& cfg,
                                            const ExampleTolerances& tol = {}) {
    ExampleReport rep;
    auto stage = [&rep](const std::string& name, auto&& body) {
        StageResult s;
        s.name = name;
        s.ran = true;
        try {
            s.detail = body(s.ok);
        } catch (const std::exception& e) {
            s.ok = false;
            s.detail = e.what();
        }
        rep.stages.push_back(std::move(s));
        return rep.stages.back().ok;
    };

    ControlProblem prob;
    RiccatiSolution ric;
    std::vector<MatrixXd> gammas;
    NoiseEnsemble noise({1.0, 1}, {{1.0}, {1.0}}, 1, 0);  // placeholder, rebuilt below
    StateEnsemble states;
    AdjointEnsemble reg_adj;

    bool alive = stage("validate", [&](bool& ok) {
        validate_cauchy_config(cfg);
        ok = true;
        return std::string("config admissible");
    });

    if (alive)
        alive = stage("build", [&](bool& ok) {
            prob = build_cauchy_problem(cfg);
            gammas = cauchy_gamma_matrices(cfg);
            // The adjoint operators must be exact transposes at every time.
            const OperatorProcess As = adjoint_of(prob.A);
            const OperatorProcess Bs = adjoint_of(prob.B);
            double worst = 0.0;
            for (int k = 0; k <= (prob.A.time_invariant ? 0 : prob.grid.steps); ++k)
                worst = std::max(worst,
                                 (As.at(k) - prob.A.at(k).transpose()).cwiseAbs().maxCoeff());
            for (int k = 0; k <= (prob.B.time_invariant ? 0 : prob.grid.steps); ++k)
                worst = std::max(worst,
                                 (Bs.at(k) - prob.B.at(k).transpose()).cwiseAbs().maxCoeff());
            ok = worst == 0.0;
            return "adjoint transpose defect " + detail::fmt_number(worst);
        });

    if (alive)
        alive = stage("coercivity", [&](bool& ok) {
            rep.coercivity = check_coercivity(prob.A, prob.B, prob.space, prob.grid);
            ok = rep.coercivity.satisfied;
            return "alpha " + detail::fmt_number(rep.coercivity.alpha) + ", margin " +
                   detail::fmt_number(rep.coercivity.min_margin);
        });

    if (alive)
        alive = stage("riccati", [&](bool& ok) {
            ric = solve_riccati_lq(prob.A, prob.B, gammas, prob.marks, prob.grid);
            rep.riccati_cost = ric.cost_of(prob.x0);
            ok = std::isfinite(rep.riccati_cost) && rep.riccati_cost >= 0.0;
            return "oracle cost " + detail::fmt_number(rep.riccati_cost);
        });

    if (alive)
        alive = stage("simulate", [&](bool& ok) {
            noise = sample_noise(prob.grid, prob.marks, cfg.paths, cfg.seed, cfg.threads);
            states = solve_forward(prob.space, prob.A, prob.B, prob.coeffs, ric.feedback(),
                                   prob.x0, noise, cfg.threads);
            rep.feedback_cost = cost(states, ric.feedback(), prob.cost);
            ok = std::isfinite(rep.feedback_cost.value);
            return "feedback cost " + detail::fmt_number(rep.feedback_cost.value) + " +- " +
                   detail::fmt_number(rep.feedback_cost.stderr_);
        });

    if (alive)
        alive = stage("closed_form_riccati", [&](bool& ok) {
            const AdjointEnsemble exact =
                lq_adjoint_from_riccati(ric, states, prob.B, gammas, prob.marks);
            rep.riccati_gap = closed_form_gap(states, exact, prob.marks, ric);
            ok = rep.riccati_gap.sup_abs <= tol.closed_form_riccati;
            return "sup gap " + detail::fmt_number(rep.riccati_gap.sup_abs);
        });

    if (alive)
        alive = stage("closed_form_regression", [&](bool& ok) {
            reg_adj = solve_bsee_regression(states, prob.A, prob.B, prob.coeffs, prob.cost,
                                            ric.feedback(), noise, RegressionBasis{1});
            rep.regression_gap = closed_form_gap(states, reg_adj, prob.marks, ric);
            ok = rep.regression_gap.rel_rms <= tol.closed_form_regression_rel;
            return "relative RMS gap " + detail::fmt_number(rep.regression_gap.rel_rms);
        });

    if (alive)
        alive = stage("smp_residual", [&](bool& ok) {
            rep.smp = smp_residual(states, reg_adj, prob.coeffs, prob.cost, ric.feedback(),
                                   prob.marks);
            ok = rep.smp <= tol.smp_residual_max;
            return "residual " + detail::fmt_number(rep.smp);
        });

    if (alive)
        alive = stage("verification", [&](bool& ok) {
            VerificationOptions vo;
            vo.threads = cfg.threads;
            vo.stationarity_tol = tol.smp_residual_max;
            rep.verification = verification_check(prob.space, prob.A, prob.B, prob.coeffs,
                                                  prob.cost, prob.marks, ric.feedback(), prob.x0,
                                                  noise, vo);
            ok = rep.verification.all_ok();
            return "convexity " + std::string(rep.verification.convexity_ok ? "ok" : "violated") +
                   ", residual " + detail::fmt_number(rep.verification.residual) +
                   ", perturbation z " + detail::fmt_number(rep.verification.worst_perturbation_z);
        });

    if (alive)
        alive = stage("optimize", [&](bool& ok) {
            const int n = prob.grid.steps;
            const int N = prob.space.dim;
            const ControlLaw start = ControlLaw::linear_feedback(
                std::vector<MatrixXd>(n, MatrixXd::Zero(N, N)),
                std::vector<VectorXd>(n, VectorXd::Zero(N)));
            OptimizeOptions oo;
            oo.threads = cfg.threads;
            oo.residual_tol = tol.smp_residual_max;
            rep.optimize = optimize_hamiltonian_iteration(prob.space, prob.A, prob.B, prob.coeffs,
                                                          prob.cost, prob.marks, start, prob.x0,
                                                          noise, oo);
            rep.gain_rel_rms = gain_gap(rep.optimize.control, ric);
            // Benchmark on common noise: the oracle feedback cost on this
            // ensemble shares the Monte Carlo and time-discretization bias,
            // unlike the continuous-time value.
            const double bench = rep.feedback_cost.value;
            const double rel = std::abs(rep.optimize.final_cost.value - bench) /
                               std::max(std::abs(bench), 1e-12);
            ok = rep.optimize.converged && rel <= tol.optimize_cost_rel &&
                 rep.gain_rel_rms <= tol.gain_rel;
            return "cost " + detail::fmt_number(rep.optimize.final_cost.value) +
                   " (feedback benchmark " + detail::fmt_number(bench) + ", continuous value " +
                   detail::fmt_number(rep.riccati_cost) + "), gain gap " +
                   detail::fmt_number(rep.gain_rel_rms);
        });

    rep.ok = alive;
    return rep;
}

}  // namespace seectl
