// Release gate for the toolkit.  Ten independent criteria, each printing
// exactly one PASS/FAIL line with its runtime and measured numbers; the
// process exits nonzero if any criterion fails.  Criteria hold tolerances
// fixed at desk scale: at most 16 modes, 256 steps, and 10^4 paths, except
// the adjoint refinement check whose whole point is one doubling beyond.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <seectl/seectl.hpp>

using namespace seectl;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

GalerkinSpace scalar_space() { return build_fourier_space(1, 1, 2.0 * M_PI); }

OperatorProcess scalar_op(double v, int steps) {
    return OperatorProcess::constant(MatrixXd::Constant(1, 1, v), steps, std::abs(v));
}

/// Scalar linear-quadratic benchmark: dX = (-X + u)dt + (0.5X + u)dW
/// + (0.1X + u)dmu~, unit-weight quadratic cost, x0 = 1, T = 1.
struct Bench {
    GalerkinSpace space = scalar_space();
    MarkSpace marks{{1.0}, {1.0}};
    std::vector<MatrixXd> gammas{MatrixXd::Constant(1, 1, 0.1)};
    OperatorProcess A;
    OperatorProcess B;
    CoefficientSet coeffs = lq_coefficients(1, gammas, marks);
    CostSpec cost_spec = quadratic_tracking_cost(1, 1);
    VectorXd x0 = VectorXd::Ones(1);

    explicit Bench(int steps) : A(scalar_op(-1.0, steps)), B(scalar_op(0.5, steps)) {}
};

// --------------------------------------------------------------------------
// 1. Exact fixtures: implicit-Euler decay endpoint and pure-jump telescoping.

Outcome forward_exactness() {
    std::string detail;
    bool ok = true;
    for (int n : {64, 128}) {
        const GalerkinSpace space = scalar_space();
        const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 1, 5);
        const StateEnsemble states =
            solve_forward(space, scalar_op(-1.0, n), scalar_op(0.0, n), zero_coefficients(1, 1),
                          ControlLaw::zero(n, 1), VectorXd::Ones(1), noise);
        const double gap = std::abs(states.state(0, n)(0) - std::exp(-1.0));
        ok = ok && gap <= 2.0 / n;
        detail += "decay gap " + fmt(gap) + " (n=" + std::to_string(n) + ") ";
    }

    const int n = 64;
    const GalerkinSpace space = scalar_space();
    const MarkSpace marks{{1.0}, {1.0}};
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, marks, 16, 7);
    const StateEnsemble states = solve_forward(
        space, scalar_op(0.0, n), scalar_op(0.0, n),
        additive_jump_coefficients(1, 1, {VectorXd::Ones(1)}), ControlLaw::zero(n, 1),
        VectorXd::Zero(1), noise);
    double defect = 0.0;
    for (int p = 0; p < states.paths(); ++p) {
        double ref = 0.0;
        for (int k = 0; k < n; ++k) {
            ref += static_cast<double>(noise.jumps(p, k, 0)) - 1.0 / n;
            defect = std::max(defect, std::abs(states.state(p, k + 1)(0) - ref));
        }
    }
    ok = ok && defect == 0.0;
    return {ok, detail + "jump defect " + fmt(defect)};
}

// --------------------------------------------------------------------------
// 2. Energy identity residual decays with the step size.

Outcome ito_identity_decay() {
    const std::vector<int> grids{32, 64, 128, 256};

    std::vector<double> dts, det_res;
    for (int n : grids) {
        const Bench fx(n);
        const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 1, 5);
        const StateEnsemble states =
            solve_forward(fx.space, fx.A, scalar_op(0.0, n), zero_coefficients(1, 1),
                          ControlLaw::zero(n, 1), fx.x0, noise);
        dts.push_back(1.0 / n);
        det_res.push_back(ito_energy_audit(states, fx.A, scalar_op(0.0, n),
                                           zero_coefficients(1, 1), ControlLaw::zero(n, 1),
                                           noise, 0));
    }
    const double det_slope = loglog_slope(dts, det_res);

    std::vector<double> mc_res;
    for (int n : grids) {
        const Bench fx(n);
        const ControlLaw control = ControlLaw::zero(n, 1);
        const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, 64, 5);
        const StateEnsemble states =
            solve_forward(fx.space, fx.A, fx.B, fx.coeffs, control, fx.x0, noise);
        double sumsq = 0.0;
        for (int p = 0; p < states.paths(); ++p) {
            const double r = ito_energy_audit(states, fx.A, fx.B, fx.coeffs, control, noise, p);
            sumsq += r * r;
        }
        mc_res.push_back(std::sqrt(sumsq / states.paths()));
    }
    const double mc_slope = loglog_slope(dts, mc_res);

    return {det_slope >= 0.9 && mc_slope >= 0.4,
            "deterministic slope " + fmt(det_slope) + ", rms slope " + fmt(mc_slope)};
}

// --------------------------------------------------------------------------
// 3. Quadratic continuous dependence on a drift shift.

Outcome continuous_dependence() {
    const int n = 128;
    const Bench fx(n);
    const ControlLaw control = ControlLaw::zero(n, 1);
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, 4000, 19);

    PerturbationDirection dir;
    dir.delta = zero_coefficients(1, 1);
    dir.delta.b = [](double, const VectorXd&, const VectorXd&) {
        return VectorXd::Ones(1).eval();
    };
    dir.dx0 = VectorXd::Zero(1);

    const auto rows = continuous_dependence_experiment(fx.space, fx.A, fx.B, fx.coeffs, control,
                                                       fx.x0, dir, {0.1, 0.05, 0.025}, noise);
    std::vector<double> xs, ys;
    for (const auto& row : rows) {
        xs.push_back(row.delta);
        ys.push_back(row.sup_diff);
    }
    const double slope = loglog_slope(xs, ys);
    return {slope >= 1.9 && slope <= 2.1, "fitted slope " + fmt(slope)};
}

// --------------------------------------------------------------------------
// 4. Picard homotopy: geometric stage distances, fixed point at the direct
//    solution.

Outcome picard_contraction() {
    const int n = 64;
    const Bench fx(n);
    const ControlLaw control = ControlLaw::linear_feedback(
        std::vector<MatrixXd>(n, MatrixXd::Constant(1, 1, -0.5)),
        std::vector<VectorXd>(n, VectorXd::Zero(1)));
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, 256, 31);

    const StateEnsemble direct =
        solve_forward(fx.space, fx.A, fx.B, fx.coeffs, control, fx.x0, noise);
    const PicardResult pic =
        solve_forward_picard(fx.space, fx.A, fx.B, fx.coeffs, control, fx.x0, noise, 4, 1e-8);

    double mean_supsq = 0.0;
    for (int p = 0; p < direct.paths(); ++p) {
        double sup = 0.0;
        for (int k = 0; k <= n; ++k)
            sup = std::max(sup,
                           (pic.states.state(p, k) - direct.state(p, k)).squaredNorm());
        mean_supsq += sup / direct.paths();
    }
    const double err = std::sqrt(mean_supsq);
    return {err <= 1e-6 && pic.contraction_ratio > 0.0 && pic.contraction_ratio < 0.9,
            "fixed point error " + fmt(err) + ", stage ratio " + fmt(pic.contraction_ratio)};
}

// --------------------------------------------------------------------------
// 5. Regression adjoints against the closed-form oracle, with refinement.

double adjoint_relative_rms(int n, int paths, std::uint64_t seed) {
    const Bench fx(n);
    const RiccatiSolution ric =
        solve_riccati_lq(fx.A, fx.B, fx.gammas, fx.marks, TimeGrid{1.0, n});
    const ControlLaw law = ric.feedback();
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, paths, seed);
    const StateEnsemble states =
        solve_forward(fx.space, fx.A, fx.B, fx.coeffs, law, fx.x0, noise);

    const AdjointEnsemble ref = lq_adjoint_from_riccati(ric, states, fx.B, fx.gammas, fx.marks);
    const AdjointEnsemble est = solve_bsee_regression(states, fx.A, fx.B, fx.coeffs, fx.cost_spec,
                                                      law, noise, RegressionBasis{1});
    const double dt = 1.0 / n;
    double num = 0.0, den = 0.0;
    for (int p = 0; p < paths; ++p)
        for (int k = 0; k < n; ++k) {
            num += (est.p_at(p, k) - ref.p_at(p, k)).squaredNorm() * dt;
            den += ref.p_at(p, k).squaredNorm() * dt;
            num += (est.q_at(p, k) - ref.q_at(p, k)).squaredNorm() * dt;
            den += ref.q_at(p, k).squaredNorm() * dt;
            num += (est.r_at(p, k, 0) - ref.r_at(p, k, 0)).squaredNorm() * dt;
            den += ref.r_at(p, k, 0).squaredNorm() * dt;
        }
    return std::sqrt(num / den);
}

Outcome adjoint_oracle_agreement() {
    const double coarse = adjoint_relative_rms(128, 10000, 2024);
    const double fine = adjoint_relative_rms(256, 20000, 2024);
    return {coarse <= 0.05 && fine < coarse,
            "relative rms " + fmt(coarse) + " -> " + fmt(fine) + " after doubling"};
}

// --------------------------------------------------------------------------
// 6. Three derivative routes agree pairwise at three control points.

Outcome gradient_triad() {
    const int n = 128;
    const int paths = 4000;
    const Bench fx(n);
    const RiccatiSolution ric =
        solve_riccati_lq(fx.A, fx.B, fx.gammas, fx.marks, TimeGrid{1.0, n});
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, paths, 2024);

    // Third point: half-strength oracle feedback recorded along its own
    // closed-loop paths, so the finite difference probes the same open-loop
    // direction as the analytic routes.
    std::vector<MatrixXd> half_gains;
    for (int k = 0; k < n; ++k) half_gains.push_back(0.5 * ric.gain[static_cast<std::size_t>(k)]);
    const ControlLaw half_fb =
        ControlLaw::linear_feedback(half_gains, std::vector<VectorXd>(n, VectorXd::Zero(1)));
    const StateEnsemble closed =
        solve_forward(fx.space, fx.A, fx.B, fx.coeffs, half_fb, fx.x0, noise);
    const ControlLaw recorded =
        ControlLaw::tabulated(closed, 1, [&](int p, int k, const MatrixXd& prefix) {
            return half_fb.value(p, k, prefix.row(k).transpose());
        });

    const std::vector<ControlLaw> points{
        ControlLaw::zero(n, 1), ControlLaw::constant(n, 0.3 * VectorXd::Ones(1)), recorded};

    bool ok = true;
    double worst = 0.0;  // largest gap/tolerance ratio across all pairs
    for (const ControlLaw& u : points) {
        const ControlLaw v = u.shifted(MatrixXd::Ones(n, 1));
        const StateEnsemble base =
            solve_forward(fx.space, fx.A, fx.B, fx.coeffs, u, fx.x0, noise);
        const StateEnsemble var =
            solve_variational(fx.space, fx.A, fx.B, fx.coeffs, base, u, v, noise);
        const AdjointEnsemble adj = solve_bsee_regression(base, fx.A, fx.B, fx.coeffs,
                                                          fx.cost_spec, u, noise,
                                                          RegressionBasis{1});
        const Derivative via_var = gateaux_via_variation(base, var, u, v, fx.cost_spec);
        const Derivative via_adj =
            gateaux_via_adjoint(base, adj, fx.coeffs, fx.cost_spec, u, v, fx.marks);

        const double eps = 1e-3;
        const MatrixXd bump = MatrixXd::Constant(n, 1, eps);
        const StateEnsemble plus =
            solve_forward(fx.space, fx.A, fx.B, fx.coeffs, u.shifted(bump), fx.x0, noise);
        const StateEnsemble minus =
            solve_forward(fx.space, fx.A, fx.B, fx.coeffs, u.shifted(-bump), fx.x0, noise);
        std::vector<double> fd(static_cast<std::size_t>(paths));
        const ControlLaw up = u.shifted(bump);
        const ControlLaw um = u.shifted(-bump);
        for (int p = 0; p < paths; ++p) {
            double jp = 0.0, jm = 0.0;
            for (int k = 0; k < n; ++k) {
                const double t = static_cast<double>(k) / n;
                jp += fx.cost_spec.l(t, plus.state(p, k), up.value(p, k, plus.state(p, k))) / n;
                jm += fx.cost_spec.l(t, minus.state(p, k), um.value(p, k, minus.state(p, k))) / n;
            }
            jp += fx.cost_spec.terminal(plus.state(p, n));
            jm += fx.cost_spec.terminal(minus.state(p, n));
            fd[static_cast<std::size_t>(p)] = (jp - jm) / (2.0 * eps);
        }
        const MeanStderr fd_ms = mean_stderr(fd);

        const double scale =
            std::max({std::abs(via_var.value), std::abs(via_adj.value), std::abs(fd_ms.mean)});
        const auto pair_gap = [&](double a, double b, double sa, double sb) {
            const double tol = std::max(3.0 * std::sqrt(sa * sa + sb * sb), 0.02 * scale);
            worst = std::max(worst, std::abs(a - b) / tol);
            if (std::abs(a - b) > tol) ok = false;
        };
        pair_gap(via_var.value, via_adj.value, via_var.stderr_, via_adj.stderr_);
        pair_gap(via_var.value, fd_ms.mean, via_var.stderr_, fd_ms.stderr_);
        pair_gap(via_adj.value, fd_ms.mean, via_adj.stderr_, fd_ms.stderr_);
    }
    return {ok, "worst gap at " + fmt(100.0 * worst) + "% of tolerance"};
}

// --------------------------------------------------------------------------
// 7. Stationarity residual under the oracle feedback, plus the sufficient
//    conditions audit.

double smp_under_feedback(int n, int paths, std::uint64_t seed) {
    const Bench fx(n);
    const RiccatiSolution ric =
        solve_riccati_lq(fx.A, fx.B, fx.gammas, fx.marks, TimeGrid{1.0, n});
    const ControlLaw law = ric.feedback();
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, paths, seed);
    const StateEnsemble states =
        solve_forward(fx.space, fx.A, fx.B, fx.coeffs, law, fx.x0, noise);
    const AdjointEnsemble adj = solve_bsee_regression(states, fx.A, fx.B, fx.coeffs, fx.cost_spec,
                                                      law, noise, RegressionBasis{1});
    return smp_residual(states, adj, fx.coeffs, fx.cost_spec, law, fx.marks);
}

Outcome maximum_principle_and_verification() {
    const double s32 = smp_under_feedback(32, 2000, 17);
    const double s64 = smp_under_feedback(64, 2000, 17);
    const double s128 = smp_under_feedback(128, 2000, 17);
    const double ratio = s64 / s32;

    const int n = 64;
    const Bench fx(n);
    const RiccatiSolution ric =
        solve_riccati_lq(fx.A, fx.B, fx.gammas, fx.marks, TimeGrid{1.0, n});
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, 2000, 17);
    VerificationOptions vo;
    vo.perturbation_count = 20;
    const VerificationReport rep = verification_check(
        fx.space, fx.A, fx.B, fx.coeffs, fx.cost_spec, fx.marks, ric.feedback(), fx.x0, noise,
        vo);

    const bool ok = s128 <= 1e-2 && ratio <= 0.6 && rep.all_ok();
    return {ok, "residual " + fmt(s128) + " at n=128, halving ratio " + fmt(ratio) +
                    ", verification " + (rep.all_ok() ? "ok" : "violated") + " (z " +
                    fmt(rep.worst_perturbation_z) + ")"};
}

// --------------------------------------------------------------------------
// 8. Both optimizers recover the optimum from zero; closed-form control
//    identity against both adjoint sources.

Outcome optimizer_recovery() {
    const int n = 128;
    Bench fx(n);
    const RiccatiSolution ric =
        solve_riccati_lq(fx.A, fx.B, fx.gammas, fx.marks, TimeGrid{1.0, n});
    const ControlLaw start = ControlLaw::linear_feedback(
        std::vector<MatrixXd>(n, MatrixXd::Zero(1, 1)),
        std::vector<VectorXd>(n, VectorXd::Zero(1)));

    // The comparison target is the oracle feedback cost on the optimizer's
    // own noise, which shares its Monte Carlo and discretization bias.
    const NoiseEnsemble big = sample_noise(TimeGrid{1.0, n}, fx.marks, 10000, 2024);
    const StateEnsemble fb = solve_forward(fx.space, fx.A, fx.B, fx.coeffs, ric.feedback(),
                                           fx.x0, big);
    const double bench_big = cost(fb, ric.feedback(), fx.cost_spec).value;

    OptimizeOptions ho;
    ho.residual_tol = 1e-2;
    ho.max_outer = 30;
    const OptimizeResult ham = optimize_hamiltonian_iteration(
        fx.space, fx.A, fx.B, fx.coeffs, fx.cost_spec, fx.marks, start, fx.x0, big, ho);
    const double ham_rel = std::abs(ham.final_cost.value - bench_big) / bench_big;
    const double gains = gain_gap(ham.control, ric);

    // The gradient method needs more outer iterations per unit of progress;
    // a smaller bundle keeps it inside the budget.
    const NoiseEnsemble small = sample_noise(TimeGrid{1.0, n}, fx.marks, 4000, 2024);
    const StateEnsemble fb_small =
        solve_forward(fx.space, fx.A, fx.B, fx.coeffs, ric.feedback(), fx.x0, small);
    const double bench_small = cost(fb_small, ric.feedback(), fx.cost_spec).value;
    OptimizeOptions go;
    go.residual_tol = 8e-3;
    go.max_outer = 80;
    const OptimizeResult grad = optimize_projected_gradient(
        fx.space, fx.A, fx.B, fx.coeffs, fx.cost_spec, fx.marks, start, fx.x0, small, go);
    const double grad_rel = std::abs(grad.final_cost.value - bench_small) / bench_small;

    const AdjointEnsemble exact = lq_adjoint_from_riccati(ric, fb, fx.B, fx.gammas, fx.marks);
    const ClosedFormGap exact_gap = closed_form_gap(fb, exact, fx.marks, ric);
    const AdjointEnsemble reg = solve_bsee_regression(fb, fx.A, fx.B, fx.coeffs, fx.cost_spec,
                                                      ric.feedback(), big, RegressionBasis{1});
    const ClosedFormGap reg_gap = closed_form_gap(fb, reg, fx.marks, ric);

    const bool ok = ham.converged && ham_rel <= 0.01 && gains <= 0.05 && grad.converged &&
                    grad_rel <= 0.01 && exact_gap.sup_abs <= 1e-10 && reg_gap.rel_rms <= 0.05;
    return {ok, "cost rel " + fmt(ham_rel) + "/" + fmt(grad_rel) + ", gain rms " + fmt(gains) +
                    ", closed form " + fmt(exact_gap.sup_abs) + "/" + fmt(reg_gap.rel_rms)};
}

// --------------------------------------------------------------------------
// 9. Structural hand values: coercivity, parabolicity, Lipschitz, adjoints.

Outcome structural_audits() {
    bool ok = true;
    std::string detail;

    // Canonical spectral configuration is coercive.
    CauchyConfig cfg = canonical_lq_config();
    cfg.modes = 3;
    cfg.x0 = VectorXd::Ones(3);
    cfg.steps = 32;
    cfg.paths = 16;
    const ControlProblem prob = build_cauchy_problem(cfg);
    const CoercivityReport spectral = check_coercivity(prob.A, prob.B, prob.space, prob.grid);
    ok = ok && spectral.satisfied;
    detail += "spectral alpha " + fmt(spectral.alpha);

    // Scalar dissipation pins alpha = 2c.
    const TimeGrid unit{1.0, 1};
    double alpha_err = 0.0;
    for (double c : {0.5, 1.0, 2.0}) {
        const CoercivityReport rep =
            check_coercivity(scalar_op(-c, 1), scalar_op(0.0, 1), scalar_space(), unit);
        ok = ok && rep.satisfied;
        alpha_err = std::max(alpha_err, std::abs(rep.alpha - 2.0 * c));
    }
    ok = ok && alpha_err <= 1e-9;
    detail += ", alpha defect " + fmt(alpha_err);

    // Parabolicity margins by hand: 2a - eta^2 vs kappa, and the upper bound.
    const auto cc = [](double v) { return constant_coefficient(v); };
    ok = ok && check_superparabolic(cc(1.0), cc(1.0), 0.5, unit, 16);
    ok = ok && !check_superparabolic(cc(0.5), cc(1.0), 0.5, unit, 16);
    ok = ok && !check_superparabolic(cc(1.0), cc(0.1), 0.5, unit, 16, 2.0 * M_PI, 1.9);
    ok = ok && check_superparabolic(cc(1.0), cc(0.1), 0.5, unit, 16, 2.0 * M_PI, 2.0);

    // Lipschitz probe recovers the declared jump factor.
    const MarkSpace marks{{1.0}, {1.0}};
    const double lip = check_lipschitz(
        lq_coefficients(1, {MatrixXd::Constant(1, 1, 0.1)}, marks), scalar_space(), marks, unit);
    ok = ok && std::abs(lip - 0.1) <= 1e-9;
    detail += ", lipschitz " + fmt(lip);

    // Assembled adjoints are exact transposes.
    double transpose_defect = 0.0;
    for (const OperatorProcess* op : {&prob.A, &prob.B}) {
        const OperatorProcess adj = adjoint_of(*op);
        transpose_defect = std::max(
            transpose_defect, (adj.at(0) - op->at(0).transpose()).cwiseAbs().maxCoeff());
    }
    ok = ok && transpose_defect == 0.0;
    detail += ", transpose defect " + fmt(transpose_defect);
    return {ok, detail};
}

// --------------------------------------------------------------------------
// 10. CLI artifacts are byte identical across reruns and thread counts.

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) return "<unreadable>";
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

Outcome artifact_reproducibility() {
    const fs::path root = fs::temp_directory_path() / "seectl_acceptance10";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string config = (fs::path(SEECTL_CONFIG_DIR) / "repro.json").string();

    const auto run = [&](const std::string& name, int threads) {
        const fs::path out = root / name;
        const std::string cmd = std::string(SEECTL_CLI_PATH) + " simulate --config " + config +
                                " --out " + out.string() + " --threads " +
                                std::to_string(threads) + " >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) && WEXITSTATUS(status) == 0;
    };

    bool ok = run("a", 1) && run("b", 8) && run("c", 1);
    int mismatched = 0;
    for (const char* name : {"states.bin", "noise.bin", "states.csv", "estimate.json",
                             "manifest.json"}) {
        const std::string ref = read_file(root / "a" / name);
        if (read_file(root / "b" / name) != ref) ++mismatched;
        if (read_file(root / "c" / name) != ref) ++mismatched;
    }
    ok = ok && mismatched == 0;
    fs::remove_all(root);
    return {ok, std::to_string(mismatched) + " artifact mismatches across threads and reruns"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"forward exactness fixtures", forward_exactness},
        {"ito identity residual decay", ito_identity_decay},
        {"continuous dependence rate", continuous_dependence},
        {"picard contraction", picard_contraction},
        {"adjoint oracle agreement", adjoint_oracle_agreement},
        {"gradient triad consistency", gradient_triad},
        {"maximum principle and verification", maximum_principle_and_verification},
        {"optimizer recovery", optimizer_recovery},
        {"structural audits", structural_audits},
        {"artifact reproducibility", artifact_reproducibility},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = criteria[i].second();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!out.pass) ++failures;
        std::printf("[%s] %2zu %-36s %6.1fs  %s\n", out.pass ? "PASS" : "FAIL", i + 1,
                    criteria[i].first.c_str(), secs, out.detail.c_str());
        std::fflush(stdout);
    }
    if (failures) std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
