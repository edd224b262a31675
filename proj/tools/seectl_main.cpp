// Configuration-driven experiment runner.  Subcommands expose the forward
// solver, the structural audits, the control optimizers, and the end-to-end
// linear-quadratic demonstration; every run leaves machine-readable
// artifacts plus a manifest sufficient to reproduce them bit-exactly.
//
// Exit codes: 0 success, 1 numerical check failure, 2 usage/config error.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <seectl/seectl.hpp>

namespace fs = std::filesystem;
using namespace seectl;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    bool threads_set = false;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "experiment config file")->required();
    sub->add_option("--out", args.out_dir, "output directory");
    sub->add_option("--seed", args.seed, "override the config seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
    sub->add_option("--threads", args.threads, "worker thread cap")
        ->each([&args](const std::string&) { args.threads_set = true; });
}

ExperimentConfig load_with_overrides(const CommonArgs& args) {
    ExperimentConfig cfg = load_experiment_config(args.config_path);
    if (args.seed_set) cfg.problem.seed = args.seed;
    if (args.threads_set) {
        if (args.threads < 1) throw ConfigError("--threads must be >= 1");
        cfg.threads = args.threads;
        cfg.problem.threads = args.threads;
    }
    return cfg;
}

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void finish_manifest(const std::string& out, const std::string& subcommand,
                     const ExperimentConfig& cfg, std::vector<std::string> artifacts) {
    nlohmann::json manifest =
        make_manifest(subcommand, fnv1a_hex(cfg.raw), cfg.problem.seed, std::move(artifacts));
    write_json_file(join(out, "manifest.json"), manifest);
}

int cmd_simulate(const ExperimentConfig& cfg, const std::string& out) {
    const ControlProblem prob = build_experiment_problem(cfg);
    const ControlLaw control = make_experiment_control(cfg, prob);
    const NoiseEnsemble noise =
        sample_noise(prob.grid, prob.marks, cfg.problem.paths, cfg.problem.seed, cfg.threads);
    const StateEnsemble states =
        solve_forward(prob.space, prob.A, prob.B, prob.coeffs, control, prob.x0, noise,
                      cfg.threads);
    const EstimateReport est =
        estimate_apriori(states, prob.space, prob.coeffs, control, prob.marks);

    write_state_csv(join(out, "states.csv"), states);
    write_state_cache(join(out, "states.bin"), states);
    write_noise_cache(join(out, "noise.bin"), noise);
    write_json_file(join(out, "estimate.json"), estimate_json(est));
    finish_manifest(out, "simulate", cfg,
                    {"estimate.json", "noise.bin", "states.bin", "states.csv"});
    return 0;
}

int cmd_audit(const ExperimentConfig& cfg, const std::string& out) {
    const ControlProblem prob = build_experiment_problem(cfg);
    const ControlLaw control = make_experiment_control(cfg, prob);
    nlohmann::json report;
    bool all_ok = true;

    const CoercivityReport co = check_coercivity(prob.A, prob.B, prob.space, prob.grid);
    report["coercivity"] = coercivity_json(co);
    report["coercivity"]["pass"] = co.satisfied;
    all_ok = all_ok && co.satisfied;

    const double lip = check_lipschitz(prob.coeffs, prob.space, prob.marks, prob.grid);
    const bool lip_ok = lip <= prob.coeffs.lipschitz_bound + cfg.audit.lipschitz_tol;
    report["lipschitz"] = {{"measured", lip},
                           {"declared", prob.coeffs.lipschitz_bound},
                           {"pass", lip_ok}};
    all_ok = all_ok && lip_ok;

    {
        const NoiseEnsemble noise = sample_noise(prob.grid, prob.marks, cfg.audit.ito_paths,
                                                 cfg.problem.seed, cfg.threads);
        const StateEnsemble states = solve_forward(prob.space, prob.A, prob.B, prob.coeffs,
                                                   control, prob.x0, noise, cfg.threads);
        double sumsq = 0.0;
        for (int p = 0; p < states.paths(); ++p) {
            const double res =
                ito_energy_audit(states, prob.A, prob.B, prob.coeffs, control, noise, p);
            sumsq += res * res;
        }
        const double rms = std::sqrt(sumsq / states.paths());
        const bool ito_ok = rms <= cfg.audit.ito_rms_max;
        report["ito_energy"] = {{"rms_residual", rms}, {"pass", ito_ok}};
        all_ok = all_ok && ito_ok;
    }

    {
        const NoiseEnsemble noise = sample_noise(prob.grid, prob.marks, cfg.audit.dependence_paths,
                                                 cfg.problem.seed, cfg.threads);
        PerturbationDirection dir;
        dir.delta = zero_coefficients(prob.coeffs.state_dim, prob.coeffs.control_dim);
        const int N = prob.coeffs.state_dim;
        dir.delta.b = [N](double, const VectorXd&, const VectorXd&) {
            return VectorXd::Ones(N).eval();
        };
        dir.dx0 = VectorXd::Zero(N);
        const auto rows = continuous_dependence_experiment(prob.space, prob.A, prob.B, prob.coeffs,
                                                           control, prob.x0, dir,
                                                           cfg.audit.deltas, noise, cfg.threads);
        std::vector<double> xs, ys;
        nlohmann::json sweep = nlohmann::json::array();
        for (const auto& row : rows) {
            xs.push_back(row.delta);
            ys.push_back(row.sup_diff);
            sweep.push_back({{"delta", row.delta},
                             {"sup_diff", row.sup_diff},
                             {"intv_diff", row.intv_diff},
                             {"data_term", row.data_term}});
        }
        const double slope = loglog_slope(xs, ys);
        const bool dep_ok = slope >= cfg.audit.slope_lo && slope <= cfg.audit.slope_hi;
        report["dependence"] = {{"slope", slope}, {"sweep", sweep}, {"pass", dep_ok}};
        all_ok = all_ok && dep_ok;
    }

    report["pass"] = all_ok;
    write_json_file(join(out, "audit.json"), report);
    finish_manifest(out, "audit", cfg, {"audit.json"});
    return all_ok ? 0 : 1;
}

int cmd_optimize(const ExperimentConfig& cfg, const std::string& out) {
    const ControlProblem prob = build_experiment_problem(cfg);
    const NoiseEnsemble noise =
        sample_noise(prob.grid, prob.marks, cfg.problem.paths, cfg.problem.seed, cfg.threads);
    const int n = prob.grid.steps;
    const int N = prob.space.dim;
    const int U = prob.coeffs.control_dim;

    ControlLaw initial = ControlLaw::zero(n, U);
    if (cfg.optimize.klass == "linear_feedback") {
        initial = ControlLaw::linear_feedback(std::vector<MatrixXd>(n, MatrixXd::Zero(U, N)),
                                              std::vector<VectorXd>(n, VectorXd::Zero(U)));
    } else if (cfg.optimize.klass == "tabulated") {
        const StateEnsemble warm = solve_forward(prob.space, prob.A, prob.B, prob.coeffs,
                                                 ControlLaw::zero(n, U), prob.x0, noise,
                                                 cfg.threads);
        initial = ControlLaw::tabulated(
            warm, U, [U](int, int, const auto&) { return VectorXd::Zero(U).eval(); });
    }
    if (cfg.control.kind != "zero") {
        // A configured control seeds the iteration when its class matches.
        const ControlLaw seed_law = make_experiment_control(cfg, prob);
        if ((cfg.optimize.klass == "open_loop" &&
             seed_law.kind() == ControlLaw::Kind::open_loop) ||
            (cfg.optimize.klass == "linear_feedback" &&
             seed_law.kind() == ControlLaw::Kind::linear_feedback))
            initial = seed_law;
    }
    if (cfg.control.box) initial = initial.with_box(cfg.control.box->first, cfg.control.box->second);

    OptimizeOptions opts = cfg.optimize.options;
    opts.threads = cfg.threads;
    const OptimizeResult result =
        cfg.optimize.method == "gradient"
            ? optimize_projected_gradient(prob.space, prob.A, prob.B, prob.coeffs, prob.cost,
                                          prob.marks, initial, prob.x0, noise, opts)
            : optimize_hamiltonian_iteration(prob.space, prob.A, prob.B, prob.coeffs, prob.cost,
                                             prob.marks, initial, prob.x0, noise, opts);

    VerificationOptions vo;
    vo.threads = cfg.threads;
    vo.stationarity_tol = opts.residual_tol;
    const VerificationReport ver =
        verification_check(prob.space, prob.A, prob.B, prob.coeffs, prob.cost, prob.marks,
                           result.control, prob.x0, noise, vo);

    write_trace_csv(join(out, "trace.csv"), result.trace);
    write_control_law(join(out, "control.txt"), result.control);
    write_json_file(join(out, "verification.json"), verification_json(ver));
    nlohmann::json summary = {{"converged", result.converged},
                              {"failure_reason", result.failure_reason},
                              {"final_cost", result.final_cost.value},
                              {"final_cost_stderr", result.final_cost.stderr_},
                              {"iterations", result.trace.size()}};
    write_json_file(join(out, "optimize.json"), summary);
    finish_manifest(out, "optimize", cfg,
                    {"control.txt", "optimize.json", "trace.csv", "verification.json"});
    return result.converged ? 0 : 1;
}

int cmd_example8(const ExperimentConfig& cfg, const std::string& out) {
    const ExampleReport rep = run_example_end_to_end(cfg.problem, cfg.example);
    write_json_file(join(out, "example8.json"), example_report_json(rep));
    {
        std::ofstream os(join(out, "stages.csv"));
        os << "stage,ran,ok,detail\n";
        for (const auto& s : rep.stages) {
            std::string detail = s.detail;
            for (char& c : detail)
                if (c == ',' || c == '\n') c = ';';
            os << s.name << ',' << (s.ran ? 1 : 0) << ',' << (s.ok ? 1 : 0) << ',' << detail
               << '\n';
        }
    }
    write_trace_csv(join(out, "trace.csv"), rep.optimize.trace);
    finish_manifest(out, "example8", cfg, {"example8.json", "stages.csv", "trace.csv"});
    return rep.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"controlled stochastic evolution equation toolkit"};
    app.require_subcommand(1);
    CommonArgs args;

    CLI::App* sim = app.add_subcommand("simulate", "solve the forward equation, export paths");
    CLI::App* aud = app.add_subcommand("audit", "structural and well-posedness audits");
    CLI::App* opt = app.add_subcommand("optimize", "control optimization with verification");
    CLI::App* ex8 = app.add_subcommand("example8", "end-to-end linear-quadratic demonstration");
    for (CLI::App* sub : {sim, aud, opt, ex8}) add_common(sub, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const ExperimentConfig cfg = load_with_overrides(args);
        fs::create_directories(args.out_dir);
        if (sim->parsed()) return cmd_simulate(cfg, args.out_dir);
        if (aud->parsed()) return cmd_audit(cfg, args.out_dir);
        if (opt->parsed()) return cmd_optimize(cfg, args.out_dir);
        return cmd_example8(cfg, args.out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
