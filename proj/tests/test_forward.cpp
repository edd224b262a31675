#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include <seectl/errors.hpp>
#include <seectl/forward.hpp>
#include <seectl/galerkin.hpp>
#include <seectl/grid.hpp>
#include <seectl/noise.hpp>
#include <seectl/problem.hpp>

using namespace seectl;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

GalerkinSpace scalar_space() { return build_fourier_space(1, 1, 2.0 * M_PI); }

OperatorProcess scalar_op(double v, int steps) {
    return OperatorProcess::constant(MatrixXd::Constant(1, 1, v), steps, std::abs(v));
}

struct LqFixture {
    GalerkinSpace space = scalar_space();
    MarkSpace marks{{1.0}, {1.0}};
    OperatorProcess A, B;
    CoefficientSet coeffs;
    VectorXd x0 = VectorXd::Ones(1);

    explicit LqFixture(int steps)
        : A(scalar_op(-1.0, steps)), B(scalar_op(0.5, steps)),
          coeffs(lq_coefficients(1, {MatrixXd::Constant(1, 1, 0.1)}, marks)) {}
};

}  // namespace

TEST_CASE("zero dynamics freeze the state", "[forward]") {
    const GalerkinSpace space = build_fourier_space(1, 3, 2.0 * M_PI);
    const int n = 16;
    const OperatorProcess zero = OperatorProcess::constant(MatrixXd::Zero(3, 3), n, 0.0);
    const CoefficientSet coeffs = zero_coefficients(3, 1);
    VectorXd x0(3);
    x0 << 0.3, -0.2, 0.1;
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 4, 1);
    const StateEnsemble states =
        solve_forward(space, zero, zero, coeffs, ControlLaw::zero(n, 1), x0, noise);
    for (int p = 0; p < states.paths(); ++p)
        for (int k = 0; k <= n; ++k) CHECK((states.state(p, k) - x0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("deterministic decay matches the implicit euler product", "[forward]") {
    for (int n : {64, 128}) {
        const double dt = 1.0 / n;
        const LqFixture fx(n);
        const OperatorProcess B0 = scalar_op(0.0, n);
        const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 1, 3);
        const StateEnsemble states =
            solve_forward(fx.space, fx.A, B0, zero_coefficients(1, 1), ControlLaw::zero(n, 1),
                          fx.x0, noise);

        double ref = 1.0;
        for (int k = 1; k <= n; ++k) {
            ref = ref / (1.0 + dt);
            CHECK(states.state(0, k)(0) == ref);
        }
        CHECK(std::abs(states.state(0, n)(0) - std::exp(-1.0)) <= 2.0 * dt);
    }
    // Frozen endpoint for the n = 128 grid.
    {
        const int n = 128;
        const LqFixture fx(n);
        const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 1, 3);
        const StateEnsemble states =
            solve_forward(fx.space, fx.A, scalar_op(0.0, n), zero_coefficients(1, 1),
                          ControlLaw::zero(n, 1), fx.x0, noise);
        CHECK(states.state(0, n)(0) ==
              Catch::Approx(0.36931181060249219).epsilon(1e-14));
    }
}

TEST_CASE("pure jump integration is exact", "[forward]") {
    const int n = 128;
    const GalerkinSpace space = scalar_space();
    const MarkSpace marks{{1.0}, {1.0}};
    const OperatorProcess zero = scalar_op(0.0, n);
    const CoefficientSet coeffs = additive_jump_coefficients(1, 1, {VectorXd::Ones(1)});
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, marks, 16, 7);
    const StateEnsemble states = solve_forward(space, zero, zero, coeffs,
                                               ControlLaw::zero(n, 1), VectorXd::Zero(1), noise);
    const double dt = 1.0 / n;
    for (int p = 0; p < states.paths(); ++p) {
        double ref = 0.0;
        for (int k = 0; k < n; ++k) {
            ref = ref + (static_cast<double>(noise.jumps(p, k, 0)) - dt);
            CHECK(states.state(p, k + 1)(0) == ref);
        }
    }
}

TEST_CASE("ito audit vanishes for a frozen state", "[forward]") {
    const int n = 16;
    const GalerkinSpace space = scalar_space();
    const OperatorProcess zero = scalar_op(0.0, n);
    const CoefficientSet coeffs = zero_coefficients(1, 1);
    const ControlLaw control = ControlLaw::zero(n, 1);
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 4, 11);
    const StateEnsemble states =
        solve_forward(space, zero, zero, coeffs, control, VectorXd::Zero(1), noise);
    for (int p = 0; p < states.paths(); ++p)
        CHECK(ito_energy_audit(states, zero, zero, coeffs, control, noise, p) == 0.0);
}

TEST_CASE("ito audit residual decays with the step size", "[forward]") {
    const std::vector<int> grids{32, 64, 128, 256};

    // Deterministic decay: the residual is pure discretization error.
    {
        std::vector<double> dts, res;
        for (int n : grids) {
            const LqFixture fx(n);
            const OperatorProcess B0 = scalar_op(0.0, n);
            const CoefficientSet coeffs = zero_coefficients(1, 1);
            const ControlLaw control = ControlLaw::zero(n, 1);
            const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 1, 5);
            const StateEnsemble states =
                solve_forward(fx.space, fx.A, B0, coeffs, control, fx.x0, noise);
            dts.push_back(1.0 / n);
            res.push_back(ito_energy_audit(states, fx.A, B0, coeffs, control, noise, 0));
        }
        CHECK(loglog_slope(dts, res) >= 0.9);
    }

    // Noisy benchmark: root mean square residual over a path bundle.
    {
        std::vector<double> dts, res;
        for (int n : grids) {
            const LqFixture fx(n);
            const ControlLaw control = ControlLaw::zero(n, 1);
            const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, 64, 5);
            const StateEnsemble states =
                solve_forward(fx.space, fx.A, fx.B, fx.coeffs, control, fx.x0, noise);
            double sumsq = 0.0;
            for (int p = 0; p < states.paths(); ++p) {
                const double r = ito_energy_audit(states, fx.A, fx.B, fx.coeffs, control, noise, p);
                sumsq += r * r;
            }
            dts.push_back(1.0 / n);
            res.push_back(std::sqrt(sumsq / states.paths()));
        }
        CHECK(loglog_slope(dts, res) >= 0.4);
    }
}

TEST_CASE("forward solver guards against blow-up and singular steps", "[forward]") {
    const GalerkinSpace space = scalar_space();
    const CoefficientSet coeffs = zero_coefficients(1, 1);
    {
        const int n = 64;
        const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 1, 1);
        CHECK_THROWS_AS(solve_forward(space, scalar_op(30.0, n), scalar_op(0.0, n), coeffs,
                                      ControlLaw::zero(n, 1), VectorXd::Ones(1), noise),
                        SolverError);
    }
    {
        // 1 - dt * 4 = 0 at dt = 0.25.
        const int n = 4;
        const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 1, 1);
        CHECK_THROWS_WITH(solve_forward(space, scalar_op(4.0, n), scalar_op(0.0, n), coeffs,
                                        ControlLaw::zero(n, 1), VectorXd::Ones(1), noise),
                          Catch::Matchers::ContainsSubstring("singular"));
    }
}

TEST_CASE("forward solver validates shapes", "[forward]") {
    const int n = 8;
    const GalerkinSpace space = build_fourier_space(1, 3, 2.0 * M_PI);
    const OperatorProcess zero3 = OperatorProcess::constant(MatrixXd::Zero(3, 3), n, 0.0);
    const OperatorProcess zero2 = OperatorProcess::constant(MatrixXd::Zero(2, 2), n, 0.0);
    const CoefficientSet coeffs = zero_coefficients(3, 1);
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 2, 1);

    CHECK_THROWS_AS(solve_forward(space, zero3, zero3, coeffs, ControlLaw::zero(n, 1),
                                  VectorXd::Zero(2), noise),
                    ConfigError);
    CHECK_THROWS_AS(solve_forward(space, zero2, zero2, coeffs, ControlLaw::zero(n, 1),
                                  VectorXd::Zero(3), noise),
                    ConfigError);
    CHECK_THROWS_AS(solve_forward(space, zero3, zero3, coeffs, ControlLaw::zero(n - 1, 1),
                                  VectorXd::Zero(3), noise),
                    ConfigError);
}

TEST_CASE("a priori estimate scales quadratically in the data", "[forward]") {
    const int n = 32;
    const GalerkinSpace space = scalar_space();
    const CoefficientSet coeffs = zero_coefficients(1, 1);
    const ControlLaw control = ControlLaw::zero(n, 1);
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 1, 13);

    // Zero data: zero solution and zero driver mass.
    {
        const StateEnsemble states =
            solve_forward(space, scalar_op(0.0, n), scalar_op(0.0, n), coeffs, control,
                          VectorXd::Zero(1), noise);
        const EstimateReport rep = estimate_apriori(states, space, coeffs, control, MarkSpace{});
        CHECK(rep.sup_h_sq == 0.0);
        CHECK(rep.int_v_sq == 0.0);
        CHECK(rep.driver_mass == 0.0);
    }

    // Scaling the initial datum by c scales the solution mass by c^2 and
    // leaves the ratio unchanged.
    const OperatorProcess A = scalar_op(-1.0, n);
    const OperatorProcess B0 = scalar_op(0.0, n);
    const StateEnsemble s1 =
        solve_forward(space, A, B0, coeffs, control, VectorXd::Ones(1), noise);
    const StateEnsemble s3 =
        solve_forward(space, A, B0, coeffs, control, 3.0 * VectorXd::Ones(1), noise);
    const EstimateReport r1 = estimate_apriori(s1, space, coeffs, control, MarkSpace{});
    const EstimateReport r3 = estimate_apriori(s3, space, coeffs, control, MarkSpace{});
    CHECK(r3.sup_h_sq == Catch::Approx(9.0 * r1.sup_h_sq).epsilon(1e-12));
    CHECK(r3.int_v_sq == Catch::Approx(9.0 * r1.int_v_sq).epsilon(1e-12));
    CHECK(r3.ratio == Catch::Approx(r1.ratio).epsilon(1e-12));
}

TEST_CASE("a priori ratio is stable under doubling the ensemble", "[forward]") {
    const int n = 32;
    const LqFixture fx(n);
    const ControlLaw control = ControlLaw::constant(n, 0.5 * VectorXd::Ones(1));
    EstimateReport reps[2];
    int idx = 0;
    for (int paths : {1000, 2000}) {
        const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, paths, 17);
        const StateEnsemble states =
            solve_forward(fx.space, fx.A, fx.B, fx.coeffs, control, fx.x0, noise);
        reps[idx++] = estimate_apriori(states, fx.space, fx.coeffs, control, fx.marks);
    }
    CHECK(reps[0].ratio > 0.0);
    CHECK(reps[1].ratio == Catch::Approx(reps[0].ratio).epsilon(0.15));
}

TEST_CASE("dependence on a coefficient shift is quadratic", "[forward]") {
    const int n = 32;
    const LqFixture fx(n);
    const ControlLaw control = ControlLaw::zero(n, 1);
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, 400, 19);

    PerturbationDirection dir;
    dir.delta = zero_coefficients(1, 1);
    dir.delta.b = [](double, const VectorXd&, const VectorXd&) {
        return VectorXd::Ones(1).eval();
    };
    dir.dx0 = VectorXd::Zero(1);

    // delta = 0 reproduces the base path bit for bit.
    {
        const auto rows = continuous_dependence_experiment(fx.space, fx.A, fx.B, fx.coeffs,
                                                           control, fx.x0, dir, {0.0}, noise);
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].sup_diff == 0.0);
        CHECK(rows[0].intv_diff == 0.0);
    }

    const auto rows = continuous_dependence_experiment(fx.space, fx.A, fx.B, fx.coeffs, control,
                                                       fx.x0, dir, {0.1, 0.05, 0.025}, noise);
    std::vector<double> xs, ys;
    for (const auto& row : rows) {
        xs.push_back(row.delta);
        ys.push_back(row.sup_diff);
        CHECK(row.data_term > 0.0);
    }
    const double slope = loglog_slope(xs, ys);
    CHECK(slope >= 1.9);
    CHECK(slope <= 2.1);
}

TEST_CASE("dependence on the initial datum has a constant quadratic ratio", "[forward]") {
    const int n = 32;
    const LqFixture fx(n);
    const ControlLaw control = ControlLaw::zero(n, 1);
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, 200, 23);

    PerturbationDirection dir;
    dir.delta = zero_coefficients(1, 1);
    dir.dx0 = VectorXd::Ones(1);

    const auto rows = continuous_dependence_experiment(fx.space, fx.A, fx.B, fx.coeffs, control,
                                                       fx.x0, dir, {0.2, 0.1, 0.05}, noise);
    REQUIRE(rows.size() == 3);
    const double base = rows[0].sup_diff / (0.2 * 0.2);
    CHECK(rows[1].sup_diff / (0.1 * 0.1) == Catch::Approx(base).epsilon(1e-6));
    CHECK(rows[2].sup_diff / (0.05 * 0.05) == Catch::Approx(base).epsilon(1e-6));
}

TEST_CASE("log-log slope of an exact square law", "[forward]") {
    const std::vector<double> xs{0.1, 0.05, 0.025, 0.0125};
    std::vector<double> ys;
    for (double x : xs) ys.push_back(3.7 * x * x);
    CHECK(loglog_slope(xs, ys) == Catch::Approx(2.0).margin(1e-12));
    CHECK_THROWS_AS(loglog_slope({1.0}, {1.0}), ConfigError);
    CHECK_THROWS_AS(loglog_slope({1.0, 2.0}, {1.0}), ConfigError);
}

TEST_CASE("fixed point iteration reproduces the direct solve", "[forward]") {
    // State-independent drivers converge in a single pass per stage.
    {
        const int n = 16;
        const GalerkinSpace space = scalar_space();
        const OperatorProcess A = scalar_op(-1.0, n);
        const OperatorProcess B = scalar_op(0.0, n);
        const CoefficientSet coeffs = zero_coefficients(1, 1);
        const ControlLaw control = ControlLaw::zero(n, 1);
        const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 3, 29);

        const StateEnsemble direct =
            solve_forward(space, A, B, coeffs, control, VectorXd::Ones(1), noise);
        const PicardResult pic = solve_forward_picard(space, A, B, coeffs, control,
                                                      VectorXd::Ones(1), noise, 4);
        CHECK(pic.total_iterations == 4);
        for (int p = 0; p < direct.paths(); ++p)
            for (int k = 0; k <= n; ++k)
                CHECK((pic.states.state(p, k) - direct.state(p, k)).cwiseAbs().maxCoeff() == 0.0);
    }

    // Feedback-coupled benchmark: geometric stage distances and agreement
    // with the direct solve at the fixed point.
    {
        const int n = 64;
        const LqFixture fx(n);
        const ControlLaw control = ControlLaw::linear_feedback(
            std::vector<MatrixXd>(n, MatrixXd::Constant(1, 1, -0.5)),
            std::vector<VectorXd>(n, VectorXd::Zero(1)));
        const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, 64, 31);

        const StateEnsemble direct =
            solve_forward(fx.space, fx.A, fx.B, fx.coeffs, control, fx.x0, noise);
        const PicardResult pic = solve_forward_picard(fx.space, fx.A, fx.B, fx.coeffs, control,
                                                      fx.x0, noise, 4, 1e-10);
        double sup = 0.0;
        for (int p = 0; p < direct.paths(); ++p)
            for (int k = 0; k <= n; ++k)
                sup = std::max(sup,
                               (pic.states.state(p, k) - direct.state(p, k)).cwiseAbs().maxCoeff());
        CHECK(sup <= 1e-6);
        CHECK(pic.contraction_ratio > 0.0);
        CHECK(pic.contraction_ratio < 0.9);
        CHECK_FALSE(pic.stage_distances.empty());
    }
}

TEST_CASE("fixed point iteration rejects expansive drivers", "[forward]") {
    const int n = 16;
    const GalerkinSpace space = scalar_space();
    const OperatorProcess zero = scalar_op(0.0, n);
    CoefficientSet coeffs = zero_coefficients(1, 1);
    coeffs.b = [](double, const VectorXd& x, const VectorXd&) { return (5.0 * x).eval(); };
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 2, 37);

    CHECK_THROWS_WITH(solve_forward_picard(space, zero, zero, coeffs, ControlLaw::zero(n, 1),
                                           VectorXd::Ones(1), noise, 1),
                      Catch::Matchers::ContainsSubstring("not contracting"));
    CHECK_THROWS_AS(solve_forward_picard(space, zero, zero, coeffs, ControlLaw::zero(n, 1),
                                         VectorXd::Ones(1), noise, 0),
                    ConfigError);
}
