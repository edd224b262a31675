#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include <seectl/adjoint.hpp>
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
    std::vector<MatrixXd> gammas{MatrixXd::Constant(1, 1, 0.1)};
    OperatorProcess A, B;
    CoefficientSet coeffs;
    CostSpec cost = quadratic_tracking_cost(1, 1);
    VectorXd x0 = VectorXd::Ones(1);

    explicit LqFixture(int steps)
        : A(scalar_op(-1.0, steps)), B(scalar_op(0.5, steps)),
          coeffs(lq_coefficients(1, gammas, marks)) {}
};

// Terminal-only cost l = 0, terminal = scale * ||x||^2.
CostSpec terminal_cost(double scale, int control_dim) {
    CostSpec c;
    c.l = [](double, const VectorXd&, const VectorXd&) { return 0.0; };
    c.terminal = [scale](const VectorXd& x) { return scale * x.squaredNorm(); };
    c.l_x = [](double, const VectorXd& x, const VectorXd&) {
        return VectorXd::Zero(x.size()).eval();
    };
    c.l_u = [](double, const VectorXd&, const VectorXd& u) {
        return VectorXd::Zero(u.size()).eval();
    };
    c.terminal_x = [scale](const VectorXd& x) { return (2.0 * scale * x).eval(); };
    c.l_uu = 2.0 * MatrixXd::Identity(control_dim, control_dim);
    return c;
}

}  // namespace

TEST_CASE("regression basis enumerates affine and quadratic features", "[adjoint]") {
    CHECK(RegressionBasis{1}.feature_count(3) == 4);
    CHECK(RegressionBasis{2}.feature_count(3) == 10);
    CHECK_THROWS_AS(RegressionBasis{0}, ConfigError);
    CHECK_THROWS_AS(RegressionBasis{3}, ConfigError);

    VectorXd x(2);
    x << 1.0, 2.0;
    const Eigen::RowVectorXd deg2 = RegressionBasis{2}.features(x);
    REQUIRE(deg2.size() == 6);
    const double expected[] = {1.0, 1.0, 2.0, 1.0, 2.0, 4.0};
    for (int i = 0; i < 6; ++i) CHECK(deg2(i) == expected[i]);
}

TEST_CASE("riccati flow hits the frozen benchmark values", "[adjoint]") {
    const int n = 128;
    const LqFixture fx(n);
    const RiccatiSolution ric =
        solve_riccati_lq(fx.A, fx.B, fx.gammas, fx.marks, TimeGrid{1.0, n});

    REQUIRE(ric.P.size() == static_cast<std::size_t>(n + 1));
    CHECK((ric.P.back() - 2.0 * MatrixXd::Identity(1, 1)).cwiseAbs().maxCoeff() == 0.0);
    for (const MatrixXd& P : ric.P)
        CHECK((P - P.transpose()).cwiseAbs().maxCoeff() <= 1e-12);

    // Terminal gain in closed form: Lambda(T) = -(1 + 0.5 + 0.1) * 2 / (2 + 4).
    CHECK(ric.gain.back()(0, 0) == Catch::Approx(-1.6 * 2.0 / 6.0).margin(1e-12));
    CHECK(ric.P.front()(0, 0) == Catch::Approx(0.9340501634792794).margin(1e-9));
    CHECK(ric.cost_of(fx.x0) == Catch::Approx(0.4670250817396397).margin(1e-9));

    const ControlLaw law = ric.feedback();
    CHECK(law.kind() == ControlLaw::Kind::linear_feedback);
    CHECK(law.gains().size() == static_cast<std::size_t>(n));
}

TEST_CASE("riccati flow agrees with a scalar reference integration", "[adjoint]") {
    // No jumps and no state noise: dP/dt = 2P - 2 + P^2 / (2 + P) backward
    // from P(1) = 2.
    const int n = 64;
    const OperatorProcess A = scalar_op(-1.0, n);
    const OperatorProcess B = scalar_op(0.0, n);
    const RiccatiSolution ric = solve_riccati_lq(A, B, {}, MarkSpace{}, TimeGrid{1.0, n}, 8);

    auto rhs = [](double P) { return 2.0 * P - 2.0 + P * P / (2.0 + P); };
    double P = 2.0;
    const int fine = 20000;
    const double h = 1.0 / fine;
    for (int i = 0; i < fine; ++i) {
        const double k1 = rhs(P);
        const double k2 = rhs(P - 0.5 * h * k1);
        const double k3 = rhs(P - 0.5 * h * k2);
        const double k4 = rhs(P - h * k3);
        P -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    CHECK(ric.P.front()(0, 0) == Catch::Approx(P).margin(1e-8));
}

TEST_CASE("riccati integration converges at fourth order", "[adjoint]") {
    const auto solve_p0 = [](int n, int substeps) {
        const LqFixture fx(n);
        return solve_riccati_lq(fx.A, fx.B, fx.gammas, fx.marks, TimeGrid{1.0, n}, substeps)
            .P.front()(0, 0);
    };
    const double ref = solve_p0(1024, 8);
    const double e64 = std::abs(solve_p0(64, 1) - ref);
    const double e128 = std::abs(solve_p0(128, 1) - ref);
    CHECK(e128 < e64);
    CHECK(e64 / std::max(e128, 1e-300) >= 8.0);
}

TEST_CASE("riccati adjoints satisfy their defining relations", "[adjoint]") {
    const int n = 32;
    const LqFixture fx(n);
    const RiccatiSolution ric =
        solve_riccati_lq(fx.A, fx.B, fx.gammas, fx.marks, TimeGrid{1.0, n});

    // Zero paths produce identically zero adjoints.
    {
        const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, 4, 41);
        const StateEnsemble zero_states =
            solve_forward(fx.space, scalar_op(0.0, n), scalar_op(0.0, n),
                          zero_coefficients(1, 1), ControlLaw::zero(n, 1), VectorXd::Zero(1),
                          noise);
        const AdjointEnsemble adj =
            lq_adjoint_from_riccati(ric, zero_states, fx.B, fx.gammas, fx.marks);
        for (int p = 0; p < zero_states.paths(); ++p)
            for (int k = 0; k <= n; ++k) {
                CHECK(adj.p_at(p, k).cwiseAbs().maxCoeff() == 0.0);
                if (k < n) CHECK(adj.q_at(p, k).cwiseAbs().maxCoeff() == 0.0);
            }
    }

    // Along simulated feedback paths the terminal condition is exact.
    {
        const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, 32, 43);
        const StateEnsemble states = solve_forward(fx.space, fx.A, fx.B, fx.coeffs,
                                                   ric.feedback(), fx.x0, noise);
        const AdjointEnsemble adj =
            lq_adjoint_from_riccati(ric, states, fx.B, fx.gammas, fx.marks);
        for (int p = 0; p < states.paths(); ++p) {
            const VectorXd diff = adj.p_at(p, n) - 2.0 * states.state(p, n);
            CHECK(diff.cwiseAbs().maxCoeff() <= 1e-14);
        }
    }
}

TEST_CASE("regression recovers a constant martingale exactly", "[adjoint]") {
    const int n = 8;
    const GalerkinSpace space = scalar_space();
    const MarkSpace marks{{1.0}, {1.0}};
    const OperatorProcess zero = scalar_op(0.0, n);
    CoefficientSet coeffs = zero_coefficients(1, 1);
    // Tiny additive diffusion keeps the affine features identifiable.
    coeffs.g = [](double, const VectorXd&, const VectorXd&) {
        return VectorXd::Constant(1, 1e-3).eval();
    };
    // Constant terminal gradient: p(T) = 1.5 regardless of the state, so
    // p must stay 1.5 at every step and q, r must vanish.
    CostSpec flat = terminal_cost(0.75, 1);
    flat.terminal_x = [](const VectorXd& x) {
        return VectorXd::Constant(x.size(), 1.5).eval();
    };

    const ControlLaw control = ControlLaw::zero(n, 1);
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, marks, 64, 47);
    const StateEnsemble states =
        solve_forward(space, zero, zero, coeffs, control, VectorXd::Zero(1), noise);
    const AdjointEnsemble adj = solve_bsee_regression(states, zero, zero, coeffs, flat,
                                                      control, noise, RegressionBasis{1});

    for (int p = 0; p < states.paths(); ++p)
        for (int k = 0; k <= n; ++k) {
            CHECK(adj.p_at(p, k)(0) == Catch::Approx(1.5).margin(1e-10));
            if (k < n) {
                CHECK(std::abs(adj.q_at(p, k)(0)) <= 1e-10);
                CHECK(std::abs(adj.r_at(p, k, 0)(0)) <= 1e-10);
            }
        }
}

TEST_CASE("regression tracks a scalar adjoint flow", "[adjoint]") {
    // Nearly deterministic decay: the adjoint solves a linear terminal value
    // problem whose reference is integrated in-test.
    const int n = 64;
    const GalerkinSpace space = scalar_space();
    const OperatorProcess A = scalar_op(-1.0, n);
    const OperatorProcess B = scalar_op(0.0, n);
    CoefficientSet coeffs = zero_coefficients(1, 1);
    coeffs.g = [](double, const VectorXd&, const VectorXd&) {
        return VectorXd::Constant(1, 1e-6).eval();
    };
    const CostSpec cost = terminal_cost(1.0, 1);
    const ControlLaw control = ControlLaw::zero(n, 1);
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 256, 53);
    const StateEnsemble states =
        solve_forward(space, A, B, coeffs, control, VectorXd::Ones(1), noise);
    const AdjointEnsemble adj = solve_bsee_regression(states, A, B, coeffs, cost, control,
                                                      noise, RegressionBasis{1});

    double xn = 0.0;
    for (int p = 0; p < states.paths(); ++p) xn += states.state(p, n)(0);
    xn /= states.paths();

    // Backward reference: -dp/dt = A p with p(1) = 2 xn, so p(0) = 2 xn e^-1.
    const double ref = 2.0 * xn * std::exp(-1.0);
    double p0 = 0.0;
    for (int p = 0; p < states.paths(); ++p) p0 += adj.p_at(p, 0)(0);
    p0 /= states.paths();
    CHECK(p0 == Catch::Approx(ref).epsilon(0.025));
    CHECK(adj.max_feature_condition > 0.0);
    CHECK(adj.max_feature_condition < 1e10);
}

TEST_CASE("regression matches the riccati adjoints on the benchmark", "[adjoint]") {
    const int n = 64;
    const int paths = 4000;
    const LqFixture fx(n);
    const RiccatiSolution ric =
        solve_riccati_lq(fx.A, fx.B, fx.gammas, fx.marks, TimeGrid{1.0, n});
    const ControlLaw law = ric.feedback();
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, paths, 59);
    const StateEnsemble states =
        solve_forward(fx.space, fx.A, fx.B, fx.coeffs, law, fx.x0, noise);

    const AdjointEnsemble ref = lq_adjoint_from_riccati(ric, states, fx.B, fx.gammas, fx.marks);
    const AdjointEnsemble est = solve_bsee_regression(states, fx.A, fx.B, fx.coeffs, fx.cost,
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
    const double rel = std::sqrt(num / den);
    CHECK(rel <= 0.06);
}

TEST_CASE("jump extraction modes agree on the benchmark", "[adjoint]") {
    const int n = 32;
    const int paths = 3000;
    const LqFixture fx(n);
    const RiccatiSolution ric =
        solve_riccati_lq(fx.A, fx.B, fx.gammas, fx.marks, TimeGrid{1.0, n});
    const ControlLaw law = ric.feedback();
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, fx.marks, paths, 61);
    const StateEnsemble states =
        solve_forward(fx.space, fx.A, fx.B, fx.coeffs, law, fx.x0, noise);
    const AdjointEnsemble ref = lq_adjoint_from_riccati(ric, states, fx.B, fx.gammas, fx.marks);

    for (auto mode : {BseeOptions::JumpExtraction::markovian,
                      BseeOptions::JumpExtraction::correlation}) {
        BseeOptions opt;
        opt.jump_extraction = mode;
        const AdjointEnsemble est = solve_bsee_regression(states, fx.A, fx.B, fx.coeffs, fx.cost,
                                                          law, noise, RegressionBasis{1}, opt);
        double num = 0.0, den = 0.0;
        for (int p = 0; p < paths; ++p)
            for (int k = 0; k < n; ++k) {
                num += (est.r_at(p, k, 0) - ref.r_at(p, k, 0)).squaredNorm();
                den += ref.r_at(p, k, 0).squaredNorm();
            }
        CHECK(std::sqrt(num / den) <= 0.2);
    }
}

TEST_CASE("regression reports feature degeneracy", "[adjoint]") {
    const int n = 8;
    const GalerkinSpace space = scalar_space();
    const OperatorProcess A = scalar_op(-1.0, n);
    const OperatorProcess B = scalar_op(0.0, n);
    const CoefficientSet coeffs = zero_coefficients(1, 1);
    const CostSpec cost = terminal_cost(1.0, 1);
    const ControlLaw control = ControlLaw::zero(n, 1);
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 16, 67);
    // Deterministic paths: the affine features are collinear at every step.
    const StateEnsemble states =
        solve_forward(space, A, B, coeffs, control, VectorXd::Ones(1), noise);

    BseeOptions strict;
    strict.degenerate_fallback = false;
    CHECK_THROWS_WITH(solve_bsee_regression(states, A, B, coeffs, cost, control, noise,
                                            RegressionBasis{1}, strict),
                      Catch::Matchers::ContainsSubstring("rank"));

    // The fallback keeps the identifiable direction and reproduces the
    // deterministic backward recursion p_k = (1 - dt) p_{k+1}.
    const AdjointEnsemble adj = solve_bsee_regression(states, A, B, coeffs, cost, control,
                                                      noise, RegressionBasis{1});
    const double dt = 1.0 / n;
    double expected = 2.0 * states.state(0, n)(0);
    for (int k = n - 1; k >= 0; --k) expected *= (1.0 - dt);
    CHECK(adj.p_at(0, 0)(0) == Catch::Approx(expected).epsilon(1e-10));

    // Too few paths for the feature count.
    const NoiseEnsemble tiny = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 2, 67);
    const StateEnsemble small_states =
        solve_forward(space, A, B, coeffs, control, VectorXd::Ones(1), tiny);
    CHECK_THROWS_AS(solve_bsee_regression(small_states, A, B, coeffs, cost, control, tiny,
                                          RegressionBasis{1}),
                    SolverError);
}

TEST_CASE("adjoint estimate check scales quadratically in the terminal data", "[adjoint]") {
    const int n = 16;
    const GalerkinSpace space = scalar_space();
    const OperatorProcess A = scalar_op(-1.0, n);
    const OperatorProcess B = scalar_op(0.0, n);
    CoefficientSet coeffs = zero_coefficients(1, 1);
    coeffs.g = [](double, const VectorXd&, const VectorXd&) {
        return VectorXd::Constant(1, 1e-3).eval();
    };
    const ControlLaw control = ControlLaw::zero(n, 1);
    const NoiseEnsemble noise = sample_noise(TimeGrid{1.0, n}, MarkSpace{}, 128, 71);
    const StateEnsemble states =
        solve_forward(space, A, B, coeffs, control, VectorXd::Ones(1), noise);

    // Zero terminal data: zero adjoints and zero masses.
    {
        const AdjointEnsemble adj = solve_bsee_regression(states, A, B, coeffs,
                                                          terminal_cost(0.0, 1), control, noise,
                                                          RegressionBasis{1});
        const AdjointEstimateReport rep =
            adjoint_estimate_check(adj, states, space, terminal_cost(0.0, 1), control,
                                   MarkSpace{});
        CHECK(rep.solution_mass == 0.0);
    }

    const AdjointEnsemble a1 = solve_bsee_regression(states, A, B, coeffs, terminal_cost(1.0, 1),
                                                     control, noise, RegressionBasis{1});
    const AdjointEnsemble a3 = solve_bsee_regression(states, A, B, coeffs, terminal_cost(3.0, 1),
                                                     control, noise, RegressionBasis{1});
    const AdjointEstimateReport r1 =
        adjoint_estimate_check(a1, states, space, terminal_cost(1.0, 1), control, MarkSpace{});
    const AdjointEstimateReport r3 =
        adjoint_estimate_check(a3, states, space, terminal_cost(3.0, 1), control, MarkSpace{});
    CHECK(r1.solution_mass > 0.0);
    CHECK(r1.data_mass > 0.0);
    CHECK(r3.solution_mass == Catch::Approx(9.0 * r1.solution_mass).epsilon(1e-9));
    CHECK(r3.data_mass == Catch::Approx(9.0 * r1.data_mass).epsilon(1e-9));
    CHECK(r3.ratio == Catch::Approx(r1.ratio).epsilon(1e-9));
}
