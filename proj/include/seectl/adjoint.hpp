#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "seectl/errors.hpp"
#include "seectl/forward.hpp"
#include "seectl/noise.hpp"
#include "seectl/problem.hpp"

namespace seectl {

/// Polynomial regression features in the state: degree 1 is {1, x_i},
/// degree 2 adds the distinct quadratic monomials x_i x_j.
struct RegressionBasis {
    int degree = 1;

    RegressionBasis() = default;
    explicit RegressionBasis(int deg) : degree(deg) {
        if (deg != 1 && deg != 2) throw ConfigError("RegressionBasis: degree must be 1 or 2");
    }

    int feature_count(int state_dim) const {
        return degree == 1 ? state_dim + 1 : state_dim + 1 + state_dim * (state_dim + 1) / 2;
    }

    void fill(const VectorXd& x,
              Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) const {
        const int N = static_cast<int>(x.size());
        row(0) = 1.0;
        for (int i = 0; i < N; ++i) row(1 + i) = x[i];
        if (degree == 2) {
            int c = 1 + N;
            for (int i = 0; i < N; ++i)
                for (int j = i; j < N; ++j) row(c++) = x[i] * x[j];
        }
    }

    Eigen::RowVectorXd features(const VectorXd& x) const {
        Eigen::RowVectorXd row(feature_count(static_cast<int>(x.size())));
        fill(x, row);
        return row;
    }
};

/// Ensemble of adjoint triples along state paths: p on grid points, q and
/// per-mark r on grid steps.
struct AdjointEnsemble {
    TimeGrid grid;
    int state_dim = 0;
    int mark_count = 0;
    std::vector<MatrixXd> p;  ///< per path, (steps+1) x N
    std::vector<MatrixXd> q;  ///< per path, steps x N
    std::vector<MatrixXd> r;  ///< per path, steps x (N * marks), mark-major blocks
    double max_feature_condition = 0.0;

    int paths() const { return static_cast<int>(p.size()); }
    VectorXd p_at(int path, int k) const { return p[path].row(k).transpose(); }
    VectorXd q_at(int path, int k) const { return q[path].row(k).transpose(); }
    VectorXd r_at(int path, int k, int mark) const {
        return r[path].row(k).segment(mark * state_dim, state_dim).transpose();
    }

    /// nu-weighted sum over marks, the quantity entering the Hamiltonian.
    VectorXd r_nu_sum(int path, int k, const MarkSpace& marks) const {
        VectorXd s = VectorXd::Zero(state_dim);
        for (int i = 0; i < mark_count; ++i) s += marks.intensities[i] * r_at(path, k, i);
        return s;
    }
};

struct BseeOptions {
    /// How the jump integrand r is read off the regression.
    /// `markovian` evaluates the fitted continuation at the post-jump state:
    ///   r_i(x) = phat(x + sigma_i(t,x,u)) - phat(x),
    /// exact for Markovian adjoints and free of jump-sampling noise.
    /// `correlation` regresses p_{k+1} (dN_i - nu_i dt)/(nu_i dt); unbiased
    /// but with conditional variance ~ 1/(nu_i dt), so it needs jump-rich
    /// grids (nu_i dt not small) to be sharp.
    enum class JumpExtraction { markovian, correlation };
    JumpExtraction jump_extraction = JumpExtraction::markovian;
    /// Subtract the fitted continuation from p_{k+1} before the q/r
    /// correlation regressions.  Same conditional estimand (the continuation
    /// is X_k-measurable and the multipliers are centered), much lower
    /// variance.
    bool martingale_control_variate = true;
    /// Rejects feature matrices whose pivoted-QR condition exceeds this.
    double condition_limit = 1e10;
    /// A point-mass ensemble (every simulation's start, at least) makes the
    /// affine features collinear.  With the fallback on, such steps keep
    /// only the identifiable directions: the rank-revealing solve zeroes
    /// redundant coefficients and the jump integrand switches to the
    /// correlation estimator, which at a point mass is a plain mean.  With
    /// it off, degeneracy throws.
    bool degenerate_fallback = true;
};

/// Least-squares Monte Carlo solution of the adjoint backward equation along
/// a solved ensemble:
///   p_n = Phi_x(X_n);  stepping k = n-1 .. 0:
///     q_k  = fit of  p_{k+1} dW_k / dt          on features(X_k),
///     r_ki = jump integrand per `options`,
///     p_k  = fit of p_{k+1} on features(X_k), plus
///            dt * [A*(t_k) phat + b_x* phat + B*(t_k) q_k + g_x* q_k
///                  + sum_i sigma_x*(e_i) r_ki nu_i + l_x].
/// All adjoint operators are transposes in the H-orthonormal coordinates.
inline AdjointEnsemble solve_bsee_regression(const StateEnsemble& states,
                                             const OperatorProcess& A, const OperatorProcess& B,
                                             const CoefficientSet& coeffs, const CostSpec& cost,
                                             const ControlLaw& control,
                                             const NoiseEnsemble& noise,
                                             const RegressionBasis& basis,
                                             const BseeOptions& options = {}) {
    const TimeGrid& grid = states.grid;
    const int n = grid.steps;
    const int N = states.state_dim;
    const int M = states.paths();
    const int m = noise.marks().size();
    const double dt = grid.dt();
    const int d = basis.feature_count(N);
    if (M <= d)
        throw SolverError("regression needs more paths than features", -1);

    AdjointEnsemble adj;
    adj.grid = grid;
    adj.state_dim = N;
    adj.mark_count = m;
    adj.p.assign(M, MatrixXd::Zero(n + 1, N));
    adj.q.assign(M, MatrixXd::Zero(n, N));
    adj.r.assign(M, MatrixXd::Zero(n, N * m));

    for (int p = 0; p < M; ++p)
        adj.p[p].row(n) = cost.terminal_x(states.state(p, n)).transpose();

    MatrixXd F(M, d);            // features at X_k
    MatrixXd Pnext(M, N);        // p_{k+1} values
    MatrixXd target(M, N);

    for (int k = n - 1; k >= 0; --k) {
        const double t = grid.time(k);
        for (int p = 0; p < M; ++p) {
            basis.fill(states.state(p, k), F.row(p));
            Pnext.row(p) = adj.p[p].row(k + 1);
        }

        Eigen::ColPivHouseholderQR<MatrixXd> qr(F);
        // Pivots below 1/condition_limit of the leading one are treated as
        // collapsed; the thresholded solve zeroes their coefficients.
        qr.setThreshold(1.0 / options.condition_limit);
        const int rank = qr.rank();
        const bool deficient = rank < d;
        const auto& Rdiag = qr.matrixR().diagonal();
        const double condition =
            rank > 0 ? std::abs(Rdiag(0)) / std::abs(Rdiag(rank - 1))
                     : std::numeric_limits<double>::infinity();
        adj.max_feature_condition = std::max(adj.max_feature_condition, condition);
        if (deficient && !options.degenerate_fallback)
            throw SolverError("regression features rank-deficient (rank " +
                                  std::to_string(rank) + " of " + std::to_string(d) + ")",
                              k);

        // Continuation fit and, optionally, its residual as the martingale proxy.
        const MatrixXd beta_p = qr.solve(Pnext);
        const MatrixXd phat = F * beta_p;
        const MatrixXd mart = options.martingale_control_variate ? (Pnext - phat).eval() : Pnext;

        // Diffusion integrand.
        for (int p = 0; p < M; ++p) target.row(p) = mart.row(p) * (noise.dw(p, k) / dt);
        const MatrixXd qfit = F * qr.solve(target);
        for (int p = 0; p < M; ++p) adj.q[p].row(k) = qfit.row(p);

        // Jump integrand, one mark at a time.  Collapsed steps cannot
        // support the post-jump continuation evaluation, so they fall back
        // to the correlation estimator regardless of the configured mode.
        const bool correlate_jumps =
            deficient || options.jump_extraction == BseeOptions::JumpExtraction::correlation;
        for (int i = 0; i < m; ++i) {
            const double nu = noise.marks().intensities[i];
            if (correlate_jumps) {
                for (int p = 0; p < M; ++p) {
                    const double w =
                        (static_cast<double>(noise.jumps(p, k, i)) - nu * dt) / (nu * dt);
                    target.row(p) = mart.row(p) * w;
                }
                const MatrixXd rfit = F * qr.solve(target);
                for (int p = 0; p < M; ++p)
                    adj.r[p].row(k).segment(i * N, N) = rfit.row(p);
            } else {
                for (int p = 0; p < M; ++p) {
                    const VectorXd x = states.state(p, k);
                    const VectorXd u = control.value(p, k, x);
                    const VectorXd xj = x + coeffs.sigma(t, i, x, u);
                    adj.r[p].row(k).segment(i * N, N) =
                        basis.features(xj) * beta_p - phat.row(p);
                }
            }
        }

        // Backward step through the drift.
        const MatrixXd At = A.at(k).transpose();
        const MatrixXd Bt = B.at(k).transpose();
        for (int p = 0; p < M; ++p) {
            const VectorXd x = states.state(p, k);
            const VectorXd u = control.value(p, k, x);
            const VectorXd ph = phat.row(p).transpose();
            const VectorXd qk = adj.q[p].row(k).transpose();
            VectorXd driver = At * ph + coeffs.b_x(t, x, u).transpose() * ph + Bt * qk +
                              coeffs.g_x(t, x, u).transpose() * qk + cost.l_x(t, x, u);
            for (int i = 0; i < m; ++i)
                driver += noise.marks().intensities[i] * coeffs.sigma_x(t, i, x, u).transpose() *
                          adj.r_at(p, k, i);
            adj.p[p].row(k) = (ph + dt * driver).transpose();
        }
    }
    return adj;
}

/// Backward matrix equation for the linear-quadratic problem
///   dX = (A X + u) dt + (B X + u) dW + sum_i (Gamma_i X + u) dmu~_i,
///   J  = E [ int (||X||^2 + ||u||^2) dt + ||X(T)||^2 ].
/// The value ansatz p = P(t) X with P(T) = 2I forces
///   q = P (B X + u),  r_i = P (Gamma_i X + u),
/// and stationarity of the Hamiltonian in u gives the feedback
///   u = Lambda(t) X,  M(P) Lambda = -N(P),
///   M(P) = 2I + (1 + nu(E)) P,  N(P) = P (I + B + sum_i Gamma_i nu_i);
/// matching drift terms leaves the matrix equation
///   dP/dt = -[ P A + A^T P + B^T P B + sum_i Gamma_i^T P Gamma_i nu_i
///              + 2I - N(P)^T M(P)^{-1} N(P) ].
struct RiccatiSolution {
    TimeGrid grid;
    std::vector<MatrixXd> P;     ///< value matrix at grid times
    std::vector<MatrixXd> gain;  ///< Lambda at grid times
    double value_offset = 0.0;   ///< additive value constant (zero here)

    /// Optimal cost from a deterministic start.  P carries the adjoint
    /// normalization p = P X with P(T) = 2I, i.e. twice the value Hessian,
    /// so the value itself is half the quadratic form.
    double cost_of(const VectorXd& x0) const {
        return 0.5 * x0.dot(P.front() * x0) + value_offset;
    }

    /// Feedback law on the grid (left-endpoint gains).
    ControlLaw feedback() const {
        std::vector<MatrixXd> gains(gain.begin(), gain.end() - 1);
        std::vector<VectorXd> offsets(gains.size(),
                                      VectorXd::Zero(gain.front().rows()));
        return ControlLaw::linear_feedback(std::move(gains), std::move(offsets));
    }
};

/// Integrates the matrix equation backward from P(T) = 2I with classical
/// RK4, `substeps` sub-intervals per grid step.  The right side is
/// symmetrized after assembly, so P stays symmetric to roundoff.
inline RiccatiSolution solve_riccati_lq(const OperatorProcess& A, const OperatorProcess& B,
                                        const std::vector<MatrixXd>& gammas,
                                        const MarkSpace& marks, const TimeGrid& grid,
                                        int substeps = 4) {
    if (static_cast<int>(gammas.size()) != marks.size())
        throw ConfigError("solve_riccati_lq: one Gamma per mark required");
    const int N = A.dim();
    const int n = grid.steps;
    const double nuE = marks.total_intensity();
    const MatrixXd I = MatrixXd::Identity(N, N);

    auto bigM = [&](const MatrixXd& P) { return (2.0 * I + (1.0 + nuE) * P).eval(); };
    auto bigN = [&](const MatrixXd& P, int k) {
        MatrixXd s = I + B.at(k);
        for (int i = 0; i < marks.size(); ++i) s += marks.intensities[i] * gammas[i];
        return (P * s).eval();
    };

    auto rhs = [&](const MatrixXd& P, int k) {
        const MatrixXd Ak = A.at(k);
        const MatrixXd Bk = B.at(k);
        MatrixXd acc = P * Ak + Ak.transpose() * P + Bk.transpose() * P * Bk + 2.0 * I;
        for (int i = 0; i < marks.size(); ++i)
            acc += marks.intensities[i] * gammas[i].transpose() * P * gammas[i];
        const MatrixXd Nk = bigN(P, k);
        Eigen::LLT<MatrixXd> llt(bigM(P));
        if (llt.info() != Eigen::Success)
            throw SolverError("effective control curvature lost positive definiteness", k);
        acc -= Nk.transpose() * llt.solve(Nk);
        MatrixXd f = -acc;
        return ((f + f.transpose()) / 2.0).eval();
    };

    RiccatiSolution sol;
    sol.grid = grid;
    sol.P.assign(n + 1, MatrixXd());
    sol.gain.assign(n + 1, MatrixXd());
    MatrixXd P = 2.0 * I;
    sol.P[n] = P;
    const double h = grid.dt() / substeps;
    for (int k = n - 1; k >= 0; --k) {
        for (int s = 0; s < substeps; ++s) {
            // Operators are evaluated per grid step (piecewise constant in the
            // substep loop); classical RK4 with step -h.
            const MatrixXd k1 = rhs(P, k);
            const MatrixXd k2 = rhs(P - 0.5 * h * k1, k);
            const MatrixXd k3 = rhs(P - 0.5 * h * k2, k);
            const MatrixXd k4 = rhs(P - h * k3, k);
            P -= (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        sol.P[k] = P;
    }
    for (int k = 0; k <= n; ++k) {
        Eigen::LLT<MatrixXd> llt(bigM(sol.P[k]));
        if (llt.info() != Eigen::Success)
            throw SolverError("effective control curvature lost positive definiteness", k);
        sol.gain[k] = -llt.solve(bigN(sol.P[k], k));
    }
    return sol;
}

/// Adjoint triple induced by the value matrix along solved paths generated
/// under the Riccati feedback: p = P X, q = P (B X + u), r_i = P (Gamma_i X + u)
/// with u = Lambda X recomputed from the stored gains.
inline AdjointEnsemble lq_adjoint_from_riccati(const RiccatiSolution& ric,
                                               const StateEnsemble& states,
                                               const OperatorProcess& B,
                                               const std::vector<MatrixXd>& gammas,
                                               const MarkSpace& marks) {
    const TimeGrid& grid = states.grid;
    const int n = grid.steps;
    const int N = states.state_dim;
    const int M = states.paths();
    const int m = marks.size();

    AdjointEnsemble adj;
    adj.grid = grid;
    adj.state_dim = N;
    adj.mark_count = m;
    adj.p.assign(M, MatrixXd::Zero(n + 1, N));
    adj.q.assign(M, MatrixXd::Zero(n, N));
    adj.r.assign(M, MatrixXd::Zero(n, N * m));

    for (int p = 0; p < M; ++p) {
        for (int k = 0; k <= n; ++k) {
            const VectorXd x = states.state(p, k);
            adj.p[p].row(k) = (ric.P[k] * x).transpose();
            if (k < n) {
                const VectorXd u = ric.gain[k] * x;
                adj.q[p].row(k) = (ric.P[k] * (B.at(k) * x + u)).transpose();
                for (int i = 0; i < m; ++i)
                    adj.r[p].row(k).segment(i * N, N) =
                        (ric.P[k] * (gammas[i] * x + u)).transpose();
            }
        }
    }
    return adj;
}

struct AdjointEstimateReport {
    double solution_mass = 0.0;  ///< E sup ||p||^2 + E int ||p||_V^2 + E int ||q||^2 + jump mass
    double data_mass = 0.0;      ///< E ||Phi_x(X_T)||^2 + E int ||l_x||^2
    double ratio = 0.0;
};

/// Energy audit for the adjoint: solution mass against the data that drives
/// it.  Zero data must give zero mass (ratio 0).
inline AdjointEstimateReport adjoint_estimate_check(const AdjointEnsemble& adj,
                                                    const StateEnsemble& states,
                                                    const GalerkinSpace& space,
                                                    const CostSpec& cost,
                                                    const ControlLaw& control,
                                                    const MarkSpace& marks) {
    const TimeGrid& grid = adj.grid;
    const double dt = grid.dt();
    const int n = grid.steps;
    const int M = adj.paths();

    std::vector<double> lhs(M), rhs(M);
    for (int p = 0; p < M; ++p) {
        double sup = 0.0, acc = 0.0, data = 0.0;
        for (int k = 0; k <= n; ++k) {
            const VectorXd pk = adj.p_at(p, k);
            sup = std::max(sup, pk.squaredNorm());
            if (k < n) {
                acc += space.v_norm_sq(pk) * dt;
                acc += adj.q_at(p, k).squaredNorm() * dt;
                for (int i = 0; i < adj.mark_count; ++i)
                    acc += marks.intensities[i] * adj.r_at(p, k, i).squaredNorm() * dt;
                const VectorXd x = states.state(p, k);
                const VectorXd u = control.value(p, k, x);
                data += cost.l_x(grid.time(k), x, u).squaredNorm() * dt;
            }
        }
        data += cost.terminal_x(states.state(p, n)).squaredNorm();
        lhs[p] = sup + acc;
        rhs[p] = data;
    }

    AdjointEstimateReport rep;
    rep.solution_mass = pairwise_sum(lhs) / M;
    rep.data_mass = pairwise_sum(rhs) / M;
    rep.ratio = rep.solution_mass / std::max(rep.data_mass, 1e-12);
    return rep;
}

}  // namespace seectl
