#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "seectl/adjoint.hpp"
#include "seectl/errors.hpp"
#include "seectl/forward.hpp"
#include "seectl/parallel.hpp"
#include "seectl/problem.hpp"

namespace seectl {

struct CostValue {
    double value = 0.0;
    double stderr_ = 0.0;
};

/// Monte Carlo functional  J = E[ sum_k l(t_k, X_k, u_k) dt + Phi(X_n) ]
/// with left-endpoint quadrature; the control is re-evaluated along paths.
inline CostValue cost(const StateEnsemble& states, const ControlLaw& control,
                      const CostSpec& spec) {
    const TimeGrid& grid = states.grid;
    const double dt = grid.dt();
    const int n = grid.steps;
    const int M = states.paths();
    std::vector<double> per(M);
    for (int p = 0; p < M; ++p) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) {
            const VectorXd x = states.state(p, k);
            acc += spec.l(grid.time(k), x, control.value(p, k, x)) * dt;
        }
        acc += spec.terminal(states.state(p, n));
        per[p] = acc;
    }
    const auto ms = mean_stderr(per);
    return {ms.mean, ms.stderr_};
}

struct HamiltonianEval {
    double value = 0.0;
    VectorXd grad_u;
    VectorXd grad_x;
};

/// Pointwise Hamiltonian
///   H = (b, p) + (g, q) + sum_i (sigma(e_i), r_i) nu_i + l
/// with its u- and x-gradients (coefficient adjoints are transposes).
inline HamiltonianEval hamiltonian(double t, const VectorXd& x, const VectorXd& u,
                                   const VectorXd& p, const VectorXd& q,
                                   const std::vector<VectorXd>& r, const CoefficientSet& coeffs,
                                   const CostSpec& cost_spec, const MarkSpace& marks) {
    if (static_cast<int>(r.size()) != marks.size())
        throw ConfigError("hamiltonian: one r per mark required");
    HamiltonianEval h;
    h.value = coeffs.b(t, x, u).dot(p) + coeffs.g(t, x, u).dot(q) +
              cost_spec.l(t, x, u);
    h.grad_u = coeffs.b_u(t, x, u).transpose() * p + coeffs.g_u(t, x, u).transpose() * q +
               cost_spec.l_u(t, x, u);
    h.grad_x = coeffs.b_x(t, x, u).transpose() * p + coeffs.g_x(t, x, u).transpose() * q +
               cost_spec.l_x(t, x, u);
    for (int i = 0; i < marks.size(); ++i) {
        const double nu = marks.intensities[i];
        h.value += coeffs.sigma(t, i, x, u).dot(r[i]) * nu;
        h.grad_u += nu * coeffs.sigma_u(t, i, x, u).transpose() * r[i];
        h.grad_x += nu * coeffs.sigma_x(t, i, x, u).transpose() * r[i];
    }
    return h;
}

namespace detail {

/// H_u along a path step, reading the adjoint triple from an ensemble.
inline VectorXd hamiltonian_grad_u(const StateEnsemble& states, const AdjointEnsemble& adj,
                                   const CoefficientSet& coeffs, const CostSpec& cost_spec,
                                   const ControlLaw& control, const MarkSpace& marks, int p,
                                   int k) {
    const double t = states.grid.time(k);
    const VectorXd x = states.state(p, k);
    const VectorXd u = control.value(p, k, x);
    const VectorXd pk = adj.p_at(p, k);
    const VectorXd qk = adj.q_at(p, k);
    VectorXd g = coeffs.b_u(t, x, u).transpose() * pk + coeffs.g_u(t, x, u).transpose() * qk +
                 cost_spec.l_u(t, x, u);
    for (int i = 0; i < marks.size(); ++i)
        g += marks.intensities[i] * coeffs.sigma_u(t, i, x, u).transpose() * adj.r_at(p, k, i);
    return g;
}

}  // namespace detail

/// First-variation process Y for the control direction (v - u), linearized
/// along the base trajectory and driven by the same noise:
///   Y_0 = 0,
///   (I - dt A) Y_{k+1} = Y_k + [b_x Y_k + b_u d_k] dt
///                        + [B Y_k + g_x Y_k + g_u d_k] dW_k
///                        + sum_i [sigma_x,i Y_k + sigma_u,i d_k] dmu~_{k,i},
/// all derivative coefficients evaluated at (t_k, X_k, u_k), d_k = v_k - u_k.
inline StateEnsemble solve_variational(const GalerkinSpace& space, const OperatorProcess& A,
                                       const OperatorProcess& B, const CoefficientSet& coeffs,
                                       const StateEnsemble& base, const ControlLaw& u,
                                       const ControlLaw& v, const NoiseEnsemble& noise,
                                       int threads = 1) {
    const int m = noise.marks().size();
    auto drivers = [&](int p, int k, const VectorXd& y) {
        const double t = noise.grid().time(k);
        const VectorXd x = base.state(p, k);
        const VectorXd uk = u.value(p, k, x);
        const VectorXd d = v.value(p, k, x) - uk;
        std::tuple<VectorXd, VectorXd, std::vector<VectorXd>> out{
            (coeffs.b_x(t, x, uk) * y + coeffs.b_u(t, x, uk) * d).eval(),
            (coeffs.g_x(t, x, uk) * y + coeffs.g_u(t, x, uk) * d).eval(),
            {}};
        auto& s = std::get<2>(out);
        for (int i = 0; i < m; ++i)
            s.push_back((coeffs.sigma_x(t, i, x, uk) * y + coeffs.sigma_u(t, i, x, uk) * d).eval());
        return out;
    };
    return detail::euler_sweep(A, B, VectorXd::Zero(space.dim), noise, drivers, threads);
}

struct Derivative {
    double value = 0.0;
    double stderr_ = 0.0;
};

/// Directional cost derivative through the variation process:
///   E[ (Phi_x(X_n), Y_n) + sum_k ((l_x, Y_k) + (l_u, d_k)) dt ].
inline Derivative gateaux_via_variation(const StateEnsemble& base, const StateEnsemble& variation,
                                        const ControlLaw& u, const ControlLaw& v,
                                        const CostSpec& cost_spec) {
    const TimeGrid& grid = base.grid;
    const double dt = grid.dt();
    const int n = grid.steps;
    const int M = base.paths();
    std::vector<double> per(M);
    for (int p = 0; p < M; ++p) {
        double acc = cost_spec.terminal_x(base.state(p, n)).dot(variation.state(p, n));
        for (int k = 0; k < n; ++k) {
            const double t = grid.time(k);
            const VectorXd x = base.state(p, k);
            const VectorXd uk = u.value(p, k, x);
            const VectorXd d = v.value(p, k, x) - uk;
            acc += (cost_spec.l_x(t, x, uk).dot(variation.state(p, k)) +
                    cost_spec.l_u(t, x, uk).dot(d)) *
                   dt;
        }
        per[p] = acc;
    }
    const auto ms = mean_stderr(per);
    return {ms.mean, ms.stderr_};
}

/// Directional cost derivative through the adjoint:
///   E[ sum_k (H_u(t_k, X_k, u_k, p_k, q_k, r_k), d_k) dt ].
inline Derivative gateaux_via_adjoint(const StateEnsemble& base, const AdjointEnsemble& adj,
                                      const CoefficientSet& coeffs, const CostSpec& cost_spec,
                                      const ControlLaw& u, const ControlLaw& v,
                                      const MarkSpace& marks) {
    const TimeGrid& grid = base.grid;
    const double dt = grid.dt();
    const int n = grid.steps;
    const int M = base.paths();
    std::vector<double> per(M);
    for (int p = 0; p < M; ++p) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) {
            const VectorXd x = base.state(p, k);
            const VectorXd d = v.value(p, k, x) - u.value(p, k, x);
            acc += detail::hamiltonian_grad_u(base, adj, coeffs, cost_spec, u, marks, p, k).dot(d) *
                   dt;
        }
        per[p] = acc;
    }
    const auto ms = mean_stderr(per);
    return {ms.mean, ms.stderr_};
}

struct DualityReport {
    double lhs = 0.0;  ///< terminal + running state pairing with the variation
    double rhs = 0.0;  ///< control pairing with the adjoint coupling
    double gap = 0.0;
    double gap_stderr = 0.0;
};

/// Pairing identity between the variation and the adjoint:
///   E[(Phi_x(X_n), Y_n)] + E int (l_x, Y) dt
///     = E int (b_u^T p + g_u^T q + sum_i sigma_u,i^T r_i nu_i, d) dt
/// up to discretization; evaluated pathwise on common noise so the gap
/// carries a paired standard error.
inline DualityReport duality_check(const StateEnsemble& base, const StateEnsemble& variation,
                                   const AdjointEnsemble& adj, const CoefficientSet& coeffs,
                                   const CostSpec& cost_spec, const ControlLaw& u,
                                   const ControlLaw& v, const MarkSpace& marks) {
    const TimeGrid& grid = base.grid;
    const double dt = grid.dt();
    const int n = grid.steps;
    const int M = base.paths();
    std::vector<double> lhs(M), rhs(M), diff(M);
    for (int p = 0; p < M; ++p) {
        double l = cost_spec.terminal_x(base.state(p, n)).dot(variation.state(p, n));
        double r = 0.0;
        for (int k = 0; k < n; ++k) {
            const double t = grid.time(k);
            const VectorXd x = base.state(p, k);
            const VectorXd uk = u.value(p, k, x);
            const VectorXd d = v.value(p, k, x) - uk;
            l += cost_spec.l_x(t, x, uk).dot(variation.state(p, k)) * dt;
            VectorXd coupling = coeffs.b_u(t, x, uk).transpose() * adj.p_at(p, k) +
                                coeffs.g_u(t, x, uk).transpose() * adj.q_at(p, k);
            for (int i = 0; i < marks.size(); ++i)
                coupling += marks.intensities[i] * coeffs.sigma_u(t, i, x, uk).transpose() *
                            adj.r_at(p, k, i);
            r += coupling.dot(d) * dt;
        }
        lhs[p] = l;
        rhs[p] = r;
        diff[p] = l - r;
    }
    DualityReport rep;
    rep.lhs = pairwise_sum(lhs) / M;
    rep.rhs = pairwise_sum(rhs) / M;
    const auto ms = mean_stderr(diff);
    rep.gap = std::abs(ms.mean);
    rep.gap_stderr = ms.stderr_;
    return rep;
}

/// Stationarity defect of the maximum principle:
///   unconstrained: E int ||H_u||^2 dt;
///   with a box:    E int ||u - proj(u - H_u)||^2 dt.
inline double smp_residual(const StateEnsemble& states, const AdjointEnsemble& adj,
                           const CoefficientSet& coeffs, const CostSpec& cost_spec,
                           const ControlLaw& control, const MarkSpace& marks) {
    const TimeGrid& grid = states.grid;
    const double dt = grid.dt();
    const int n = grid.steps;
    const int M = states.paths();
    std::vector<double> per(M);
    for (int p = 0; p < M; ++p) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) {
            const VectorXd g =
                detail::hamiltonian_grad_u(states, adj, coeffs, cost_spec, control, marks, p, k);
            if (control.has_box()) {
                const VectorXd x = states.state(p, k);
                const VectorXd u = control.value(p, k, x);
                acc += (u - control.project(u - g)).squaredNorm() * dt;
            } else {
                acc += g.squaredNorm() * dt;
            }
        }
        per[p] = acc;
    }
    return pairwise_sum(per) / M;
}

struct OptimizeTraceRow {
    int iteration = 0;
    double cost_value = 0.0;
    double cost_stderr = 0.0;
    double residual = 0.0;
    double step = 0.0;  ///< damping or accepted line-search step
};

struct OptimizeResult {
    ControlLaw control;
    std::vector<OptimizeTraceRow> trace;
    bool converged = false;
    std::string failure_reason;
    CostValue final_cost;
};

struct OptimizeOptions {
    int max_outer = 40;
    double damping = 0.5;          ///< beta for the Hamiltonian iteration
    double cost_tol = 1e-6;        ///< relative cost stall threshold
    double residual_tol = 1e-4;    ///< stationarity target
    RegressionBasis basis{1};
    BseeOptions bsee{};
    int threads = 1;
    double step0 = 0.5;            ///< initial line-search step (gradient method)
    double step_shrink = 0.5;
    double step_min = 1e-12;
    double armijo = 1e-4;
};

namespace detail {

/// Pathwise Hamiltonian argmin for costs with constant control curvature:
/// H_u(u*) = coupling + l_uu u* = 0, projected onto the admissible box.
inline MatrixXd pathwise_argmin(const StateEnsemble& states, const AdjointEnsemble& adj,
                                const CoefficientSet& coeffs, const CostSpec& cost_spec,
                                const ControlLaw& control, const MarkSpace& marks, int path) {
    const int n = states.grid.steps;
    const int U = control.udim();
    const Eigen::LLT<MatrixXd> luu(cost_spec.l_uu);
    if (luu.info() != Eigen::Success)
        throw SolverError("control curvature l_uu is not positive definite");
    MatrixXd out(n, U);
    for (int k = 0; k < n; ++k) {
        const double t = states.grid.time(k);
        const VectorXd x = states.state(path, k);
        const VectorXd u = control.value(path, k, x);
        VectorXd coupling = coeffs.b_u(t, x, u).transpose() * adj.p_at(path, k) +
                            coeffs.g_u(t, x, u).transpose() * adj.q_at(path, k);
        for (int i = 0; i < marks.size(); ++i)
            coupling += marks.intensities[i] * coeffs.sigma_u(t, i, x, u).transpose() *
                        adj.r_at(path, k, i);
        out.row(k) = control.project(luu.solve(-coupling)).transpose();
    }
    return out;
}

/// Fits pathwise target controls back into the law's representation class.
inline ControlLaw fit_control_class(const ControlLaw& shape, const StateEnsemble& states,
                                    const std::vector<MatrixXd>& targets) {
    const int n = shape.steps();
    const int U = shape.udim();
    const int M = static_cast<int>(targets.size());
    switch (shape.kind()) {
        case ControlLaw::Kind::open_loop: {
            MatrixXd table = MatrixXd::Zero(n, U);
            for (const auto& t : targets) table += t;
            table /= static_cast<double>(M);
            ControlLaw law = ControlLaw::open_loop(std::move(table));
            return shape.has_box() ? law.with_box(shape.box_lo(), shape.box_hi()) : law;
        }
        case ControlLaw::Kind::linear_feedback: {
            const int N = states.state_dim;
            std::vector<MatrixXd> gains(n);
            std::vector<VectorXd> offsets(n);
            std::vector<bool> collapsed(n, false);
            MatrixXd F(M, N + 1);
            MatrixXd Y(M, U);
            for (int k = 0; k < n; ++k) {
                for (int p = 0; p < M; ++p) {
                    F(p, 0) = 1.0;
                    F.row(p).segment(1, N) = states.values[p].row(k);
                    Y.row(p) = targets[p].row(k);
                }
                Eigen::ColPivHouseholderQR<MatrixXd> qr(F);
                qr.setThreshold(1e-10);
                collapsed[k] = qr.rank() < N + 1;
                const MatrixXd beta = qr.solve(Y);  // (N+1) x U
                offsets[k] = beta.row(0).transpose();
                gains[k] = beta.bottomRows(N).transpose();
            }
            // A point-mass step cannot split level from slope; it inherits
            // the slope of the nearest identifiable step and keeps only the
            // level, matched at the ensemble mean.
            for (int k = 0; k < n; ++k) {
                if (!collapsed[k]) continue;
                int src = -1;
                for (int off = 1; off < n && src < 0; ++off) {
                    if (k + off < n && !collapsed[k + off]) src = k + off;
                    else if (k - off >= 0 && !collapsed[k - off]) src = k - off;
                }
                VectorXd xbar = VectorXd::Zero(N), ubar = VectorXd::Zero(U);
                for (int p = 0; p < M; ++p) {
                    xbar += states.state(p, k);
                    ubar += targets[p].row(k).transpose();
                }
                xbar /= M;
                ubar /= M;
                gains[k] = src >= 0 ? gains[src] : MatrixXd::Zero(U, N);
                offsets[k] = ubar - gains[k] * xbar;
            }
            ControlLaw law = ControlLaw::linear_feedback(std::move(gains), std::move(offsets));
            return shape.has_box() ? law.with_box(shape.box_lo(), shape.box_hi()) : law;
        }
        case ControlLaw::Kind::tabulated: {
            ControlLaw law = ControlLaw::tabulated(
                states, U, [&](int p, int k, const auto&) { return targets[p].row(k).transpose(); });
            return shape.has_box() ? law.with_box(shape.box_lo(), shape.box_hi()) : law;
        }
    }
    throw ConfigError("fit_control_class: unknown control class");
}

}  // namespace detail

/// Damped fixed-point iteration on the pointwise Hamiltonian minimizer:
/// solve forward, solve the adjoint by regression, take the pathwise argmin,
/// re-fit it in the control's representation class, blend with damping, and
/// repeat until the cost stalls and the stationarity defect is small.
inline OptimizeResult optimize_hamiltonian_iteration(
    const GalerkinSpace& space, const OperatorProcess& A, const OperatorProcess& B,
    const CoefficientSet& coeffs, const CostSpec& cost_spec, const MarkSpace& marks,
    const ControlLaw& initial, const VectorXd& x0, const NoiseEnsemble& noise,
    const OptimizeOptions& opts = {}) {
    OptimizeResult res;
    res.control = initial;
    double prev_cost = std::numeric_limits<double>::infinity();
    int rises = 0;

    for (int it = 0; it < opts.max_outer; ++it) {
        const StateEnsemble states =
            solve_forward(space, A, B, coeffs, res.control, x0, noise, opts.threads);
        const AdjointEnsemble adj = solve_bsee_regression(states, A, B, coeffs, cost_spec,
                                                          res.control, noise, opts.basis,
                                                          opts.bsee);
        const CostValue J = cost(states, res.control, cost_spec);
        const double residual =
            smp_residual(states, adj, coeffs, cost_spec, res.control, marks);
        res.trace.push_back({it, J.value, J.stderr_, residual, opts.damping});
        res.final_cost = J;

        if (std::abs(prev_cost - J.value) <= opts.cost_tol * std::max(1.0, std::abs(J.value)) &&
            residual <= opts.residual_tol) {
            res.converged = true;
            return res;
        }
        if (J.value > prev_cost) {
            if (++rises >= 3) {
                res.failure_reason = "cost failed to decrease for three iterations";
                return res;
            }
        } else {
            rises = 0;
        }
        prev_cost = J.value;

        std::vector<MatrixXd> targets(states.paths());
        for (int p = 0; p < states.paths(); ++p)
            targets[p] =
                detail::pathwise_argmin(states, adj, coeffs, cost_spec, res.control, marks, p);
        const ControlLaw fitted = detail::fit_control_class(res.control, states, targets);
        res.control = res.control.blend(fitted, opts.damping);
    }
    res.failure_reason = "outer iteration budget exhausted";
    return res;
}

/// Projected gradient descent in the control's parameter class with Armijo
/// backtracking on the Monte Carlo cost (common noise across trials).
inline OptimizeResult optimize_projected_gradient(
    const GalerkinSpace& space, const OperatorProcess& A, const OperatorProcess& B,
    const CoefficientSet& coeffs, const CostSpec& cost_spec, const MarkSpace& marks,
    const ControlLaw& initial, const VectorXd& x0, const NoiseEnsemble& noise,
    const OptimizeOptions& opts = {}) {
    OptimizeResult res;
    res.control = initial;
    const int n = noise.grid().steps;
    const int U = initial.udim();
    const double dt = noise.grid().dt();
    double step = opts.step0;

    StateEnsemble states = solve_forward(space, A, B, coeffs, res.control, x0, noise, opts.threads);
    CostValue J = cost(states, res.control, cost_spec);

    for (int it = 0; it < opts.max_outer; ++it) {
        const AdjointEnsemble adj = solve_bsee_regression(states, A, B, coeffs, cost_spec,
                                                          res.control, noise, opts.basis,
                                                          opts.bsee);
        const double residual = smp_residual(states, adj, coeffs, cost_spec, res.control, marks);
        res.trace.push_back({it, J.value, J.stderr_, residual, step});
        res.final_cost = J;
        if (residual <= opts.residual_tol) {
            res.converged = true;
            return res;
        }

        // Class gradient of the cost in the law's parameters.
        const int M = states.paths();
        MatrixXd mean_gu = MatrixXd::Zero(n, U);                     // E[H_u] per step
        std::vector<MatrixXd> mean_gux(n, MatrixXd::Zero(U, states.state_dim));
        std::vector<MatrixXd> pathwise;
        if (res.control.kind() == ControlLaw::Kind::tabulated)
            pathwise.assign(M, MatrixXd::Zero(n, U));
        for (int p = 0; p < M; ++p) {
            for (int k = 0; k < n; ++k) {
                const VectorXd g = detail::hamiltonian_grad_u(states, adj, coeffs, cost_spec,
                                                              res.control, marks, p, k);
                mean_gu.row(k) += g.transpose() / M;
                if (res.control.kind() == ControlLaw::Kind::linear_feedback)
                    mean_gux[k] += g * states.state(p, k).transpose() / M;
                if (res.control.kind() == ControlLaw::Kind::tabulated)
                    pathwise[p].row(k) = g.transpose();
            }
        }
        double grad_sq = 0.0;
        if (res.control.kind() == ControlLaw::Kind::tabulated) {
            for (const auto& g : pathwise) grad_sq += g.squaredNorm() * dt / M;
        } else {
            grad_sq += mean_gu.squaredNorm() * dt;
            if (res.control.kind() == ControlLaw::Kind::linear_feedback)
                for (const auto& g : mean_gux) grad_sq += g.squaredNorm() * dt;
        }

        auto stepped = [&](double gamma) {
            ControlLaw law = res.control;
            switch (res.control.kind()) {
                case ControlLaw::Kind::open_loop: {
                    MatrixXd table = res.control.open_table() - gamma * mean_gu;
                    if (res.control.has_box())
                        for (int k = 0; k < n; ++k)
                            table.row(k) = res.control.project(table.row(k).transpose()).transpose();
                    law = ControlLaw::open_loop(std::move(table));
                    break;
                }
                case ControlLaw::Kind::linear_feedback: {
                    std::vector<MatrixXd> gains = res.control.gains();
                    std::vector<VectorXd> offsets = res.control.offsets();
                    for (int k = 0; k < n; ++k) {
                        gains[k] -= gamma * mean_gux[k];
                        offsets[k] -= gamma * mean_gu.row(k).transpose();
                    }
                    law = ControlLaw::linear_feedback(std::move(gains), std::move(offsets));
                    break;
                }
                case ControlLaw::Kind::tabulated: {
                    std::vector<MatrixXd> tabs = res.control.tables();
                    for (int p = 0; p < M; ++p) tabs[p] -= gamma * pathwise[p];
                    law = ControlLaw::tabulated(states, U, [&](int p, int k, const auto&) {
                        return tabs[p].row(k).transpose();
                    });
                    break;
                }
            }
            return res.control.has_box() ? law.with_box(res.control.box_lo(), res.control.box_hi())
                                         : law;
        };

        bool accepted = false;
        double gamma = step;
        while (gamma >= opts.step_min) {
            const ControlLaw trial = stepped(gamma);
            const StateEnsemble trial_states =
                solve_forward(space, A, B, coeffs, trial, x0, noise, opts.threads);
            const CostValue trial_J = cost(trial_states, trial, cost_spec);
            if (trial_J.value <= J.value - opts.armijo * gamma * grad_sq) {
                res.control = trial;
                states = trial_states;
                J = trial_J;
                step = gamma * 2.0;  // optimistic growth, re-shrunk as needed
                accepted = true;
                break;
            }
            gamma *= opts.step_shrink;
        }
        if (!accepted) {
            res.failure_reason = "line search step underflow";
            res.final_cost = J;
            return res;
        }
    }
    res.failure_reason = "outer iteration budget exhausted";
    return res;
}

struct VerificationReport {
    bool convexity_ok = false;
    bool stationarity_ok = false;
    bool optimality_ok = false;
    double worst_convexity_violation = 0.0;
    double residual = 0.0;
    double worst_perturbation_z = 0.0;  ///< min over perturbations of mean dJ / stderr dJ
    bool all_ok() const { return convexity_ok && stationarity_ok && optimality_ok; }
};

struct VerificationOptions {
    int convexity_probes = 64;
    int perturbation_count = 20;
    std::vector<double> perturbation_scales{0.1, 0.3};
    double stationarity_tol = 1e-2;
    double convexity_tol = 1e-9;
    std::uint64_t seed = 1234;
    RegressionBasis basis{1};
    BseeOptions bsee{};
    int threads = 1;
};

/// Sufficient-condition audit for a candidate control:
///  (i)  midpoint convexity of H in (x,u) at the candidate's adjoints, and
///       of the terminal cost in x, on random probe pairs;
///  (ii) stationarity: the maximum-principle defect is below tolerance;
///  (iii) empirical optimality: random admissible perturbations of the
///        candidate never beat its cost by more than three paired standard
///        errors on common noise.
inline VerificationReport verification_check(
    const GalerkinSpace& space, const OperatorProcess& A, const OperatorProcess& B,
    const CoefficientSet& coeffs, const CostSpec& cost_spec, const MarkSpace& marks,
    const ControlLaw& candidate, const VectorXd& x0, const NoiseEnsemble& noise,
    const VerificationOptions& opts = {}) {
    VerificationReport rep;
    const StateEnsemble states =
        solve_forward(space, A, B, coeffs, candidate, x0, noise, opts.threads);
    const AdjointEnsemble adj = solve_bsee_regression(states, A, B, coeffs, cost_spec, candidate,
                                                      noise, opts.basis, opts.bsee);
    const TimeGrid& grid = noise.grid();
    const int n = grid.steps;
    const int N = space.dim;
    const int U = candidate.udim();
    const int M = states.paths();

    // Probe scale tied to the ensemble so probes live where the paths do.
    double scale = 0.0;
    for (int p = 0; p < M; ++p) scale = std::max(scale, states.values[p].cwiseAbs().maxCoeff());
    scale = std::max(scale, 1.0);

    // (i) midpoint convexity.
    const std::uint64_t cseed = rng::substream_seed(opts.seed, 0x636F6E76);
    double worst = 0.0;
    for (int j = 0; j < opts.convexity_probes; ++j) {
        VectorXd x1(N), x2(N), u1(U), u2(U);
        for (int i = 0; i < N; ++i) {
            x1[i] = scale * rng::draw_normal(cseed, j, i, 0);
            x2[i] = scale * rng::draw_normal(cseed, j, i, 1);
        }
        for (int i = 0; i < U; ++i) {
            u1[i] = scale * rng::draw_normal(cseed, j, i, 2);
            u2[i] = scale * rng::draw_normal(cseed, j, i, 3);
        }
        const int p = static_cast<int>(rng::draw_uniform(cseed, j, 0, 4) * M) % M;
        const int k = static_cast<int>(rng::draw_uniform(cseed, j, 1, 4) * n) % n;
        const double t = grid.time(k);
        std::vector<VectorXd> r(marks.size());
        for (int i = 0; i < marks.size(); ++i) r[i] = adj.r_at(p, k, i);
        const VectorXd pk = adj.p_at(p, k);
        const VectorXd qk = adj.q_at(p, k);
        const double h1 = hamiltonian(t, x1, u1, pk, qk, r, coeffs, cost_spec, marks).value;
        const double h2 = hamiltonian(t, x2, u2, pk, qk, r, coeffs, cost_spec, marks).value;
        const double hm = hamiltonian(t, (0.5 * (x1 + x2)).eval(), (0.5 * (u1 + u2)).eval(), pk,
                                      qk, r, coeffs, cost_spec, marks)
                              .value;
        worst = std::max(worst, hm - 0.5 * (h1 + h2));
        const double f1 = cost_spec.terminal(x1);
        const double f2 = cost_spec.terminal(x2);
        const double fm = cost_spec.terminal((0.5 * (x1 + x2)).eval());
        worst = std::max(worst, fm - 0.5 * (f1 + f2));
    }
    rep.worst_convexity_violation = worst;
    rep.convexity_ok = worst <= opts.convexity_tol * scale * scale;

    // (ii) stationarity.
    rep.residual = smp_residual(states, adj, coeffs, cost_spec, candidate, marks);
    rep.stationarity_ok = rep.residual <= opts.stationarity_tol;

    // (iii) perturbation optimality on common noise.
    const std::uint64_t pseed = rng::substream_seed(opts.seed, 0x70657274);
    std::vector<double> cand_cost(M);
    for (int p = 0; p < M; ++p) {
        double b = 0.0;
        for (int k = 0; k < n; ++k) {
            const VectorXd xc = states.state(p, k);
            b += cost_spec.l(grid.time(k), xc, candidate.value(p, k, xc)) * grid.dt();
        }
        cand_cost[p] = b + cost_spec.terminal(states.state(p, n));
    }
    double worst_z = std::numeric_limits<double>::infinity();
    bool opt_ok = true;
    for (int j = 0; j < opts.perturbation_count; ++j) {
        const double del = opts.perturbation_scales[j % opts.perturbation_scales.size()];
        MatrixXd bump(n, U);
        for (int k = 0; k < n; ++k)
            for (int i = 0; i < U; ++i) bump(k, i) = del * rng::draw_normal(pseed, j, k, i);
        const ControlLaw perturbed = candidate.shifted(bump);
        const StateEnsemble ps =
            solve_forward(space, A, B, coeffs, perturbed, x0, noise, opts.threads);
        std::vector<double> dj(M);
        for (int p = 0; p < M; ++p) {
            double a = 0.0;
            for (int k = 0; k < n; ++k) {
                const VectorXd xp = ps.state(p, k);
                a += cost_spec.l(grid.time(k), xp, perturbed.value(p, k, xp)) * grid.dt();
            }
            a += cost_spec.terminal(ps.state(p, n));
            dj[p] = a - cand_cost[p];  // perturbed minus candidate
        }
        const auto ms = mean_stderr(dj);
        const double z = ms.stderr_ > 0 ? ms.mean / ms.stderr_ : 0.0;
        worst_z = std::min(worst_z, z);
        if (ms.mean < -3.0 * ms.stderr_) opt_ok = false;
    }
    rep.worst_perturbation_z = worst_z;
    rep.optimality_ok = opt_ok;
    return rep;
}

}  // namespace seectl
