#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <tuple>
#include <vector>

#include "seectl/errors.hpp"
#include "seectl/noise.hpp"
#include "seectl/parallel.hpp"
#include "seectl/problem.hpp"

namespace seectl {

namespace detail {

/// Implicit-step factorizations (I - dt*A(t_{k+1}))^{-1}, one per distinct
/// step matrix, with a singularity check up front.
class ImplicitStepSolver {
public:
    ImplicitStepSolver(const OperatorProcess& A, const TimeGrid& grid) {
        const int N = A.dim();
        const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(N, N);
        const int count = A.time_invariant ? 1 : grid.steps;
        lus_.reserve(count);
        for (int k = 0; k < count; ++k) {
            const Eigen::MatrixXd m = I - grid.dt() * A.at(A.time_invariant ? 0 : k + 1);
            Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
            if (!lu.isInvertible())
                throw SolverError("implicit step matrix is singular", k + 1);
            lus_.push_back(std::move(lu));
        }
        invariant_ = A.time_invariant;
    }

    VectorXd solve(int k, const VectorXd& rhs) const {
        return lus_[invariant_ ? 0 : k].solve(rhs);
    }

private:
    std::vector<Eigen::FullPivLU<Eigen::MatrixXd>> lus_;
    bool invariant_ = true;
};

constexpr double kBlowupGuard = 1e8;

/// One drift-implicit Euler pass over the whole ensemble with caller-chosen
/// state/control-dependent drivers:
///   (I - dt A(t_{k+1})) X_{k+1} = X_k + b_k dt + (B(t_k) X_k + g_k) dW_k
///                                 + sum_i s_{k,i} (dN_{k,i} - nu_i dt).
/// `drivers(p, k, x)` returns (b_k, g_k, [s_{k,i}]) evaluated on path p.
template <typename DriverFn>
StateEnsemble euler_sweep(const OperatorProcess& A, const OperatorProcess& B,
                          const VectorXd& x0, const NoiseEnsemble& noise,
                          DriverFn&& drivers, int threads = 1) {
    const TimeGrid& grid = noise.grid();
    const int n = grid.steps;
    const int N = static_cast<int>(x0.size());
    const int m = noise.marks().size();
    const double dt = grid.dt();
    const ImplicitStepSolver stepper(A, grid);

    StateEnsemble out;
    out.grid = grid;
    out.state_dim = N;
    out.values.assign(noise.paths(), Eigen::MatrixXd(n + 1, N));

    parallel_for(static_cast<std::size_t>(noise.paths()), threads,
                 [&](std::size_t lo, std::size_t hi) {
                     for (std::size_t p = lo; p < hi; ++p) {
                         Eigen::MatrixXd& path = out.values[p];
                         VectorXd x = x0;
                         path.row(0) = x.transpose();
                         for (int k = 0; k < n; ++k) {
                             const auto [b, g, s] = drivers(static_cast<int>(p), k, x);
                             VectorXd rhs = x + dt * b + noise.dw(static_cast<int>(p), k) *
                                                             (B.at(k) * x + g);
                             for (int i = 0; i < m; ++i) {
                                 const double dcomp =
                                     static_cast<double>(noise.jumps(static_cast<int>(p), k, i)) -
                                     noise.marks().intensities[i] * dt;
                                 rhs += s[i] * dcomp;
                             }
                             x = stepper.solve(k, rhs);
                             if (!(x.norm() < kBlowupGuard))
                                 throw SolverError("state blow-up guard tripped", k + 1,
                                                   static_cast<long>(p));
                             path.row(k + 1) = x.transpose();
                         }
                     }
                 });
    return out;
}

struct DriverEval {
    VectorXd b, g;
    std::vector<VectorXd> sigma;
};

}  // namespace detail

/// Drift-implicit Euler solution of the controlled equation on the given
/// noise ensemble.
inline StateEnsemble solve_forward(const GalerkinSpace& space, const OperatorProcess& A,
                                   const OperatorProcess& B, const CoefficientSet& coeffs,
                                   const ControlLaw& control, const VectorXd& x0,
                                   const NoiseEnsemble& noise, int threads = 1) {
    if (x0.size() != space.dim) throw ConfigError("solve_forward: x0 has wrong dimension");
    if (A.dim() != space.dim || B.dim() != space.dim)
        throw ConfigError("solve_forward: operator dimension mismatch");
    if (control.steps() < noise.grid().steps)
        throw ConfigError("solve_forward: control is shorter than the grid");
    const int m = noise.marks().size();
    auto drivers = [&](int p, int k, const VectorXd& x) {
        const double t = noise.grid().time(k);
        const VectorXd u = control.value(p, k, x);
        std::tuple<VectorXd, VectorXd, std::vector<VectorXd>> out{
            coeffs.b(t, x, u), coeffs.g(t, x, u), {}};
        auto& s = std::get<2>(out);
        s.reserve(m);
        for (int i = 0; i < m; ++i) s.push_back(coeffs.sigma(t, i, x, u));
        return out;
    };
    return detail::euler_sweep(A, B, x0, noise, drivers, threads);
}

/// Pathwise audit of the discrete energy identity: the magnitude of
///   ||X_n||^2 - ||x0||^2
///   - sum_k 2<A(t_{k+1}) X_{k+1} + b_k, X_k> dt
///   - sum_k 2 (B_k X_k + g_k, X_k) dW_k  - sum_k ||B_k X_k + g_k||^2 dt
///   - sum_k sum_i [ ||s_{k,i}||^2 + 2 (X_k, s_{k,i}) ] (dN_{k,i} - nu_i dt)
///   - sum_k sum_i ||s_{k,i}||^2 nu_i dt.
/// Zero dynamics give exactly zero; otherwise the residual shrinks with dt.
inline double ito_energy_audit(const StateEnsemble& states, const OperatorProcess& A,
                               const OperatorProcess& B, const CoefficientSet& coeffs,
                               const ControlLaw& control, const NoiseEnsemble& noise,
                               int path) {
    if (path < 0 || path >= states.paths())
        throw ConfigError("ito_energy_audit: path out of range");
    const TimeGrid& grid = states.grid;
    const double dt = grid.dt();
    const int n = grid.steps;
    const int m = noise.marks().size();

    const VectorXd x0 = states.state(path, 0);
    double acc = states.state(path, n).squaredNorm() - x0.squaredNorm();
    for (int k = 0; k < n; ++k) {
        const double t = grid.time(k);
        const VectorXd xk = states.state(path, k);
        const VectorXd xk1 = states.state(path, k + 1);
        const VectorXd u = control.value(path, k, xk);
        const VectorXd drift = A.at(k + 1) * xk1 + coeffs.b(t, xk, u);
        const VectorXd diff = B.at(k) * xk + coeffs.g(t, xk, u);
        acc -= 2.0 * drift.dot(xk) * dt;
        acc -= 2.0 * diff.dot(xk) * noise.dw(path, k);
        acc -= diff.squaredNorm() * dt;
        for (int i = 0; i < m; ++i) {
            const VectorXd s = coeffs.sigma(t, i, xk, u);
            const double nu = noise.marks().intensities[i];
            const double dcomp = static_cast<double>(noise.jumps(path, k, i)) - nu * dt;
            acc -= (s.squaredNorm() + 2.0 * xk.dot(s)) * dcomp;
            acc -= s.squaredNorm() * nu * dt;
        }
    }
    return std::abs(acc);
}

struct EstimateReport {
    double sup_h_sq = 0.0;    ///< E sup_k ||X_k||_H^2
    double int_v_sq = 0.0;    ///< E int ||X||_V^2 dt
    double driver_mass = 0.0; ///< ||x0||^2 + E int (||b(0)||^2 + ||g(0)||^2 + jump mass) dt
    double ratio = 0.0;
};

/// Second-moment bound audit: solution mass over data mass.  The driver is
/// evaluated at the spatial origin under the same control law.
inline EstimateReport estimate_apriori(const StateEnsemble& states, const GalerkinSpace& space,
                                       const CoefficientSet& coeffs, const ControlLaw& control,
                                       const MarkSpace& marks) {
    const TimeGrid& grid = states.grid;
    const double dt = grid.dt();
    const int n = grid.steps;
    const int M = states.paths();
    const VectorXd origin = VectorXd::Zero(space.dim);

    std::vector<double> sup(M), intv(M), drv(M);
    for (int p = 0; p < M; ++p) {
        double s = 0.0, iv = 0.0, dm = 0.0;
        for (int k = 0; k <= n; ++k) {
            const VectorXd x = states.state(p, k);
            s = std::max(s, space.h_norm_sq(x));
            if (k < n) {
                iv += space.v_norm_sq(x) * dt;
                const double t = grid.time(k);
                const VectorXd u = control.value(p, k, origin);
                double jm = 0.0;
                for (int i = 0; i < marks.size(); ++i)
                    jm += marks.intensities[i] * coeffs.sigma(t, i, origin, u).squaredNorm();
                dm += (coeffs.b(t, origin, u).squaredNorm() +
                       coeffs.g(t, origin, u).squaredNorm() + jm) *
                      dt;
            }
        }
        sup[p] = s;
        intv[p] = iv;
        drv[p] = dm;
    }

    EstimateReport rep;
    rep.sup_h_sq = pairwise_sum(sup) / M;
    rep.int_v_sq = pairwise_sum(intv) / M;
    rep.driver_mass = states.state(0, 0).squaredNorm() + pairwise_sum(drv) / M;
    rep.ratio = (rep.sup_h_sq + rep.int_v_sq) / std::max(rep.driver_mass, 1e-12);
    return rep;
}

/// Additive perturbation direction for the dependence experiment.
struct PerturbationDirection {
    CoefficientSet delta;  ///< added to (b, g, sigma) scaled by each delta
    VectorXd dx0;          ///< added to x0 scaled by each delta
};

struct DependenceRow {
    double delta = 0.0;
    double sup_diff = 0.0;   ///< E sup_k ||X - X'||_H^2
    double intv_diff = 0.0;  ///< E int ||X - X'||_V^2 dt
    double data_term = 0.0;  ///< perturbation mass along the perturbed path
};

/// Coefficients shifted by delta times a direction.
inline CoefficientSet perturb_coefficients(const CoefficientSet& base,
                                           const CoefficientSet& dir, double delta) {
    CoefficientSet c = base;
    auto bb = base.b, db = dir.b;
    c.b = [bb, db, delta](double t, const VectorXd& x, const VectorXd& u) {
        return (bb(t, x, u) + delta * db(t, x, u)).eval();
    };
    auto bg = base.g, dg = dir.g;
    c.g = [bg, dg, delta](double t, const VectorXd& x, const VectorXd& u) {
        return (bg(t, x, u) + delta * dg(t, x, u)).eval();
    };
    auto bs = base.sigma, ds = dir.sigma;
    c.sigma = [bs, ds, delta](double t, int i, const VectorXd& x, const VectorXd& u) {
        return (bs(t, i, x, u) + delta * ds(t, i, x, u)).eval();
    };
    auto bbx = base.b_x, dbx = dir.b_x;
    c.b_x = [bbx, dbx, delta](double t, const VectorXd& x, const VectorXd& u) {
        return (bbx(t, x, u) + delta * dbx(t, x, u)).eval();
    };
    auto bgx = base.g_x, dgx = dir.g_x;
    c.g_x = [bgx, dgx, delta](double t, const VectorXd& x, const VectorXd& u) {
        return (bgx(t, x, u) + delta * dgx(t, x, u)).eval();
    };
    auto bsx = base.sigma_x, dsx = dir.sigma_x;
    c.sigma_x = [bsx, dsx, delta](double t, int i, const VectorXd& x, const VectorXd& u) {
        return (bsx(t, i, x, u) + delta * dsx(t, i, x, u)).eval();
    };
    auto bbu = base.b_u, dbu = dir.b_u;
    c.b_u = [bbu, dbu, delta](double t, const VectorXd& x, const VectorXd& u) {
        return (bbu(t, x, u) + delta * dbu(t, x, u)).eval();
    };
    auto bgu = base.g_u, dgu = dir.g_u;
    c.g_u = [bgu, dgu, delta](double t, const VectorXd& x, const VectorXd& u) {
        return (bgu(t, x, u) + delta * dgu(t, x, u)).eval();
    };
    auto bsu = base.sigma_u, dsu = dir.sigma_u;
    c.sigma_u = [bsu, dsu, delta](double t, int i, const VectorXd& x, const VectorXd& u) {
        return (bsu(t, i, x, u) + delta * dsu(t, i, x, u)).eval();
    };
    return c;
}

/// Coupled-path dependence sweep: solves the base and perturbed equations on
/// the same noise for each scale and reports difference masses against the
/// perturbation's own data mass.  With Lipschitz coefficients the difference
/// masses scale as delta^2 (log-log slope 2).
inline std::vector<DependenceRow> continuous_dependence_experiment(
    const GalerkinSpace& space, const OperatorProcess& A, const OperatorProcess& B,
    const CoefficientSet& coeffs, const ControlLaw& control, const VectorXd& x0,
    const PerturbationDirection& dir, const std::vector<double>& deltas,
    const NoiseEnsemble& noise, int threads = 1) {
    const TimeGrid& grid = noise.grid();
    const double dt = grid.dt();
    const int n = grid.steps;
    const int M = noise.paths();

    const StateEnsemble base = solve_forward(space, A, B, coeffs, control, x0, noise, threads);

    std::vector<DependenceRow> rows;
    for (double d : deltas) {
        const CoefficientSet pc = perturb_coefficients(coeffs, dir.delta, d);
        const VectorXd px0 = x0 + d * dir.dx0;
        const StateEnsemble pert = solve_forward(space, A, B, pc, control, px0, noise, threads);

        std::vector<double> sup(M), intv(M), data(M);
        for (int p = 0; p < M; ++p) {
            double s = 0.0, iv = 0.0, dm = 0.0;
            for (int k = 0; k <= n; ++k) {
                const VectorXd diff = base.state(p, k) - pert.state(p, k);
                s = std::max(s, space.h_norm_sq(diff));
                if (k < n) {
                    iv += space.v_norm_sq(diff) * dt;
                    const double t = grid.time(k);
                    const VectorXd xb = pert.state(p, k);
                    const VectorXd u = control.value(p, k, xb);
                    double jm = 0.0;
                    for (int i = 0; i < noise.marks().size(); ++i)
                        jm += noise.marks().intensities[i] *
                              (d * dir.delta.sigma(t, i, xb, u)).squaredNorm();
                    dm += ((d * dir.delta.b(t, xb, u)).squaredNorm() +
                           (d * dir.delta.g(t, xb, u)).squaredNorm() + jm) *
                          dt;
                }
            }
            sup[p] = s;
            intv[p] = iv;
            data[p] = dm;
        }
        DependenceRow row;
        row.delta = d;
        row.sup_diff = pairwise_sum(sup) / M;
        row.intv_diff = pairwise_sum(intv) / M;
        row.data_term = (d * dir.dx0).squaredNorm() + pairwise_sum(data) / M;
        rows.push_back(row);
    }
    return rows;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw ConfigError("loglog_slope: need matching samples");
    const int n = static_cast<int>(xs.size());
    double mx = 0, my = 0;
    std::vector<double> lx(n), ly(n);
    for (int i = 0; i < n; ++i) {
        lx[i] = std::log(xs[i]);
        ly[i] = std::log(ys[i]);
        mx += lx[i] / n;
        my += ly[i] / n;
    }
    double num = 0, den = 0;
    for (int i = 0; i < n; ++i) {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    return num / den;
}

struct PicardResult {
    StateEnsemble states;
    /// Iterate distances per continuation stage (first entry of a stage is
    /// the jump caused by advancing the parameter).
    std::vector<std::vector<double>> stage_distances;
    /// Worst geometric-mean contraction ratio over stages.
    double contraction_ratio = 0.0;
    int total_iterations = 0;
};

/// Constructive solution by parameter extension: the nonlinearity is scaled
/// by rho advancing 0 -> 1 in equal stages.  At each stage the map
/// "freeze (b,g,sigma) and the control at the previous iterate, solve the
/// linear equation with those state-independent drivers" is iterated until
/// the ensemble distance  sqrt(E sum_k ||X_k - X'_k||_V^2 dt)  falls below
/// tol; each stage warm-starts from the previous one.  The fixed point
/// satisfies the same recursion as solve_forward, so both agree at tol.
inline PicardResult solve_forward_picard(const GalerkinSpace& space, const OperatorProcess& A,
                                         const OperatorProcess& B, const CoefficientSet& coeffs,
                                         const ControlLaw& control, const VectorXd& x0,
                                         const NoiseEnsemble& noise, int rho_steps = 4,
                                         double tol = 1e-8, int max_iter = 60,
                                         int threads = 1) {
    if (rho_steps < 1) throw ConfigError("solve_forward_picard: rho_steps must be >= 1");
    const TimeGrid& grid = noise.grid();
    const int n = grid.steps;
    const int m = noise.marks().size();
    const int M = noise.paths();
    const double dt = grid.dt();

    auto ensemble_distance = [&](const StateEnsemble& a, const StateEnsemble& b) {
        std::vector<double> per(M);
        for (int p = 0; p < M; ++p) {
            double s = 0.0;
            for (int k = 1; k <= n; ++k)
                s += space.v_norm_sq(a.state(p, k) - b.state(p, k)) * dt;
            per[p] = s;
        }
        return std::sqrt(pairwise_sum(per) / M);
    };

    // Solve the linear equation with drivers frozen along `frozen`, scaled by rho.
    auto frozen_solve = [&](const StateEnsemble& frozen, double rho) {
        auto drivers = [&](int p, int k, const VectorXd&) {
            const double t = grid.time(k);
            const VectorXd xf = frozen.state(p, k);
            const VectorXd u = control.value(p, k, xf);
            std::tuple<VectorXd, VectorXd, std::vector<VectorXd>> out{
                (rho * coeffs.b(t, xf, u)).eval(), (rho * coeffs.g(t, xf, u)).eval(), {}};
            auto& s = std::get<2>(out);
            for (int i = 0; i < m; ++i) s.push_back((rho * coeffs.sigma(t, i, xf, u)).eval());
            return out;
        };
        return detail::euler_sweep(A, B, x0, noise, drivers, threads);
    };

    PicardResult res;
    // rho = 0: the purely linear equation, solvable outright.
    StateEnsemble current = frozen_solve(
        StateEnsemble{grid, space.dim,
                      std::vector<Eigen::MatrixXd>(M, x0.transpose().replicate(n + 1, 1))},
        0.0);
    res.contraction_ratio = 0.0;

    for (int stage = 1; stage <= rho_steps; ++stage) {
        const double rho = static_cast<double>(stage) / rho_steps;
        std::vector<double> trace;
        double prev_dist = -1.0;
        bool converged = false;
        for (int it = 0; it < max_iter; ++it) {
            StateEnsemble next = frozen_solve(current, rho);
            const double d = ensemble_distance(next, current);
            trace.push_back(d);
            current = std::move(next);
            ++res.total_iterations;
            if (d < tol) {
                converged = true;
                break;
            }
            if (prev_dist > 0.0 && d >= prev_dist)
                throw SolverError("fixed-point iteration is not contracting", stage);
            prev_dist = d;
        }
        if (!converged)
            throw SolverError("fixed-point iteration exhausted max_iter", stage);
        // Geometric-mean ratio of consecutive distances above the noise floor.
        double lg = 0.0;
        int cnt = 0;
        for (std::size_t i = 1; i < trace.size(); ++i) {
            if (trace[i - 1] > 100.0 * tol) {
                lg += std::log(trace[i] / trace[i - 1]);
                ++cnt;
            }
        }
        if (cnt > 0) res.contraction_ratio = std::max(res.contraction_ratio, std::exp(lg / cnt));
        res.stage_distances.push_back(std::move(trace));
    }
    res.states = std::move(current);
    return res;
}

}  // namespace seectl
