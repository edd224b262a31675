#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "seectl/errors.hpp"
#include "seectl/grid.hpp"
#include "seectl/rng.hpp"

namespace seectl {

/// Scalar coefficient of time and space, e.g. a(t,z).
using Coefficient = std::function<double(double, double)>;

inline Coefficient constant_coefficient(double v) {
    return [v](double, double) { return v; };
}

/// Finite-dimensional model of a densely embedded space chain
/// V subset H subset V*.  Coordinates are orthonormal in H; the V and V*
/// norms are weighted Euclidean norms with weights w_i >= 1, so
/// ||x||_{V*} <= ||x||_H <= ||x||_V holds pointwise.
struct GalerkinSpace {
    int dim = 0;
    double length = 0.0;            ///< spatial period
    Eigen::VectorXd wavenumbers;    ///< kappa_i per coordinate
    Eigen::VectorXd weights;        ///< w_i = 1 + kappa_i^2

    double h_norm_sq(const Eigen::VectorXd& x) const { return x.squaredNorm(); }
    double v_norm_sq(const Eigen::VectorXd& x) const {
        return (weights.array() * x.array().square()).sum();
    }
    double vstar_norm_sq(const Eigen::VectorXd& x) const {
        return (x.array().square() / weights.array()).sum();
    }

    /// Orthonormal basis value at z: {1, sin(k_1 z), cos(k_1 z), ...} scaled
    /// to unit H-norm over one period.
    double basis_value(int i, double z) const {
        const double amp = std::sqrt(2.0 / length);
        if (i == 0) return 1.0 / std::sqrt(length);
        const double k = wavenumbers[i];
        return (i % 2 == 1) ? amp * std::sin(k * z) : amp * std::cos(k * z);
    }

    double basis_derivative(int i, double z) const {
        const double amp = std::sqrt(2.0 / length);
        if (i == 0) return 0.0;
        const double k = wavenumbers[i];
        return (i % 2 == 1) ? amp * k * std::cos(k * z) : -amp * k * std::sin(k * z);
    }
};

/// Real trigonometric basis on a circle of circumference `length`, truncated
/// to `modes` functions enumerated {constant, sin k_1, cos k_1, sin k_2, ...}
/// with k_j = 2*pi*j/length.  Only spatial dimension 1 is supported.
inline GalerkinSpace build_fourier_space(int space_dim, int modes, double length) {
    if (space_dim != 1) throw ConfigError("build_fourier_space: only dimension 1 is supported");
    if (modes < 1) throw ConfigError("build_fourier_space: need at least one mode");
    if (!(length > 0.0)) throw ConfigError("build_fourier_space: length must be positive");
    GalerkinSpace s;
    s.dim = modes;
    s.length = length;
    s.wavenumbers.resize(modes);
    s.weights.resize(modes);
    for (int i = 0; i < modes; ++i) {
        const int j = (i + 1) / 2;  // harmonic index: 0, 1, 1, 2, 2, ...
        const double k = 2.0 * M_PI * j / length;
        s.wavenumbers[i] = k;
        s.weights[i] = 1.0 + k * k;
    }
    return s;
}

/// Time-indexed family of coordinate matrices for a linear operator, plus a
/// uniform norm bound in the role the operator plays (V->V* for the drift
/// part, V->H for the noise part).
struct OperatorProcess {
    std::vector<Eigen::MatrixXd> mats;  ///< one matrix, or steps+1 matrices
    bool time_invariant = true;
    int steps = 0;
    double bound = 0.0;

    const Eigen::MatrixXd& at(int k) const {
        if (time_invariant) return mats.front();
        if (k < 0 || k > steps) throw ConfigError("OperatorProcess: time index out of range");
        return mats[static_cast<std::size_t>(k)];
    }

    int dim() const { return static_cast<int>(mats.front().rows()); }

    static OperatorProcess constant(Eigen::MatrixXd m, int steps, double bound) {
        OperatorProcess op;
        op.mats.push_back(std::move(m));
        op.time_invariant = true;
        op.steps = steps;
        op.bound = bound;
        return op;
    }
};

namespace detail {

/// Nodes for periodic quadrature; uniform sums integrate trigonometric
/// polynomials below the node count exactly.
inline int quadrature_nodes(int modes) { return std::max(64, 8 * modes + 16); }

inline double spectral_norm(const Eigen::MatrixXd& m) {
    return m.jacobiSvd().singularValues()(0);
}

/// Largest singular value of diag(s_left) * M * diag(s_right).
inline double weighted_norm(const Eigen::MatrixXd& m, const Eigen::VectorXd& s_left,
                            const Eigen::VectorXd& s_right) {
    return spectral_norm(s_left.asDiagonal() * m * s_right.asDiagonal());
}

template <typename EntryFn>
OperatorProcess assemble_time_family(const TimeGrid& grid, int dim, EntryFn&& entry,
                                     const std::function<double(const Eigen::MatrixXd&)>& norm) {
    OperatorProcess op;
    op.steps = grid.steps;
    op.bound = 0.0;
    for (int k = 0; k <= grid.steps; ++k) {
        Eigen::MatrixXd m = entry(grid.time(k));
        op.bound = std::max(op.bound, norm(m));
        if (k == 0) {
            op.mats.push_back(std::move(m));
        } else if (op.time_invariant && (m.array() == op.mats.front().array()).all()) {
            continue;
        } else {
            if (op.time_invariant && op.mats.size() == 1) {
                // First time-varying matrix seen: backfill earlier times.
                op.time_invariant = false;
                const Eigen::MatrixXd head = op.mats.front();
                op.mats.assign(static_cast<std::size_t>(k), head);
            }
            op.mats.push_back(std::move(m));
        }
    }
    return op;
}

}  // namespace detail

/// Coordinate matrices of the drift operator
///   phi -> d_z(a(t,z) d_z phi) + b(t,z) d_z phi + c(t,z) phi
/// in the weak (V -> V*) sense: entry (k,l) is the duality pairing
/// <A phi_l, phi_k> = -int a phi_l' phi_k' + int b phi_l' phi_k + int c phi_l phi_k,
/// computed by exact periodic quadrature.  The stored bound is the uniform
/// V -> V* operator norm.
inline OperatorProcess assemble_divergence_operator(const Coefficient& a,
                                                    const Coefficient& b_drift,
                                                    const Coefficient& c,
                                                    const GalerkinSpace& space,
                                                    const TimeGrid& grid) {
    const int N = space.dim;
    const int Q = detail::quadrature_nodes(N);
    const double h = space.length / Q;
    const Eigen::VectorXd inv_sqrt_w = space.weights.array().rsqrt().matrix();

    auto entry = [&](double t) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(N, N);
        for (int q = 0; q < Q; ++q) {
            const double z = q * h;
            const double av = a(t, z);
            const double bv = b_drift(t, z);
            const double cv = c(t, z);
            Eigen::VectorXd phi(N), dphi(N);
            for (int i = 0; i < N; ++i) {
                phi[i] = space.basis_value(i, z);
                dphi[i] = space.basis_derivative(i, z);
            }
            // row k tests against phi_k; column l carries the operator argument
            m.noalias() += h * (phi * (cv * phi.transpose()) + phi * (bv * dphi.transpose()) -
                                dphi * (av * dphi.transpose()));
        }
        return m;
    };
    auto norm = std::function<double(const Eigen::MatrixXd&)>(
        [&](const Eigen::MatrixXd& m) { return detail::weighted_norm(m, inv_sqrt_w, inv_sqrt_w); });
    return detail::assemble_time_family(grid, N, entry, norm);
}

/// Coordinate matrices of the noise operator
///   phi -> d_z(eta(t,z) phi) + rho(t,z) phi
/// as a map V -> H: entry (k,l) = (B phi_l, phi_k)_H
/// = -int eta phi_l phi_k' + int rho phi_l phi_k (derivative moved off eta by
/// periodicity).  The stored bound is the uniform V -> H operator norm.
inline OperatorProcess assemble_noise_operator(const Coefficient& eta,
                                               const Coefficient& rho,
                                               const GalerkinSpace& space,
                                               const TimeGrid& grid) {
    const int N = space.dim;
    const int Q = detail::quadrature_nodes(N);
    const double h = space.length / Q;
    const Eigen::VectorXd inv_sqrt_w = space.weights.array().rsqrt().matrix();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(N);

    auto entry = [&](double t) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(N, N);
        for (int q = 0; q < Q; ++q) {
            const double z = q * h;
            const double ev = eta(t, z);
            const double rv = rho(t, z);
            Eigen::VectorXd phi(N), dphi(N);
            for (int i = 0; i < N; ++i) {
                phi[i] = space.basis_value(i, z);
                dphi[i] = space.basis_derivative(i, z);
            }
            m.noalias() += h * (phi * (rv * phi.transpose()) - dphi * (ev * phi.transpose()));
        }
        return m;
    };
    auto norm = std::function<double(const Eigen::MatrixXd&)>(
        [&](const Eigen::MatrixXd& m) { return detail::weighted_norm(m, ones, inv_sqrt_w); });
    return detail::assemble_time_family(grid, N, entry, norm);
}

/// H-adjoint: matrix transpose at every time.  An involution; the weighted
/// operator norm is invariant under it, so the bound carries over.
inline OperatorProcess adjoint_of(const OperatorProcess& op) {
    OperatorProcess out = op;
    for (auto& m : out.mats) m = Eigen::MatrixXd(m.transpose());
    return out;
}

struct CoercivityReport {
    double alpha = 0.0;
    double lambda_shift = 0.0;
    double min_margin = 0.0;
    bool satisfied = false;
};

/// Searches for the largest alpha such that, for some shift lambda <= 100,
///   -2<A(t)x,x> + lambda ||x||_H^2 - alpha ||x||_V^2 - ||B(t)x||_H^2 >= 0
/// holds at all grid times.  Dissipation can only come from A, so the search
/// interval is (0, 2*bound(A)]; an operator with zero bound is reported
/// unsatisfied.  Feasibility of a candidate alpha is decided exactly through
/// the largest eigenvalue of (M_A + M_A^T) + alpha W + M_B^T M_B; the
/// returned margin is the worst surplus over random unit probes plus all
/// basis vectors at the reported (alpha, lambda).
inline CoercivityReport check_coercivity(const OperatorProcess& A, const OperatorProcess& B,
                                         const GalerkinSpace& space, const TimeGrid& grid,
                                         int probe_count = 64, std::uint64_t seed = 0) {
    constexpr double lambda_cap = 100.0;
    constexpr double margin_tol = 1e-10;
    const int N = space.dim;
    const Eigen::MatrixXd W = space.weights.asDiagonal();

    const bool invariant = A.time_invariant && B.time_invariant;
    const int time_count = invariant ? 1 : grid.steps + 1;

    auto lambda_needed = [&](double alpha) {
        double worst = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < time_count; ++k) {
            const Eigen::MatrixXd& ma = A.at(k);
            const Eigen::MatrixXd& mb = B.at(k);
            const Eigen::MatrixXd form =
                ma + ma.transpose() + alpha * W + mb.transpose() * mb;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(form, Eigen::EigenvaluesOnly);
            worst = std::max(worst, es.eigenvalues().maxCoeff());
        }
        return worst;
    };

    CoercivityReport rep;
    const double cap = 2.0 * A.bound;
    if (!(cap > 0.0)) return rep;

    double alpha;
    if (lambda_needed(cap) <= lambda_cap) {
        alpha = cap;
    } else if (lambda_needed(cap * 1e-12) > lambda_cap) {
        return rep;  // infeasible even with vanishing alpha
    } else {
        double lo = cap * 1e-12, hi = cap;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            (lambda_needed(mid) <= lambda_cap ? lo : hi) = mid;
        }
        alpha = lo;
    }

    const double lambda = std::max(0.0, lambda_needed(alpha));

    // Probe evaluation of the surplus at the chosen constants.
    std::vector<Eigen::VectorXd> probes;
    for (int i = 0; i < N; ++i) probes.push_back(Eigen::VectorXd::Unit(N, i));
    const std::uint64_t probe_seed = rng::substream_seed(seed, 0x70726F6265);
    for (int p = 0; p < probe_count; ++p) {
        Eigen::VectorXd x(N);
        for (int i = 0; i < N; ++i) x[i] = rng::draw_normal(probe_seed, p, i, 0);
        const double nrm = x.norm();
        if (nrm > 0) probes.push_back(x / nrm);
    }

    double margin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < time_count; ++k) {
        const Eigen::MatrixXd& ma = A.at(k);
        const Eigen::MatrixXd& mb = B.at(k);
        for (const auto& x : probes) {
            const double surplus = -2.0 * x.dot(ma * x) + lambda * x.squaredNorm() -
                                   alpha * space.v_norm_sq(x) - (mb * x).squaredNorm();
            margin = std::min(margin, surplus);
        }
    }

    rep.alpha = alpha;
    rep.lambda_shift = lambda;
    rep.min_margin = margin;
    rep.satisfied = alpha > 0.0 && margin >= -margin_tol;
    return rep;
}

/// Pointwise parabolicity audit: kappa + eta(t,z)^2 <= 2 a(t,z) <= upper
/// at every grid time and every sampled z.
inline bool check_superparabolic(const Coefficient& a, const Coefficient& eta, double kappa,
                                 const TimeGrid& grid, int z_samples,
                                 double domain_length = 2.0 * M_PI,
                                 double upper = std::numeric_limits<double>::infinity()) {
    if (!(kappa > 0.0 && kappa < 1.0)) throw ConfigError("check_superparabolic: kappa outside (0,1)");
    if (z_samples < 1) throw ConfigError("check_superparabolic: need z samples");
    for (int k = 0; k <= grid.steps; ++k) {
        const double t = grid.time(k);
        for (int q = 0; q < z_samples; ++q) {
            const double z = domain_length * q / z_samples;
            const double e = eta(t, z);
            const double twoa = 2.0 * a(t, z);
            if (!(kappa + e * e <= twoa && twoa <= upper)) return false;
        }
    }
    return true;
}

}  // namespace seectl
